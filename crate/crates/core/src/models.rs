//! Benchmark models: validated parameter sets, their drift/diffusion
//! coefficients for the finite-volume assembly, and the closed-form
//! reference densities used to measure spatial accuracy.
//!
//! Every reference density also has a log variant so tail comparisons never
//! run through a premature underflow to zero.

pub mod bessel;

use crate::error::{Error, Result};
use crate::fv1d::Coefficients1D;
use crate::fv2d::Coefficients2D;
use bessel::log_bessel_i;

const LN_2PI: f64 = 1.8378770664093455; // ln(2 pi)

fn require(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParams(msg.into()))
    }
}

/// Geometric Brownian motion `dS = (r_d - r_f) S dtau + sigma S dW` in the
/// spot coordinate.
#[derive(Debug, Clone, Copy)]
pub struct Bs1dParams {
    /// Domestic rate `r_d`.
    pub rd: f64,
    /// Foreign rate `r_f`.
    pub rf: f64,
    /// Volatility, strictly positive.
    pub sigma: f64,
    /// Initial spot, strictly positive.
    pub s0: f64,
}

impl Bs1dParams {
    pub fn validate(&self) -> Result<()> {
        require(self.rd.is_finite() && self.rf.is_finite(), "rates must be finite")?;
        require(
            self.sigma.is_finite() && self.sigma > 0.0,
            format!("sigma must be strictly positive, got {}", self.sigma),
        )?;
        require(
            self.s0.is_finite() && self.s0 > 0.0,
            format!("initial spot must be strictly positive, got {}", self.s0),
        )
    }

    /// Lognormal transition density started from `s0`.
    pub fn exact_density(&self, s: f64, tau: f64) -> Result<f64> {
        self.log_exact_density(s, tau).map(f64::exp)
    }

    /// `ln p(s, tau)`:
    ///
    /// ```text
    /// p(s, tau) = phi( (ln(s/S0) - (r_d - r_f - sigma^2/2) tau)
    ///                  / (sigma sqrt(tau)) ) / (s sigma sqrt(tau))
    /// ```
    pub fn log_exact_density(&self, s: f64, tau: f64) -> Result<f64> {
        self.validate()?;
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lognormal density needs s > 0, got {s}"
            )));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lognormal density needs tau > 0, got {tau}"
            )));
        }
        let sd = self.sigma * tau.sqrt();
        let u = ((s / self.s0).ln() - (self.rd - self.rf - 0.5 * self.sigma * self.sigma) * tau)
            / sd;
        Ok(-0.5 * u * u - 0.5 * LN_2PI - (s * sd).ln())
    }
}

impl Coefficients1D for Bs1dParams {
    fn drift(&self, s: f64, _tau: f64) -> f64 {
        (self.rd - self.rf) * s
    }
    fn diffusion(&self, s: f64, _tau: f64) -> f64 {
        self.sigma * s
    }
}

/// Square-root (CIR) process `dV = kappa (eta - V) dtau + xi sqrt(V) dW`.
#[derive(Debug, Clone, Copy)]
pub struct CirParams {
    /// Mean-reversion speed, strictly positive.
    pub kappa: f64,
    /// Long-run level, strictly positive.
    pub eta: f64,
    /// Volatility of variance, strictly positive.
    pub xi: f64,
    /// Initial value, strictly positive.
    pub v0: f64,
}

impl CirParams {
    pub fn validate(&self) -> Result<()> {
        for (value, name) in [
            (self.kappa, "kappa"),
            (self.eta, "eta"),
            (self.xi, "xi"),
            (self.v0, "v0"),
        ] {
            require(
                value.is_finite() && value > 0.0,
                format!("{name} must be strictly positive, got {value}"),
            )?;
        }
        Ok(())
    }

    /// Exponent `q = 2 kappa eta / xi^2 - 1` governing the boundary behavior
    /// at `v = 0`; `q >= 0` keeps the origin unattainable.
    pub fn boundary_exponent(&self) -> f64 {
        2.0 * self.kappa * self.eta / (self.xi * self.xi) - 1.0
    }

    /// Noncentral-chi-square-shaped transition density started from `v0`:
    ///
    /// ```text
    /// p(v, tau) = c e^(-u0 - u1) (u1/u0)^(q/2) I_q(2 sqrt(u0 u1)),
    /// c  = 2 kappa / (xi^2 (1 - e^(-kappa tau))),
    /// u0 = c V0 e^(-kappa tau),   u1 = c v.
    /// ```
    pub fn exact_density(&self, v: f64, tau: f64) -> Result<f64> {
        self.log_exact_density(v, tau).map(f64::exp)
    }

    /// `ln p(v, tau)`, evaluated fully in log space. At `v = 0` the density
    /// is `0` for `q > 0`, finite for `q = 0`, and undefined for `q < 0`
    /// (it diverges as `v` tends to zero).
    pub fn log_exact_density(&self, v: f64, tau: f64) -> Result<f64> {
        self.validate()?;
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "square-root density needs v >= 0, got {v}"
            )));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "square-root density needs tau > 0, got {tau}"
            )));
        }
        let q = self.boundary_exponent();
        let decay = (-self.kappa * tau).exp();
        let c = 2.0 * self.kappa / (self.xi * self.xi * (1.0 - decay));
        let u0 = c * self.v0 * decay;
        if v == 0.0 {
            return if q > 0.0 {
                Ok(f64::NEG_INFINITY)
            } else if q == 0.0 {
                Ok(c.ln() - u0)
            } else {
                Err(Error::Model(
                    "square-root transition density is undefined at v = 0 when q < 0".into(),
                ))
            };
        }
        let u1 = c * v;
        let log_i = log_bessel_i(q, 2.0 * (u0 * u1).sqrt())?;
        Ok(c.ln() - u0 - u1 + 0.5 * q * (u1.ln() - u0.ln()) + log_i)
    }
}

impl Coefficients1D for CirParams {
    fn drift(&self, v: f64, _tau: f64) -> f64 {
        self.kappa * (self.eta - v)
    }
    fn diffusion(&self, v: f64, _tau: f64) -> f64 {
        self.xi * v.max(0.0).sqrt()
    }
}

/// Two correlated geometric Brownian motions sharing one rate `r`, in spot
/// coordinates.
#[derive(Debug, Clone, Copy)]
pub struct Bs2dParams {
    pub r: f64,
    /// Volatility of the first asset, strictly positive.
    pub sigma1: f64,
    /// Volatility of the second asset, strictly positive.
    pub sigma2: f64,
    /// Brownian correlation in `[-1, 1]`.
    pub rho: f64,
    /// Initial spots, strictly positive.
    pub s10: f64,
    pub s20: f64,
}

impl Bs2dParams {
    pub fn validate(&self) -> Result<()> {
        require(self.r.is_finite(), "rate must be finite")?;
        for (value, name) in [(self.sigma1, "sigma1"), (self.sigma2, "sigma2")] {
            require(
                value.is_finite() && value > 0.0,
                format!("{name} must be strictly positive, got {value}"),
            )?;
        }
        require(
            self.rho.is_finite() && self.rho.abs() <= 1.0,
            format!("correlation must lie in [-1, 1], got {}", self.rho),
        )?;
        for (value, name) in [(self.s10, "s10"), (self.s20, "s20")] {
            require(
                value.is_finite() && value > 0.0,
                format!("{name} must be strictly positive, got {value}"),
            )?;
        }
        Ok(())
    }

    /// Bivariate lognormal transition density,
    ///
    /// ```text
    /// p(s1, s2, tau) = n2( ln(s1/S10), ln(s2/S20), tau ) / (s1 s2),
    /// ```
    ///
    /// where `n2` is the bivariate normal density with mean
    /// `((r - sigma_i^2/2) tau)_i` and covariance
    /// `[[sigma1^2, rho sigma1 sigma2], [rho sigma1 sigma2, sigma2^2]] tau`.
    pub fn exact_density(&self, s1: f64, s2: f64, tau: f64) -> Result<f64> {
        self.log_exact_density(s1, s2, tau).map(f64::exp)
    }

    pub fn log_exact_density(&self, s1: f64, s2: f64, tau: f64) -> Result<f64> {
        self.validate()?;
        if !(s1 > 0.0) || !(s2 > 0.0) || !s1.is_finite() || !s2.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bivariate lognormal density needs s1, s2 > 0, got ({s1}, {s2})"
            )));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bivariate lognormal density needs tau > 0, got {tau}"
            )));
        }
        if self.rho.abs() == 1.0 {
            return Err(Error::Model(
                "perfectly correlated assets have no two-dimensional density".into(),
            ));
        }
        let sd1 = self.sigma1 * tau.sqrt();
        let sd2 = self.sigma2 * tau.sqrt();
        let z1 = ((s1 / self.s10).ln() - (self.r - 0.5 * self.sigma1 * self.sigma1) * tau) / sd1;
        let z2 = ((s2 / self.s20).ln() - (self.r - 0.5 * self.sigma2 * self.sigma2) * tau) / sd2;
        let omr2 = 1.0 - self.rho * self.rho;
        let quad = (z1 * z1 - 2.0 * self.rho * z1 * z2 + z2 * z2) / omr2;
        Ok(-0.5 * quad - LN_2PI - 0.5 * omr2.ln() - (sd1 * sd2 * s1 * s2).ln())
    }
}

impl Coefficients2D for Bs2dParams {
    fn drift_x(&self, s1: f64, _s2: f64, _tau: f64) -> f64 {
        self.r * s1
    }
    fn drift_y(&self, _s1: f64, s2: f64, _tau: f64) -> f64 {
        self.r * s2
    }
    fn diffusion_x(&self, s1: f64, _s2: f64, _tau: f64) -> f64 {
        self.sigma1 * s1
    }
    fn diffusion_y(&self, _s1: f64, s2: f64, _tau: f64) -> f64 {
        self.sigma2 * s2
    }
    fn correlation(&self) -> f64 {
        self.rho
    }
}

/// Heston model in log-spot `x = ln(S/S0)` and variance `v`:
///
/// ```text
/// dX = (r_d - r_f - V/2) dtau + sqrt(V) dW1,
/// dV = kappa (eta - V) dtau + xi sqrt(V) dW2,   dW1 dW2 = rho dtau.
/// ```
#[derive(Debug, Clone, Copy)]
pub struct HestonParams {
    pub kappa: f64,
    pub eta: f64,
    pub xi: f64,
    pub rho: f64,
    pub rd: f64,
    pub rf: f64,
    /// Initial log-spot.
    pub x0: f64,
    /// Initial variance, strictly positive.
    pub v0: f64,
    /// Problem horizon, strictly positive.
    pub t: f64,
}

impl HestonParams {
    pub fn validate(&self) -> Result<()> {
        self.variance_params().validate()?;
        require(
            self.rho.is_finite() && self.rho.abs() <= 1.0,
            format!("correlation must lie in [-1, 1], got {}", self.rho),
        )?;
        require(
            self.rd.is_finite() && self.rf.is_finite() && self.x0.is_finite(),
            "rates and x0 must be finite",
        )?;
        require(
            self.t.is_finite() && self.t > 0.0,
            format!("horizon must be strictly positive, got {}", self.t),
        )
    }

    /// The marginal variance process.
    pub fn variance_params(&self) -> CirParams {
        CirParams {
            kappa: self.kappa,
            eta: self.eta,
            xi: self.xi,
            v0: self.v0,
        }
    }

    /// Whether probability mass can reach `v = 0` (square-root diffusion
    /// with `q < 0`), which switches the mixed-derivative stencil to its
    /// one-sided variant on the lowest interior level.
    pub fn attainable_lower_v(&self) -> bool {
        self.variance_params().boundary_exponent() < 0.0
    }
}

impl Coefficients2D for HestonParams {
    fn drift_x(&self, _x: f64, v: f64, _tau: f64) -> f64 {
        self.rd - self.rf - 0.5 * v
    }
    fn drift_y(&self, _x: f64, v: f64, _tau: f64) -> f64 {
        self.kappa * (self.eta - v)
    }
    fn diffusion_x(&self, _x: f64, v: f64, _tau: f64) -> f64 {
        v.max(0.0).sqrt()
    }
    fn diffusion_y(&self, _x: f64, v: f64, _tau: f64) -> f64 {
        self.xi * v.max(0.0).sqrt()
    }
    fn correlation(&self) -> f64 {
        self.rho
    }
}

/// Volatility weighting `psi(v)` of the stochastic-local-volatility model;
/// both choices vanish at `v = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiKind {
    /// `psi(v) = sqrt(v)`.
    SquareRoot,
    /// `psi(v) = v`.
    Identity,
}

impl PsiKind {
    pub fn eval(&self, v: f64) -> f64 {
        let v = v.max(0.0);
        match self {
            PsiKind::SquareRoot => v.sqrt(),
            PsiKind::Identity => v,
        }
    }
}

/// Stochastic-local-volatility model in log-spot and variance:
///
/// ```text
/// dX = (r_d - r_f - sigma_SLV^2(X, tau) psi^2(V) / 2) dtau
///      + sigma_SLV(X, tau) psi(V) dW1,
/// dV = kappa (eta - V) dtau + xi V^alpha dW2,   dW1 dW2 = rho dtau.
/// ```
#[derive(Debug, Clone, Copy)]
pub struct SlvParams {
    pub kappa: f64,
    pub eta: f64,
    pub xi: f64,
    pub rho: f64,
    pub rd: f64,
    pub rf: f64,
    pub x0: f64,
    pub v0: f64,
    pub t: f64,
    /// Variance diffusion exponent, strictly positive.
    pub alpha: f64,
    pub psi: PsiKind,
}

impl SlvParams {
    pub fn validate(&self) -> Result<()> {
        HestonParams {
            kappa: self.kappa,
            eta: self.eta,
            xi: self.xi,
            rho: self.rho,
            rd: self.rd,
            rf: self.rf,
            x0: self.x0,
            v0: self.v0,
            t: self.t,
        }
        .validate()?;
        require(
            self.alpha.is_finite() && self.alpha > 0.0,
            format!("alpha must be strictly positive, got {}", self.alpha),
        )
    }

    pub fn psi(&self, v: f64) -> f64 {
        self.psi.eval(v)
    }

    /// Boundary exponent of the variance process (meaningful for
    /// `alpha = 1/2`, where the diffusion is of square-root type).
    pub fn boundary_exponent(&self) -> f64 {
        2.0 * self.kappa * self.eta / (self.xi * self.xi) - 1.0
    }

    /// `v = 0` is attainable for `alpha < 1/2` always, and for
    /// `alpha = 1/2` exactly when `q < 0`.
    pub fn attainable_lower_v(&self) -> bool {
        self.alpha < 0.5 || (self.alpha == 0.5 && self.boundary_exponent() < 0.0)
    }

    /// Couples the model to a leverage function `sigma_SLV(x, tau)`.
    /// Negative leverage samples surface as coefficient errors during
    /// operator assembly.
    pub fn coefficients<L>(&self, leverage: L) -> SlvCoefficients<'_, L>
    where
        L: Fn(f64, f64) -> f64,
    {
        SlvCoefficients {
            params: self,
            leverage,
        }
    }
}

/// [`Coefficients2D`] view of an [`SlvParams`] under a given leverage
/// function.
pub struct SlvCoefficients<'a, L>
where
    L: Fn(f64, f64) -> f64,
{
    params: &'a SlvParams,
    leverage: L,
}

impl<L> Coefficients2D for SlvCoefficients<'_, L>
where
    L: Fn(f64, f64) -> f64,
{
    fn drift_x(&self, x: f64, v: f64, tau: f64) -> f64 {
        let sig = (self.leverage)(x, tau);
        let psi = self.params.psi(v);
        self.params.rd - self.params.rf - 0.5 * sig * sig * psi * psi
    }
    fn drift_y(&self, _x: f64, v: f64, _tau: f64) -> f64 {
        self.params.kappa * (self.params.eta - v)
    }
    fn diffusion_x(&self, x: f64, v: f64, tau: f64) -> f64 {
        (self.leverage)(x, tau) * self.params.psi(v)
    }
    fn diffusion_y(&self, _x: f64, v: f64, _tau: f64) -> f64 {
        self.params.xi * v.max(0.0).powf(self.params.alpha)
    }
    fn correlation(&self) -> f64 {
        self.params.rho
    }
}
