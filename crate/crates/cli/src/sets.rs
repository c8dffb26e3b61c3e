//! Built-in parameter sets and market constants for the experiment runners.
//!
//! Sets A and B drive the square-root variance (CIR) studies, C and D the
//! Heston studies, and E, F, G the leverage calibration studies. A, C and E
//! share a variance process that stays strictly positive (`q > 0`); the
//! others violate the Feller condition, so `v = 0` is attainable and the
//! discretization switches to its one-sided mixed-derivative variant near
//! the lower variance boundary.

use fvadi::models::{CirParams, HestonParams, PsiKind, SlvParams};

/// Domestic rate of the calibration experiments.
pub const MARKET_RD: f64 = 0.02;
/// Foreign rate of the calibration experiments.
pub const MARKET_RF: f64 = 0.01;
/// Spot underlying the calibration experiments; log-spot runs start at 0.
pub const MARKET_S0: f64 = 1.08815;

/// Moneyness levels `K / S0` of the reported implied-volatility table.
pub const STRIKE_LADDER: [f64; 7] = [0.75, 0.8, 0.9, 1.0, 1.1, 1.2, 1.25];

/// Default coefficients of the synthetic local-volatility smile
/// `sigma_LV(x, tau) = a + b tanh^2(c x)`.
pub const SMILE_A: f64 = 0.12;
pub const SMILE_B: f64 = 0.08;
pub const SMILE_C: f64 = 2.0;

/// Which solver family a parameter set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetKind {
    /// 1D square-root variance process (sets A, B).
    Variance,
    /// 2D Heston density evolution (sets C, D).
    Heston,
    /// Leverage calibration (sets E, F, G).
    Slv,
}

impl SetKind {
    pub fn label(&self) -> &'static str {
        match self {
            SetKind::Variance => "cir",
            SetKind::Heston => "heston",
            SetKind::Slv => "slv",
        }
    }
}

/// Identifier of a built-in parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SetId {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
}

impl SetId {
    pub const ALL: [SetId; 7] = [
        SetId::A,
        SetId::B,
        SetId::C,
        SetId::D,
        SetId::E,
        SetId::F,
        SetId::G,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SetId::A => "A",
            SetId::B => "B",
            SetId::C => "C",
            SetId::D => "D",
            SetId::E => "E",
            SetId::F => "F",
            SetId::G => "G",
        }
    }
}

impl std::str::FromStr for SetId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(SetId::A),
            "B" => Ok(SetId::B),
            "C" => Ok(SetId::C),
            "D" => Ok(SetId::D),
            "E" => Ok(SetId::E),
            "F" => Ok(SetId::F),
            "G" => Ok(SetId::G),
            other => Err(format!(
                "unknown parameter set '{other}' (expected one of A-G)"
            )),
        }
    }
}

impl std::fmt::Display for SetId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One built-in parameter record. Fields absent from a set's definition
/// (rates and spot coordinates for the pure variance sets, rates for the
/// calibration sets, which use the market constants) are `None`.
#[derive(Debug, Clone, Copy)]
pub struct ParamSet {
    pub id: SetId,
    pub kappa: f64,
    pub eta: f64,
    pub xi: f64,
    pub rho: Option<f64>,
    pub rd: Option<f64>,
    pub rf: Option<f64>,
    pub x0: Option<f64>,
    pub v0: f64,
    pub t: f64,
}

impl ParamSet {
    pub fn lookup(id: SetId) -> ParamSet {
        match id {
            SetId::A => ParamSet {
                id,
                kappa: 5.0,
                eta: 0.16,
                xi: 0.9,
                rho: None,
                rd: None,
                rf: None,
                x0: None,
                v0: 0.0625,
                t: 0.25,
            },
            SetId::B => ParamSet {
                id,
                kappa: 1.15,
                eta: 0.0348,
                xi: 0.39,
                rho: None,
                rd: None,
                rf: None,
                x0: None,
                v0: 0.0348,
                t: 0.25,
            },
            SetId::C => ParamSet {
                id,
                kappa: 5.0,
                eta: 0.16,
                xi: 0.9,
                rho: Some(0.1),
                rd: Some(0.1),
                rf: Some(0.0),
                x0: Some(0.0),
                v0: 0.0625,
                t: 0.25,
            },
            SetId::D => ParamSet {
                id,
                kappa: 1.15,
                eta: 0.0348,
                xi: 0.39,
                rho: Some(-0.64),
                rd: Some(0.04),
                rf: Some(0.0),
                x0: Some(0.0),
                v0: 0.0348,
                t: 0.25,
            },
            SetId::E => ParamSet {
                id,
                kappa: 5.0,
                eta: 0.16,
                xi: 0.9,
                rho: Some(0.1),
                rd: None,
                rf: None,
                x0: None,
                v0: 0.0625,
                t: 0.25,
            },
            SetId::F => ParamSet {
                id,
                kappa: 1.15,
                eta: 0.0348,
                xi: 0.39,
                rho: Some(-0.64),
                rd: None,
                rf: None,
                x0: None,
                v0: 0.0348,
                t: 0.25,
            },
            SetId::G => ParamSet {
                id,
                kappa: 1.50,
                eta: 0.0154,
                xi: 0.24,
                rho: Some(-0.11),
                rd: None,
                rf: None,
                x0: None,
                v0: 0.0154,
                t: 1.0,
            },
        }
    }

    pub fn kind(&self) -> SetKind {
        match self.id {
            SetId::A | SetId::B => SetKind::Variance,
            SetId::C | SetId::D => SetKind::Heston,
            SetId::E | SetId::F | SetId::G => SetKind::Slv,
        }
    }

    /// Feller exponent `q = 2 kappa eta / xi^2 - 1` of the variance process.
    pub fn q(&self) -> f64 {
        2.0 * self.kappa * self.eta / (self.xi * self.xi) - 1.0
    }

    /// Variance-process view (valid for every set; C-G embed one).
    pub fn cir(&self) -> CirParams {
        CirParams {
            kappa: self.kappa,
            eta: self.eta,
            xi: self.xi,
            v0: self.v0,
        }
    }

    /// Heston parameter record, for the sets that define rates and a spot.
    pub fn heston(&self) -> Option<HestonParams> {
        match (self.rho, self.rd, self.rf, self.x0) {
            (Some(rho), Some(rd), Some(rf), Some(x0)) => Some(HestonParams {
                kappa: self.kappa,
                eta: self.eta,
                xi: self.xi,
                rho,
                rd,
                rf,
                x0,
                v0: self.v0,
                t: self.t,
            }),
            _ => None,
        }
    }

    /// SLV parameter record under the market rates, for the calibration
    /// sets (square-root volatility weighting, `alpha = 1/2`).
    pub fn slv(&self) -> Option<SlvParams> {
        let rho = self.rho?;
        if self.kind() != SetKind::Slv {
            return None;
        }
        Some(SlvParams {
            kappa: self.kappa,
            eta: self.eta,
            xi: self.xi,
            rho,
            rd: MARKET_RD,
            rf: MARKET_RF,
            x0: 0.0,
            v0: self.v0,
            t: self.t,
            alpha: 0.5,
            psi: PsiKind::SquareRoot,
        })
    }
}

/// Renders the built-in sets as an aligned text table.
pub fn render_table() -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<4} {:<8} {:>6} {:>8} {:>6} {:>6} {:>5} {:>5} {:>4} {:>8} {:>6} {:>7}\n",
        "set", "model", "kappa", "eta", "xi", "rho", "r_d", "r_f", "X0", "V0", "T", "q"
    ));
    let opt = |v: Option<f64>| match v {
        Some(x) => format!("{x}"),
        None => "-".to_string(),
    };
    for id in SetId::ALL {
        let s = ParamSet::lookup(id);
        out.push_str(&format!(
            "{:<4} {:<8} {:>6} {:>8} {:>6} {:>6} {:>5} {:>5} {:>4} {:>8} {:>6} {:>7.2}\n",
            s.id.name(),
            s.kind().label(),
            s.kappa,
            s.eta,
            s.xi,
            opt(s.rho),
            opt(s.rd),
            opt(s.rf),
            opt(s.x0),
            s.v0,
            s.t,
            s.q(),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn feller_exponents_match_published_roundings() {
        assert_abs_diff_eq!(ParamSet::lookup(SetId::A).q(), 0.98, epsilon = 5e-3);
        assert_abs_diff_eq!(ParamSet::lookup(SetId::B).q(), -0.47, epsilon = 5e-3);
        assert_abs_diff_eq!(ParamSet::lookup(SetId::C).q(), 0.98, epsilon = 5e-3);
        assert_abs_diff_eq!(ParamSet::lookup(SetId::D).q(), -0.47, epsilon = 5e-3);
        assert_abs_diff_eq!(ParamSet::lookup(SetId::E).q(), 0.98, epsilon = 5e-3);
        assert_abs_diff_eq!(ParamSet::lookup(SetId::F).q(), -0.47, epsilon = 5e-3);
        assert_abs_diff_eq!(ParamSet::lookup(SetId::G).q(), -0.20, epsilon = 5e-3);
    }

    #[test]
    fn set_rows_carry_the_published_values() {
        let e = ParamSet::lookup(SetId::E);
        assert_eq!(
            (e.kappa, e.eta, e.xi, e.rho, e.t, e.v0),
            (5.0, 0.16, 0.9, Some(0.1), 0.25, 0.0625)
        );
        let c = ParamSet::lookup(SetId::C);
        assert_eq!((c.rd, c.rf, c.x0), (Some(0.1), Some(0.0), Some(0.0)));
        let g = ParamSet::lookup(SetId::G);
        assert_eq!(
            (g.kappa, g.eta, g.xi, g.rho, g.t, g.v0),
            (1.50, 0.0154, 0.24, Some(-0.11), 1.0, 0.0154)
        );
    }

    #[test]
    fn model_views_validate_and_respect_kinds() {
        for id in SetId::ALL {
            let s = ParamSet::lookup(id);
            s.cir().validate().unwrap();
            match s.kind() {
                SetKind::Variance => {
                    assert!(s.heston().is_none());
                    assert!(s.slv().is_none());
                }
                SetKind::Heston => {
                    s.heston().unwrap().validate().unwrap();
                    assert!(s.slv().is_none());
                }
                SetKind::Slv => {
                    let slv = s.slv().unwrap();
                    slv.validate().unwrap();
                    assert_eq!((slv.rd, slv.rf, slv.x0), (MARKET_RD, MARKET_RF, 0.0));
                }
            }
        }
    }

    #[test]
    fn set_ids_parse_case_insensitively() {
        assert_eq!("a".parse::<SetId>().unwrap(), SetId::A);
        assert_eq!(" G ".parse::<SetId>().unwrap(), SetId::G);
        assert!("H".parse::<SetId>().is_err());
        assert!("".parse::<SetId>().is_err());
    }

    #[test]
    fn table_lists_every_set_once() {
        let table = render_table();
        assert_eq!(table.lines().count(), 8);
        for id in SetId::ALL {
            assert!(table
                .lines()
                .any(|l| l.starts_with(id.name()) && l.contains(ParamSet::lookup(id).kind().label())));
        }
    }
}
