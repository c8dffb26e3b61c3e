//! Error metrics, convergence-order estimation, fair values and implied
//! volatilities.
//!
//! The workhorse metric is the mixed absolute/relative error between a
//! reference solution and a numerical one,
//!
//! ```text
//! eps_i = |ref_i - num_i| / |ref_i|   if |ref_i| > crossover,
//!         |ref_i - num_i|             otherwise,
//! ```
//!
//! reported as the maximum over a caller-chosen index set. The relative
//! branch keeps large density peaks honest; the absolute branch avoids
//! dividing by near-zero tails. The crossover defaults to 1.
//!
//! For variance processes that can attain the origin, the error is measured
//! away from the boundary: `v_low` is the smallest strictly positive node of
//! a 50-node grid built with the same stretch settings, and only fine-grid
//! nodes at or above `v_low` enter the maximum.
//!
//! Fair values are discounted quadratures of a terminal density against a
//! payoff,
//!
//! ```text
//! FaV = exp(-r_d T) * sum_i w_i p_i u0(x_i),
//! ```
//!
//! and implied volatilities invert the Black-Scholes call formula
//!
//! ```text
//! C = S0 exp(-r_f T) Phi(d1) - K exp(-r_d T) Phi(d2),
//! d1 = [ln(S0/K) + (r_d - r_f + sigma^2/2) T] / (sigma sqrt(T)),
//! d2 = d1 - sigma sqrt(T),
//! ```
//!
//! by a safeguarded Newton iteration (bisection fallback) that terminates
//! when the price residual is at most 1e-10.

use crate::error::{Error, Result};
use crate::field::DensityField1D;
use crate::grids::NonUniformGrid;
use libm::erfc;

/// Per-node mixed errors over the index set that entered the maximum.
///
/// `errors[k]` is the mixed error at flat index `indices[k]`; `max_error`
/// is their maximum and `max_index` the flat index where it occurs (first
/// occurrence on ties). For 2D fields the flat index follows the
/// column-stacked layout `i + j * m1`.
#[derive(Debug, Clone)]
pub struct MixedErrorReport {
    pub errors: Vec<f64>,
    pub indices: Vec<usize>,
    pub max_error: f64,
    pub max_index: usize,
    pub crossover: f64,
}

/// Mixed absolute/relative error over all nodes.
///
/// Relative where `|reference| > crossover`, absolute elsewhere; see the
/// module docs. Shape mismatches, a non-positive crossover and non-finite
/// entries are rejected.
pub fn mixed_error(reference: &[f64], numeric: &[f64], crossover: f64) -> Result<MixedErrorReport> {
    mixed_error_filtered(reference, numeric, crossover, |_| true)
}

/// Mixed error restricted to the flat indices accepted by `keep`.
///
/// The filter typically encodes the `v_low` cutoff: `|i| i >= j1` in 1D, or
/// `|k| k / m1 >= j1` on a column-stacked 2D field. An all-rejecting filter
/// is an error, so the reported maximum is always over a non-empty set.
pub fn mixed_error_filtered(
    reference: &[f64],
    numeric: &[f64],
    crossover: f64,
    keep: impl Fn(usize) -> bool,
) -> Result<MixedErrorReport> {
    if reference.len() != numeric.len() {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: reference has {} entries, numeric has {}",
            reference.len(),
            numeric.len()
        )));
    }
    if !crossover.is_finite() || crossover <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "crossover must be finite and strictly positive, got {crossover}"
        )));
    }
    let mut errors = Vec::new();
    let mut indices = Vec::new();
    let mut max_error = f64::NEG_INFINITY;
    let mut max_index = 0;
    for (i, (&r, &n)) in reference.iter().zip(numeric).enumerate() {
        if !keep(i) {
            continue;
        }
        if !r.is_finite() || !n.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite value at index {i}: reference {r}, numeric {n}"
            )));
        }
        let e = if r.abs() > crossover {
            (r - n).abs() / r.abs()
        } else {
            (r - n).abs()
        };
        if e > max_error {
            max_error = e;
            max_index = i;
        }
        errors.push(e);
        indices.push(i);
    }
    if errors.is_empty() {
        return Err(Error::InvalidArgument(
            "index filter excluded every node".to_string(),
        ));
    }
    Ok(MixedErrorReport {
        errors,
        indices,
        max_error,
        max_index,
        crossover,
    })
}

/// Smallest strictly positive node of `coarse` — the `v_low` threshold.
///
/// `coarse` is meant to be a 50-node grid built with the same stretch
/// settings as the grid under study.
pub fn v_low_threshold(coarse: &NonUniformGrid) -> Result<f64> {
    coarse
        .nodes()
        .iter()
        .copied()
        .find(|&v| v > 0.0)
        .ok_or_else(|| {
            Error::InvalidArgument("grid has no strictly positive node".to_string())
        })
}

/// Lowest index `j1` such that `fine.nodes()[j1] >= v_low(coarse)`.
///
/// Nodes below the threshold — in particular the origin itself — are meant
/// to be excluded from error maxima via `|j| j >= j1`.
pub fn v_low_filter(fine: &NonUniformGrid, coarse: &NonUniformGrid) -> Result<usize> {
    let v_low = v_low_threshold(coarse)?;
    let j1 = fine.nodes().partition_point(|&v| v < v_low);
    if j1 == fine.len() {
        return Err(Error::InvalidArgument(format!(
            "every node of the fine grid lies below v_low = {v_low}"
        )));
    }
    Ok(j1)
}

/// Least-squares slope of `log(error)` against `log(1/m)`.
///
/// For errors behaving like `C * m^(-p)` the slope is `p`. Requires at
/// least three sweep points with at least two distinct sizes, and strictly
/// positive finite errors.
pub fn convergence_order(ms: &[usize], errors: &[f64]) -> Result<f64> {
    if ms.len() != errors.len() {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: {} grid sizes, {} errors",
            ms.len(),
            errors.len()
        )));
    }
    if ms.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 sweep points, got {}",
            ms.len()
        )));
    }
    let mut xs = Vec::with_capacity(ms.len());
    let mut ys = Vec::with_capacity(ms.len());
    for (&m, &e) in ms.iter().zip(errors) {
        if m == 0 {
            return Err(Error::InvalidArgument(
                "grid sizes must be positive".to_string(),
            ));
        }
        if !e.is_finite() || e <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "errors must be finite and strictly positive, got {e}"
            )));
        }
        xs.push(-(m as f64).ln());
        ys.push(e.ln());
    }
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidArgument(
            "need at least two distinct grid sizes".to_string(),
        ));
    }
    Ok(sxy / sxx)
}

/// Discounted quadrature of a terminal density against a payoff:
/// `exp(-r_d t) * sum_i w_i p_i payoff(x_i)`.
pub fn fair_value(
    density: &DensityField1D,
    grid: &NonUniformGrid,
    payoff: impl Fn(f64) -> f64,
    rd: f64,
    t: f64,
) -> Result<f64> {
    if density.len() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "density has {} entries but grid has {} nodes",
            density.len(),
            grid.len()
        )));
    }
    let sum: f64 = density
        .values
        .iter()
        .zip(density.weights())
        .zip(grid.nodes())
        .map(|((&p, &w), &x)| w * p * payoff(x))
        .sum();
    Ok((-rd * t).exp() * sum)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Black-Scholes call price with continuous domestic/foreign rates.
///
/// Expects `s0 > 0`, `k > 0`, `sigma >= 0`, `t >= 0`; a vanishing total
/// volatility `sigma * sqrt(t)` returns the discounted intrinsic value.
pub fn bs_call_price(s0: f64, k: f64, rd: f64, rf: f64, sigma: f64, t: f64) -> f64 {
    let df_d = (-rd * t).exp();
    let df_f = (-rf * t).exp();
    let vol = sigma * t.sqrt();
    if vol <= 0.0 {
        return (s0 * df_f - k * df_d).max(0.0);
    }
    let d1 = ((s0 / k).ln() + (rd - rf + 0.5 * sigma * sigma) * t) / vol;
    let d2 = d1 - vol;
    s0 * df_f * normal_cdf(d1) - k * df_d * normal_cdf(d2)
}

fn bs_vega(s0: f64, k: f64, rd: f64, rf: f64, sigma: f64, t: f64) -> f64 {
    let vol = sigma * t.sqrt();
    let d1 = ((s0 / k).ln() + (rd - rf + 0.5 * sigma * sigma) * t) / vol;
    s0 * (-rf * t).exp() * normal_pdf(d1) * t.sqrt()
}

/// Implied volatility of a call price, in percentage points.
///
/// Inverts the Black-Scholes formula by Newton iteration safeguarded with a
/// maintained bisection bracket; terminates once the price residual is at
/// most 1e-10. Prices outside the no-arbitrage band
/// `[max(S0 e^{-r_f T} - K e^{-r_d T}, 0), S0 e^{-r_f T})` are rejected; a
/// price carrying no measurable time value returns the lower safeguard
/// (sigma = 1e-6, i.e. 1e-4 percent) rather than failing.
pub fn implied_vol(price: f64, s0: f64, k: f64, rd: f64, rf: f64, t: f64) -> Result<f64> {
    for (name, v) in [
        ("price", price),
        ("s0", s0),
        ("k", k),
        ("rd", rd),
        ("rf", rf),
        ("t", t),
    ] {
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "{name} must be finite, got {v}"
            )));
        }
    }
    if s0 <= 0.0 || k <= 0.0 || t <= 0.0 {
        return Err(Error::InvalidArgument(
            "s0, k and t must be strictly positive".to_string(),
        ));
    }
    let upper = s0 * (-rf * t).exp();
    let lower = (upper - k * (-rd * t).exp()).max(0.0);
    if price < lower - 1e-12 * upper.max(1.0) {
        return Err(Error::RootFind(format!(
            "price {price} lies below the no-arbitrage lower bound {lower}"
        )));
    }
    if price >= upper {
        return Err(Error::RootFind(format!(
            "price {price} lies at or above the no-arbitrage upper bound {upper}"
        )));
    }

    let residual = |sigma: f64| bs_call_price(s0, k, rd, rf, sigma, t) - price;
    let mut lo = 1e-6;
    if residual(lo) >= 0.0 {
        return Ok(lo * 100.0);
    }
    let mut hi = 1.0;
    while residual(hi) < 0.0 {
        hi *= 2.0;
        if hi > 64.0 {
            return Err(Error::RootFind(format!(
                "could not bracket the implied volatility of price {price}"
            )));
        }
    }

    // The call price is strictly increasing in sigma, so residual(lo) < 0 <
    // residual(hi) holds throughout; Newton steps that leave the bracket
    // (or divide by a vanishing vega) fall back to its midpoint.
    let mut sigma = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = residual(sigma);
        if r.abs() <= 1e-10 {
            return Ok(sigma * 100.0);
        }
        if r < 0.0 {
            lo = sigma;
        } else {
            hi = sigma;
        }
        let vega = bs_vega(s0, k, rd, rf, sigma, t);
        let newton = sigma - r / vega;
        sigma = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::RootFind(format!(
        "implied volatility iteration did not converge for price {price}"
    )))
}

fn bracket(nodes: &[f64], x: f64) -> (usize, f64) {
    let x = x.clamp(nodes[0], nodes[nodes.len() - 1]);
    let hi = nodes.partition_point(|&n| n < x).clamp(1, nodes.len() - 1);
    let t = (x - nodes[hi - 1]) / (nodes[hi] - nodes[hi - 1]);
    (hi - 1, t)
}

/// Bilinear interpolation of a column-stacked 2D field (`values[i + j * m1]`
/// on `gx` x `gy`) at `(x, y)`, clamping points outside the domain to its
/// boundary. Used to sample a fine-grid solution at coarse-grid nodes.
pub fn bilinear_sample(
    gx: &NonUniformGrid,
    gy: &NonUniformGrid,
    values: &[f64],
    x: f64,
    y: f64,
) -> f64 {
    debug_assert_eq!(values.len(), gx.len() * gy.len());
    let m1 = gx.len();
    let (i, tx) = bracket(gx.nodes(), x);
    let (j, ty) = bracket(gy.nodes(), y);
    let v00 = values[i + j * m1];
    let v10 = values[i + 1 + j * m1];
    let v01 = values[i + (j + 1) * m1];
    let v11 = values[i + 1 + (j + 1) * m1];
    let low = v00 + tx * (v10 - v00);
    let high = v01 + tx * (v11 - v01);
    low + ty * (high - low)
}
