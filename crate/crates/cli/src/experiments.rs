//! Experiment runners: solve, compare against a reference, write artifacts.
//!
//! Every runner writes its artifacts under an output directory using a
//! caller-supplied tag (`<tag>_density.csv`, `<tag>_mass.csv`, ...), warns
//! on stderr whenever the per-step total-mass drift exceeds 1e-8, and
//! returns a report with the headline numbers so callers (the CLI binary
//! and the acceptance suite) can assert on them directly.
//!
//! Default grids follow the conventions of the studies being reproduced:
//! price-like coordinates live on `[0, 30 S0]` concentrated around `S0`,
//! log-spot on `[X0 - ln 30, X0 + ln 30]` with a node pinned at `X0`, and
//! variance on `[0, 15]` with a node pinned at `V0` (which also grades the
//! mesh towards the attainable `v = 0` boundary, since `V0` sits close
//! to it).

use crate::artifacts::{self, ImpliedRow};
use crate::sets::STRIKE_LADDER;
use fvadi::calibration::{
    calibrate, lv_density_1d, marginal_density, LeverageSurface, LvSurface,
};
use fvadi::diagnostics::{
    bilinear_sample, convergence_order, fair_value, implied_vol, mixed_error,
    mixed_error_filtered, v_low_filter,
};
use fvadi::field::{DensityField1D, DensityField2D};
use fvadi::fv1d::assemble_1d;
use fvadi::fv2d::assemble_2d;
use fvadi::grids::NonUniformGrid;
use fvadi::models::{Bs1dParams, Bs2dParams, CirParams, HestonParams, SlvParams};
use fvadi::timestepping::{
    crank_nicolson_evolve, hv_evolve, EvolveTrace, HvConfig, KrylovConfig, TimeGrid,
};
use fvadi::{Error, Result};
use std::path::{Path, PathBuf};

/// Upper variance-domain truncation shared by the CIR, Heston and
/// calibration experiments.
pub const V_MAX: f64 = 15.0;

/// Mass-drift level above which a warning is emitted.
pub const DRIFT_WARN: f64 = 1e-8;

/// Inclusive arithmetic sweep `lo:step:hi` over grid sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sweep {
    pub lo: usize,
    pub step: usize,
    pub hi: usize,
}

impl Sweep {
    pub fn points(&self) -> Vec<usize> {
        (self.lo..=self.hi).step_by(self.step).collect()
    }
}

impl std::str::FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("sweep must look like lo:step:hi, got '{s}'"));
        }
        let field = |p: &str, name: &str| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| format!("sweep {name} must be a positive integer, got '{p}'"))
        };
        let (lo, step, hi) = (
            field(parts[0], "lo")?,
            field(parts[1], "step")?,
            field(parts[2], "hi")?,
        );
        if lo < 3 {
            return Err(format!("sweep lo must be at least 3, got {lo}"));
        }
        if step == 0 {
            return Err("sweep step must be positive".to_string());
        }
        if hi < lo {
            return Err(format!("sweep hi must be at least lo, got {lo}:{step}:{hi}"));
        }
        Ok(Sweep { lo, step, hi })
    }
}

impl std::fmt::Display for Sweep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.step, self.hi)
    }
}

/// Errors-vs-size table of one sweep plus its least-squares order (absent
/// when the sweep has fewer than three points).
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub ms: Vec<usize>,
    pub errors: Vec<f64>,
    pub order: Option<f64>,
}

fn fit_order(ms: &[usize], errors: &[f64]) -> Option<f64> {
    if ms.len() >= 3 {
        convergence_order(ms, errors).ok()
    } else {
        None
    }
}

/// Price-coordinate grid on `[0, 30 s0]` concentrated around `s0`, with a
/// node placed exactly at `s0` so that the initial unit mass lands in a
/// cell centred on the spot for every grid size.
pub fn price_grid(s0: f64, m: usize) -> Result<NonUniformGrid> {
    NonUniformGrid::sinh_pinned(0.0, 30.0 * s0, s0, s0 / 5.0, m)
}

/// Variance grid on `[0, V_MAX]` with a node pinned at `v0`.
pub fn variance_grid(v0: f64, m: usize) -> Result<NonUniformGrid> {
    NonUniformGrid::sinh_pinned(0.0, V_MAX, v0, 0.5 * v0, m)
}

/// Log-spot grid on `[x0 - ln 30, x0 + ln 30]` with a node pinned at `x0`.
pub fn log_spot_grid(x0: f64, m: usize) -> Result<NonUniformGrid> {
    let half = 30f64.ln();
    NonUniformGrid::sinh_pinned(x0 - half, x0 + half, x0, 0.1 * half, m)
}

fn hv_config(theta: Option<f64>) -> HvConfig {
    match theta {
        Some(theta) => HvConfig {
            theta,
            ..HvConfig::default()
        },
        None => HvConfig::default(),
    }
}

fn warn_drift(tag: &str, trace: &EvolveTrace) {
    for (k, rec) in trace.records.iter().enumerate() {
        let drift = rec.mass - 1.0;
        if drift.abs() > DRIFT_WARN {
            eprintln!(
                "warning: {tag}: total-mass drift {drift:.3e} exceeds {DRIFT_WARN:.0e} \
                 at record {k} (tau = {:.6})",
                rec.tau
            );
        }
    }
}

fn out_path(dir: &Path, tag: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{tag}_{suffix}.csv"))
}

// ---------------------------------------------------------------------------
// 1D Black-Scholes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Bs1dRun {
    pub params: Bs1dParams,
    pub horizon: f64,
    pub m: usize,
    pub n: usize,
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Clone)]
pub struct Bs1dReport {
    pub final_mass: f64,
    pub max_drift: f64,
    pub mixed_error: f64,
    pub sweep: Option<ConvergenceReport>,
}

fn solve_bs1d(
    params: &Bs1dParams,
    horizon: f64,
    m: usize,
    n: usize,
) -> Result<(NonUniformGrid, DensityField1D, EvolveTrace)> {
    let grid = price_grid(params.s0, m)?;
    let tg = TimeGrid::new(horizon, n)?;
    let p0 = DensityField1D::dirac(&grid, params.s0)?;
    let (field, trace) = crank_nicolson_evolve(|tau| assemble_1d(&grid, params, tau), &p0, &tg, true)?;
    Ok((grid, field, trace))
}

fn bs1d_mixed_error(
    params: &Bs1dParams,
    horizon: f64,
    grid: &NonUniformGrid,
    values: &[f64],
) -> Result<f64> {
    let reference: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&s| {
            if s <= 0.0 {
                // The lognormal density vanishes towards the origin.
                Ok(0.0)
            } else {
                params.exact_density(s, horizon)
            }
        })
        .collect::<Result<_>>()?;
    Ok(mixed_error(&reference, values, 1.0)?.max_error)
}

pub fn run_bs1d(run: &Bs1dRun, out_dir: &Path, tag: &str) -> Result<Bs1dReport> {
    run.params.validate()?;
    let (grid, field, trace) = solve_bs1d(&run.params, run.horizon, run.m, run.n)?;
    warn_drift(tag, &trace);
    artifacts::write_density_1d(&out_path(out_dir, tag, "density"), &grid, &field.values)?;
    artifacts::write_mass_log(&out_path(out_dir, tag, "mass"), &trace)?;
    let mixed = bs1d_mixed_error(&run.params, run.horizon, &grid, &field.values)?;

    let sweep = match &run.sweep {
        None => None,
        Some(sweep) => {
            let ms = sweep.points();
            let mut errors = Vec::with_capacity(ms.len());
            for &m in &ms {
                let (g, f, _) = solve_bs1d(&run.params, run.horizon, m, run.n)?;
                errors.push(bs1d_mixed_error(&run.params, run.horizon, &g, &f.values)?);
            }
            artifacts::write_convergence(&out_path(out_dir, tag, "convergence"), &ms, &errors)?;
            let order = fit_order(&ms, &errors);
            Some(ConvergenceReport { ms, errors, order })
        }
    };

    Ok(Bs1dReport {
        final_mass: field.total_mass(),
        max_drift: trace.max_deviation_from(1.0),
        mixed_error: mixed,
        sweep,
    })
}

// ---------------------------------------------------------------------------
// Square-root variance process (CIR)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CirRun {
    pub params: CirParams,
    pub horizon: f64,
    pub m: usize,
    pub n: usize,
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Clone)]
pub struct CirReport {
    pub final_mass: f64,
    pub max_drift: f64,
    pub mixed_error: f64,
    pub sweep: Option<ConvergenceReport>,
}

fn solve_cir(
    params: &CirParams,
    horizon: f64,
    m: usize,
    n: usize,
) -> Result<(NonUniformGrid, DensityField1D, EvolveTrace)> {
    let grid = variance_grid(params.v0, m)?;
    let tg = TimeGrid::new(horizon, n)?;
    let p0 = DensityField1D::dirac(&grid, params.v0)?;
    let (field, trace) = crank_nicolson_evolve(|tau| assemble_1d(&grid, params, tau), &p0, &tg, true)?;
    Ok((grid, field, trace))
}

/// Mixed error against the closed-form density, restricted to nodes at or
/// above `v_low` (the second node of the 50-point grid with the same
/// stretch settings); near the origin the exact density is unbounded or
/// undefined when the origin is attainable.
fn cir_mixed_error(
    params: &CirParams,
    horizon: f64,
    grid: &NonUniformGrid,
    values: &[f64],
) -> Result<f64> {
    let coarse = variance_grid(params.v0, 50)?;
    let j1 = v_low_filter(grid, &coarse)?;
    let mut reference = vec![0.0; grid.len()];
    for (j, &v) in grid.nodes().iter().enumerate().skip(j1) {
        reference[j] = params.exact_density(v, horizon)?;
    }
    Ok(mixed_error_filtered(&reference, values, 1.0, |j| j >= j1)?.max_error)
}

pub fn run_cir(run: &CirRun, out_dir: &Path, tag: &str) -> Result<CirReport> {
    run.params.validate()?;
    let (grid, field, trace) = solve_cir(&run.params, run.horizon, run.m, run.n)?;
    warn_drift(tag, &trace);
    artifacts::write_density_1d(&out_path(out_dir, tag, "density"), &grid, &field.values)?;
    artifacts::write_mass_log(&out_path(out_dir, tag, "mass"), &trace)?;
    let mixed = cir_mixed_error(&run.params, run.horizon, &grid, &field.values)?;

    let sweep = match &run.sweep {
        None => None,
        Some(sweep) => {
            let ms = sweep.points();
            let mut errors = Vec::with_capacity(ms.len());
            for &m in &ms {
                let (g, f, _) = solve_cir(&run.params, run.horizon, m, run.n)?;
                errors.push(cir_mixed_error(&run.params, run.horizon, &g, &f.values)?);
            }
            artifacts::write_convergence(&out_path(out_dir, tag, "convergence"), &ms, &errors)?;
            let order = fit_order(&ms, &errors);
            Some(ConvergenceReport { ms, errors, order })
        }
    };

    Ok(CirReport {
        final_mass: field.total_mass(),
        max_drift: trace.max_deviation_from(1.0),
        mixed_error: mixed,
        sweep,
    })
}

// ---------------------------------------------------------------------------
// 2D Black-Scholes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Bs2dRun {
    pub params: Bs2dParams,
    pub horizon: f64,
    pub m1: usize,
    pub m2: usize,
    pub n: usize,
    pub theta: Option<f64>,
    /// Sweep over `m1 = m2`.
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Clone)]
pub struct Bs2dReport {
    pub final_mass: f64,
    pub max_drift: f64,
    pub mixed_error: f64,
    pub sweep: Option<ConvergenceReport>,
}

fn solve_bs2d(
    params: &Bs2dParams,
    horizon: f64,
    m1: usize,
    m2: usize,
    n: usize,
    theta: Option<f64>,
) -> Result<(NonUniformGrid, NonUniformGrid, DensityField2D, EvolveTrace)> {
    let gx = price_grid(params.s10, m1)?;
    let gy = price_grid(params.s20, m2)?;
    let tg = TimeGrid::new(horizon, n)?;
    let p0 = DensityField2D::dirac(&gx, &gy, params.s10, params.s20)?;
    let (field, trace) = hv_evolve(
        |tau| assemble_2d(&gx, &gy, params, tau, false),
        &p0,
        &tg,
        &hv_config(theta),
        &KrylovConfig::default(),
    )?;
    Ok((gx, gy, field, trace))
}

fn bs2d_mixed_error(
    params: &Bs2dParams,
    horizon: f64,
    gx: &NonUniformGrid,
    gy: &NonUniformGrid,
    values: &[f64],
) -> Result<f64> {
    let m1 = gx.len();
    let mut reference = vec![0.0; m1 * gy.len()];
    for (j, &s2) in gy.nodes().iter().enumerate() {
        for (i, &s1) in gx.nodes().iter().enumerate() {
            // The bivariate lognormal vanishes on the coordinate axes.
            reference[i + j * m1] = if s1 <= 0.0 || s2 <= 0.0 {
                0.0
            } else {
                params.exact_density(s1, s2, horizon)?
            };
        }
    }
    Ok(mixed_error(&reference, values, 1.0)?.max_error)
}

pub fn run_bs2d(run: &Bs2dRun, out_dir: &Path, tag: &str) -> Result<Bs2dReport> {
    run.params.validate()?;
    let (gx, gy, field, trace) =
        solve_bs2d(&run.params, run.horizon, run.m1, run.m2, run.n, run.theta)?;
    warn_drift(tag, &trace);
    artifacts::write_density_2d(&out_path(out_dir, tag, "density"), &gx, &gy, &field.values)?;
    artifacts::write_mass_log(&out_path(out_dir, tag, "mass"), &trace)?;
    let mixed = bs2d_mixed_error(&run.params, run.horizon, &gx, &gy, &field.values)?;

    let sweep = match &run.sweep {
        None => None,
        Some(sweep) => {
            let ms = sweep.points();
            let mut errors = Vec::with_capacity(ms.len());
            for &m in &ms {
                let (gxs, gys, f, _) = solve_bs2d(&run.params, run.horizon, m, m, run.n, run.theta)?;
                errors.push(bs2d_mixed_error(&run.params, run.horizon, &gxs, &gys, &f.values)?);
            }
            artifacts::write_convergence(&out_path(out_dir, tag, "convergence"), &ms, &errors)?;
            let order = fit_order(&ms, &errors);
            Some(ConvergenceReport { ms, errors, order })
        }
    };

    Ok(Bs2dReport {
        final_mass: field.total_mass(),
        max_drift: trace.max_deviation_from(1.0),
        mixed_error: mixed,
        sweep,
    })
}

// ---------------------------------------------------------------------------
// Heston
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct HestonRun {
    pub params: HestonParams,
    pub m1: usize,
    pub m2: usize,
    pub n: usize,
    pub theta: Option<f64>,
    /// Sweep over `m1` with `m2 = m1 / 2`, measured by self-convergence
    /// against a reference at twice the largest sweep size.
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Clone)]
pub struct HestonReport {
    pub final_mass: f64,
    pub max_drift: f64,
    pub sweep: Option<ConvergenceReport>,
}

pub fn solve_heston(
    params: &HestonParams,
    m1: usize,
    m2: usize,
    n: usize,
    theta: Option<f64>,
) -> Result<(NonUniformGrid, NonUniformGrid, DensityField2D, EvolveTrace)> {
    let gx = log_spot_grid(params.x0, m1)?;
    let gv = variance_grid(params.v0, m2)?;
    let tg = TimeGrid::new(params.t, n)?;
    let p0 = DensityField2D::dirac(&gx, &gv, params.x0, params.v0)?;
    let attainable = params.attainable_lower_v();
    let (field, trace) = hv_evolve(
        |tau| assemble_2d(&gx, &gv, params, tau, attainable),
        &p0,
        &tg,
        &hv_config(theta),
        &KrylovConfig::default(),
    )?;
    Ok((gx, gv, field, trace))
}

/// Samples a fine-grid solution at the nodes of a coarse grid pair and
/// returns the mixed error of the coarse solution against it.
pub fn self_convergence_error(
    fine: (&NonUniformGrid, &NonUniformGrid, &[f64]),
    coarse: (&NonUniformGrid, &NonUniformGrid, &[f64]),
) -> Result<f64> {
    let (gx_f, gy_f, vals_f) = fine;
    let (gx_c, gy_c, vals_c) = coarse;
    let m1 = gx_c.len();
    let mut reference = vec![0.0; m1 * gy_c.len()];
    for (j, &y) in gy_c.nodes().iter().enumerate() {
        for (i, &x) in gx_c.nodes().iter().enumerate() {
            reference[i + j * m1] = bilinear_sample(gx_f, gy_f, vals_f, x, y);
        }
    }
    Ok(mixed_error(&reference, vals_c, 1.0)?.max_error)
}

pub fn run_heston(run: &HestonRun, out_dir: &Path, tag: &str) -> Result<HestonReport> {
    run.params.validate()?;
    let (gx, gv, field, trace) =
        solve_heston(&run.params, run.m1, run.m2, run.n, run.theta)?;
    warn_drift(tag, &trace);
    artifacts::write_density_2d(&out_path(out_dir, tag, "density"), &gx, &gv, &field.values)?;
    artifacts::write_mass_log(&out_path(out_dir, tag, "mass"), &trace)?;

    let sweep = match &run.sweep {
        None => None,
        Some(sweep) => {
            let ms = sweep.points();
            let hi = *ms.iter().max().expect("sweep points are non-empty");
            let (gx_f, gv_f, fine, _) =
                solve_heston(&run.params, 2 * hi, hi, run.n, run.theta)?;
            let mut errors = Vec::with_capacity(ms.len());
            for &m1 in &ms {
                let m2 = (m1 / 2).max(3);
                let (gxc, gvc, f, _) = solve_heston(&run.params, m1, m2, run.n, run.theta)?;
                errors.push(self_convergence_error(
                    (&gx_f, &gv_f, &fine.values),
                    (&gxc, &gvc, &f.values),
                )?);
            }
            artifacts::write_convergence(&out_path(out_dir, tag, "convergence"), &ms, &errors)?;
            let order = fit_order(&ms, &errors);
            Some(ConvergenceReport { ms, errors, order })
        }
    };

    Ok(HestonReport {
        final_mass: field.total_mass(),
        max_drift: trace.max_deviation_from(1.0),
        sweep,
    })
}

// ---------------------------------------------------------------------------
// Leverage calibration
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct CalibrateRun {
    pub slv: SlvParams,
    pub lv: LvSurface,
    /// Spot level mapping log-spot to prices in the payoff comparisons.
    pub s0: f64,
    pub m1: usize,
    pub m2: usize,
    pub n: usize,
    pub q: usize,
    pub theta: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CalibrateReport {
    pub final_mass: f64,
    pub max_drift: f64,
    /// Mixed error between the benchmark 1D density and the calibrated
    /// model's marginal density at the final time.
    pub marginal_error: f64,
    pub implied: Vec<ImpliedRow>,
    pub leverage: LeverageSurface,
}

pub fn run_calibrate(run: &CalibrateRun, out_dir: &Path, tag: &str) -> Result<CalibrateReport> {
    run.slv.validate()?;
    if !(run.s0.is_finite() && run.s0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "spot must be strictly positive, got {}",
            run.s0
        )));
    }
    let gx = log_spot_grid(run.slv.x0, run.m1)?;
    let gv = variance_grid(run.slv.v0, run.m2)?;
    let tg = TimeGrid::new(run.slv.t, run.n)?;
    let cfg = hv_config(run.theta);

    let out = calibrate(&run.slv, &run.lv, &gx, &gv, &tg, &cfg, run.q)?;
    warn_drift(tag, &out.trace);

    let (p_lv, lv_trace) = lv_density_1d(&run.lv, run.slv.rd, run.slv.rf, run.slv.x0, &gx, &tg)?;
    warn_drift(&format!("{tag} (benchmark density)"), &lv_trace);

    let marginal = marginal_density(&out.density);
    let marginal_error = mixed_error(&p_lv.values, &marginal, 1.0)?.max_error;
    let slv_field = DensityField1D::new(&gx, marginal.clone())?;

    let (rd, rf, t) = (run.slv.rd, run.slv.rf, run.slv.t);
    let forward = run.s0 * ((rd - rf) * t).exp();
    let mut implied = Vec::with_capacity(STRIKE_LADDER.len());
    for ratio in STRIKE_LADDER {
        let k = ratio * run.s0;
        // Deep in-the-money calls carry almost no information beyond their
        // intrinsic value, so quadrature noise swamps the volatility
        // signal. Below the forward, price the out-of-the-money put (a
        // positive integral over the thin left tail) and shift it to a
        // call by put-call parity before inverting.
        let (price_lv, price_slv) = if k >= forward {
            let payoff = |x: f64| (run.s0 * x.exp() - k).max(0.0);
            (
                fair_value(&p_lv, &gx, payoff, rd, t)?,
                fair_value(&slv_field, &gx, payoff, rd, t)?,
            )
        } else {
            let payoff = |x: f64| (k - run.s0 * x.exp()).max(0.0);
            let parity = run.s0 * (-rf * t).exp() - k * (-rd * t).exp();
            (
                fair_value(&p_lv, &gx, payoff, rd, t)? + parity,
                fair_value(&slv_field, &gx, payoff, rd, t)? + parity,
            )
        };
        let invert = |price: f64, label: &str| match implied_vol(price, run.s0, k, rd, rf, t) {
            Ok(iv) => iv,
            Err(e) => {
                eprintln!("warning: {tag}: implied vol at K/S0 = {ratio} ({label}): {e}");
                f64::NAN
            }
        };
        implied.push(ImpliedRow {
            ratio,
            iv_lv: invert(price_lv, "benchmark"),
            iv_slv: invert(price_slv, "calibrated"),
        });
    }

    artifacts::write_leverage(&out_path(out_dir, tag, "leverage"), &out.leverage)?;
    artifacts::write_marginals(
        &out_path(out_dir, tag, "marginals"),
        &gx,
        &p_lv.values,
        &marginal,
    )?;
    artifacts::write_implied_table(&out_path(out_dir, tag, "implied_vol"), &implied)?;
    artifacts::write_density_2d(&out_path(out_dir, tag, "density"), &gx, &gv, &out.density.values)?;
    artifacts::write_mass_log(&out_path(out_dir, tag, "mass"), &out.trace)?;

    Ok(CalibrateReport {
        final_mass: out.density.total_mass(),
        max_drift: out.trace.max_deviation_from(1.0),
        marginal_error,
        implied,
        leverage: out.leverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::{ParamSet, SetId, MARKET_S0, SMILE_A, SMILE_B, SMILE_C};

    #[test]
    fn sweep_parses_and_enumerates_points() {
        let sweep: Sweep = "50:50:200".parse().unwrap();
        assert_eq!(sweep.points(), vec![50, 100, 150, 200]);
        assert_eq!(sweep.to_string(), "50:50:200");
        // Endpoint not on the lattice is simply not reached.
        let sweep: Sweep = "3:4:10".parse().unwrap();
        assert_eq!(sweep.points(), vec![3, 7]);

        for bad in ["50:50", "a:1:2", "2:1:5", "5:0:9", "9:1:5", "50-50-100", ""] {
            assert!(bad.parse::<Sweep>().is_err(), "{bad}");
        }
    }

    #[test]
    fn degenerate_bs1d_smoke_run_keeps_unit_mass() {
        let dir = tempfile::tempdir().unwrap();
        let run = Bs1dRun {
            params: Bs1dParams {
                rd: 0.03,
                rf: 0.01,
                sigma: 0.2,
                s0: 100.0,
            },
            horizon: 1.0,
            m: 3,
            n: 1,
            sweep: None,
        };
        let report = run_bs1d(&run, dir.path(), "bs1d").unwrap();
        assert!((report.final_mass - 1.0).abs() <= 1e-12);
        assert!(report.max_drift <= 1e-12);
        assert!(report.mixed_error.is_finite());
        assert!(dir.path().join("bs1d_density.csv").exists());
        assert!(dir.path().join("bs1d_mass.csv").exists());
        assert!(!dir.path().join("bs1d_convergence.csv").exists());
    }

    #[test]
    fn cir_run_conserves_mass_and_reports_filtered_error() {
        let dir = tempfile::tempdir().unwrap();
        let set = ParamSet::lookup(SetId::A);
        let run = CirRun {
            params: set.cir(),
            horizon: set.t,
            m: 61,
            n: 40,
            sweep: None,
        };
        let report = run_cir(&run, dir.path(), "cir_A").unwrap();
        assert!(report.max_drift <= 1e-10, "drift {}", report.max_drift);
        assert!(report.mixed_error.is_finite());
        assert!(dir.path().join("cir_A_density.csv").exists());
    }

    #[test]
    fn heston_run_with_tiny_sweep_produces_decreasing_errors() {
        let dir = tempfile::tempdir().unwrap();
        let set = ParamSet::lookup(SetId::C);
        let run = HestonRun {
            params: set.heston().unwrap(),
            m1: 41,
            m2: 21,
            n: 8,
            theta: None,
            sweep: Some("21:20:41".parse().unwrap()),
        };
        let report = run_heston(&run, dir.path(), "heston_C").unwrap();
        assert!(report.max_drift <= 1e-10, "drift {}", report.max_drift);
        let sweep = report.sweep.unwrap();
        assert_eq!(sweep.ms, vec![21, 41]);
        assert!(sweep.errors[1] < sweep.errors[0]);
        assert!(sweep.order.is_none());
        assert!(dir.path().join("heston_C_convergence.csv").exists());
    }

    #[test]
    fn calibrate_run_emits_all_artifacts_and_ladder_rows() {
        let dir = tempfile::tempdir().unwrap();
        let set = ParamSet::lookup(SetId::G);
        let run = CalibrateRun {
            slv: set.slv().unwrap(),
            lv: LvSurface::smile(SMILE_A, SMILE_B, SMILE_C).unwrap(),
            s0: MARKET_S0,
            m1: 21,
            m2: 11,
            n: 4,
            q: 2,
            theta: None,
        };
        let report = run_calibrate(&run, dir.path(), "calibrate_G").unwrap();
        assert!(report.max_drift <= 1e-10, "drift {}", report.max_drift);
        assert!(report.marginal_error.is_finite());
        assert_eq!(report.implied.len(), STRIKE_LADDER.len());
        assert_eq!(report.leverage.taus().len(), run.n + 1);
        for name in [
            "calibrate_G_leverage.csv",
            "calibrate_G_marginals.csv",
            "calibrate_G_implied_vol.csv",
            "calibrate_G_density.csv",
            "calibrate_G_mass.csv",
        ] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        let leverage = std::fs::read_to_string(dir.path().join("calibrate_G_leverage.csv")).unwrap();
        assert_eq!(leverage.lines().count(), 1 + (run.n + 1) * run.m1);
        assert!(leverage.lines().nth(1).unwrap().starts_with("0.0000000000000000e0,"));
    }
}
