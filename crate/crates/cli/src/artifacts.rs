//! Deterministic CSV artifact writers.
//!
//! Every number is rendered as `{:.16e}` — 17 significant digits, enough to
//! round-trip an `f64` exactly — so identical runs produce byte-identical
//! files and downstream tooling can reload values losslessly. All writers
//! overwrite their target file.

use fvadi::calibration::LeverageSurface;
use fvadi::grids::NonUniformGrid;
use fvadi::timestepping::EvolveTrace;
use std::fs::File;
use std::io::{BufWriter, Result, Write};
use std::path::Path;

/// Fixed float rendering used by every artifact.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// `x,p` rows of a 1D density.
pub fn write_density_1d(path: &Path, grid: &NonUniformGrid, values: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "x,p")?;
    for (x, p) in grid.nodes().iter().zip(values) {
        writeln!(w, "{},{}", fmt(*x), fmt(*p))?;
    }
    w.flush()
}

/// `x,v,p` rows of a column-stacked 2D density (`values[i + j * m1]`),
/// written with `x` varying fastest inside `v` blocks.
pub fn write_density_2d(
    path: &Path,
    gx: &NonUniformGrid,
    gy: &NonUniformGrid,
    values: &[f64],
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "x,v,p")?;
    let m1 = gx.len();
    for (j, y) in gy.nodes().iter().enumerate() {
        for (i, x) in gx.nodes().iter().enumerate() {
            writeln!(w, "{},{},{}", fmt(*x), fmt(*y), fmt(values[i + j * m1]))?;
        }
    }
    w.flush()
}

/// `m,error` convergence table.
pub fn write_convergence(path: &Path, ms: &[usize], errors: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "m,error")?;
    for (m, e) in ms.iter().zip(errors) {
        writeln!(w, "{},{}", m, fmt(*e))?;
    }
    w.flush()
}

/// `step,tau,mass,drift` log of an evolution trace; `drift = mass - 1`.
pub fn write_mass_log(path: &Path, trace: &EvolveTrace) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "step,tau,mass,drift")?;
    for (k, rec) in trace.records.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{}",
            k,
            fmt(rec.tau),
            fmt(rec.mass),
            fmt(rec.mass - 1.0)
        )?;
    }
    w.flush()
}

/// `tau,x,sigma_slv` rows of a leverage surface, every time level from
/// `tau_0` on, `x` varying fastest.
pub fn write_leverage(path: &Path, surface: &LeverageSurface) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "tau,x,sigma_slv")?;
    for (level, tau) in surface.taus().iter().enumerate() {
        for (x, s) in surface.xs().iter().zip(surface.row(level)) {
            writeln!(w, "{},{},{}", fmt(*tau), fmt(*x), fmt(*s))?;
        }
    }
    w.flush()
}

/// `x,p_lv,p_slv,diff` marginal-density comparison, `diff = p_lv - p_slv`.
pub fn write_marginals(
    path: &Path,
    grid: &NonUniformGrid,
    p_lv: &[f64],
    p_slv: &[f64],
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "x,p_lv,p_slv,diff")?;
    for ((x, lv), slv) in grid.nodes().iter().zip(p_lv).zip(p_slv) {
        writeln!(
            w,
            "{},{},{},{}",
            fmt(*x),
            fmt(*lv),
            fmt(*slv),
            fmt(lv - slv)
        )?;
    }
    w.flush()
}

/// One row of the implied-volatility comparison table. Volatilities are in
/// percentage points; entries are NaN when the inversion was infeasible.
#[derive(Debug, Clone, Copy)]
pub struct ImpliedRow {
    pub ratio: f64,
    pub iv_lv: f64,
    pub iv_slv: f64,
}

impl ImpliedRow {
    /// Absolute implied-volatility error in percentage points.
    pub fn eps(&self) -> f64 {
        (self.iv_lv - self.iv_slv).abs()
    }
}

/// `k_over_s0,iv_lv,iv_slv,eps_imp` table over the strike ladder.
pub fn write_implied_table(path: &Path, rows: &[ImpliedRow]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "k_over_s0,iv_lv,iv_slv,eps_imp")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            fmt(r.ratio),
            fmt(r.iv_lv),
            fmt(r.iv_slv),
            fmt(r.eps())
        )?;
    }
    w.flush()
}
