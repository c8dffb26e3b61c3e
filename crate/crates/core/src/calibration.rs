//! Leverage calibration of a stochastic-local-volatility model to a local
//! volatility surface, plus the companion 1D local-volatility density solve.
//!
//! The calibrated leverage on the space-time lattice is
//!
//! ```text
//! sigma_SLV(x_i, tau_n) = sigma_LV(x_i, tau_n) / sqrt(E_{n,i}),
//! ```
//!
//! where `E_{n,i}` approximates the conditional expectation of `psi^2(V)`
//! given `X = x_i`, evaluated from the current 2D density iterate by the
//! absolute-value-weighted ratio
//!
//! ```text
//! E_{n,i} = sum_j psi^2(v_j) |P_{n,i,j}| w_j  /  sum_j |P_{n,i,j}| w_j.
//! ```
//!
//! Each time step performs `Q` inner iterations, every one of which
//! recomputes `E` from the current guess for `P_n`, refreshes the leverage
//! at `tau_n`, and re-runs the step from `P_{n-1}` with freshly assembled
//! operators. The first steps are replaced by damped implicit Euler
//! substeps, each running its own inner iteration at the substep target
//! level; leverage at half levels stays internal to the startup.

use crate::error::{Error, Result};
use crate::field::{DensityField1D, DensityField2D};
use crate::fv1d::{assemble_1d, ClosureCoeffs1D};
use crate::fv2d::{assemble_2d, SplitOperator2D};
use crate::grids::NonUniformGrid;
use crate::models::SlvParams;
use crate::timestepping::{
    crank_nicolson_evolve, hv_step, implicit_euler_2d_step, EvolveTrace, HvConfig, KrylovConfig,
    StepRecord, TimeGrid,
};
use std::path::Path;

/// Piecewise-linear interpolation with constant extrapolation beyond the
/// endpoints; `xs` strictly increasing.
fn interp_linear_flat(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    // First index with xs[hi] >= x; x is strictly inside the range.
    let hi = xs.partition_point(|&t| t < x);
    let lo = hi - 1;
    let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + t * (ys[hi] - ys[lo])
}

/// Local volatility surface consumed by the calibration: either a smooth
/// closed-form smile or a rectangular lattice of market-style values.
#[derive(Debug, Clone)]
pub enum LvSurface {
    /// `sigma_LV(x, tau) = a + b tanh(c x)^2`, constant in `tau`.
    Smile { a: f64, b: f64, c: f64 },
    /// Bilinear interpolation on a rectangular `(tau, x)` lattice, constant
    /// beyond the lattice hull.
    Lattice(LvLattice),
}

impl LvSurface {
    pub fn smile(a: f64, b: f64, c: f64) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() || !c.is_finite() {
            return Err(Error::InvalidParams(
                "smile parameters must be finite".into(),
            ));
        }
        // tanh^2 ranges over [0, 1), so positivity needs a > 0 and a + b > 0.
        if a <= 0.0 || a + b <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "smile must stay strictly positive, got a = {a}, b = {b}"
            )));
        }
        Ok(LvSurface::Smile { a, b, c })
    }

    pub fn eval(&self, x: f64, tau: f64) -> f64 {
        match self {
            LvSurface::Smile { a, b, c } => {
                let t = (c * x).tanh();
                a + b * t * t
            }
            LvSurface::Lattice(lattice) => lattice.eval(x, tau),
        }
    }

    /// Parses the CSV interface format: header `tau,x,sigma_lv`, then one
    /// row per lattice point, row-major over a rectangular lattice (all
    /// `tau` blocks share one strictly increasing `x` sequence).
    pub fn from_csv_str(text: &str) -> Result<Self> {
        LvLattice::parse_csv(text).map(LvSurface::Lattice)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text)
    }
}

/// Rectangular local-volatility lattice with strictly increasing axes.
#[derive(Debug, Clone)]
pub struct LvLattice {
    taus: Vec<f64>,
    xs: Vec<f64>,
    /// Row-major over `tau`: `values[t * xs.len() + i]`.
    values: Vec<f64>,
}

impl LvLattice {
    pub fn new(taus: Vec<f64>, xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if taus.is_empty() || xs.is_empty() {
            return Err(Error::SurfaceInput("lattice axes must be non-empty".into()));
        }
        if values.len() != taus.len() * xs.len() {
            return Err(Error::SurfaceInput(format!(
                "lattice needs {} x {} = {} values, got {}",
                taus.len(),
                xs.len(),
                taus.len() * xs.len(),
                values.len()
            )));
        }
        for axis in [&taus, &xs] {
            if !axis.iter().all(|v| v.is_finite())
                || !axis.windows(2).all(|w| w[0] < w[1])
            {
                return Err(Error::SurfaceInput(
                    "lattice axes must be finite and strictly increasing".into(),
                ));
            }
        }
        if let Some(bad) = values.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::SurfaceInput(format!(
                "local volatility values must be strictly positive and finite, got {bad}"
            )));
        }
        Ok(Self { taus, xs, values })
    }

    fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::SurfaceInput("empty local volatility file".into()))?;
        let expected = ["tau", "x", "sigma_lv"];
        let fields: Vec<&str> = header.split(',').map(str::trim).collect();
        if fields != expected {
            return Err(Error::SurfaceInput(format!(
                "expected header 'tau,x,sigma_lv', got '{header}'"
            )));
        }
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for (lineno, line) in lines {
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(Error::SurfaceInput(format!(
                    "line {}: expected 3 comma-separated values, got {}",
                    lineno + 1,
                    parts.len()
                )));
            }
            let mut nums = [0.0f64; 3];
            for (slot, part) in nums.iter_mut().zip(&parts) {
                *slot = part.parse().map_err(|_| {
                    Error::SurfaceInput(format!("line {}: cannot parse '{part}'", lineno + 1))
                })?;
            }
            rows.push((nums[0], nums[1], nums[2]));
        }
        if rows.is_empty() {
            return Err(Error::SurfaceInput(
                "local volatility file has no data rows".into(),
            ));
        }

        // Split into tau blocks and demand one shared x sequence.
        let mut taus: Vec<f64> = Vec::new();
        let mut xs: Vec<f64> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut block_xs: Vec<f64> = Vec::new();
        let mut first_block = true;
        let mut current_tau = rows[0].0;
        taus.push(current_tau);
        for &(tau, x, sigma) in &rows {
            if tau != current_tau {
                if first_block {
                    xs = std::mem::take(&mut block_xs);
                    first_block = false;
                } else if block_xs != xs {
                    return Err(Error::SurfaceInput(
                        "non-rectangular lattice: tau blocks list different x values".into(),
                    ));
                } else {
                    block_xs.clear();
                }
                taus.push(tau);
                current_tau = tau;
            }
            block_xs.push(x);
            values.push(sigma);
        }
        if first_block {
            xs = block_xs;
        } else if block_xs != xs {
            return Err(Error::SurfaceInput(
                "non-rectangular lattice: tau blocks list different x values".into(),
            ));
        }
        Self::new(taus, xs, values)
    }

    /// Bilinear interpolation, constant beyond the hull.
    pub fn eval(&self, x: f64, tau: f64) -> f64 {
        let nx = self.xs.len();
        let row = |t: usize, x: f64| interp_linear_flat(
            &self.xs,
            &self.values[t * nx..(t + 1) * nx],
            x,
        );
        if self.taus.len() == 1 || tau <= self.taus[0] {
            return row(0, x);
        }
        if tau >= self.taus[self.taus.len() - 1] {
            return row(self.taus.len() - 1, x);
        }
        let hi = self.taus.partition_point(|&t| t < tau);
        let lo = hi - 1;
        let w = (tau - self.taus[lo]) / (self.taus[hi] - self.taus[lo]);
        let lo_val = row(lo, x);
        let hi_val = row(hi, x);
        lo_val + w * (hi_val - lo_val)
    }
}

/// Calibrated leverage values on the full `(x_i, tau_n)` lattice, including
/// the `tau_0` column (set equal to the `tau_1` column after the loop).
#[derive(Debug, Clone)]
pub struct LeverageSurface {
    xs: Vec<f64>,
    taus: Vec<f64>,
    /// Row-major over levels: `values[n * xs.len() + i]`.
    values: Vec<f64>,
}

impl LeverageSurface {
    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn value(&self, level: usize, i: usize) -> f64 {
        self.values[level * self.xs.len() + i]
    }

    pub fn row(&self, level: usize) -> &[f64] {
        let nx = self.xs.len();
        &self.values[level * nx..(level + 1) * nx]
    }

    /// Leverage at an arbitrary `x` on one time level: linear between
    /// nodes, constant beyond the boundary nodes.
    pub fn eval_at_level(&self, level: usize, x: f64) -> f64 {
        interp_linear_flat(&self.xs, self.row(level), x)
    }
}

/// Discrete conditional expectation of `psi^2(V)` given `X = x_i`.
///
/// Uses absolute values so the small negative undershoots of the FV density
/// cannot produce negative expectations; rows whose weighted sum is exactly
/// zero take the corresponding `fallback` entry (the previous level's value,
/// treating the expectation as locally constant in time).
pub fn conditional_expectation(
    p: &DensityField2D,
    grid_v: &NonUniformGrid,
    psi_squared: impl Fn(f64) -> f64,
    fallback: &[f64],
) -> Vec<f64> {
    assert_eq!(grid_v.len(), p.m2(), "variance grid does not match the field");
    expectation_from_values(&p.values, p.m1(), grid_v, psi_squared, fallback)
}

fn expectation_from_values(
    values: &[f64],
    m1: usize,
    grid_v: &NonUniformGrid,
    psi_squared: impl Fn(f64) -> f64,
    fallback: &[f64],
) -> Vec<f64> {
    let m2 = grid_v.len();
    assert_eq!(values.len(), m1 * m2, "field shape mismatch");
    assert_eq!(fallback.len(), m1, "fallback row does not match the field");
    let v_nodes = grid_v.nodes();
    let wv = grid_v.weights();
    let mut num = vec![0.0; m1];
    let mut den = vec![0.0; m1];
    for j in 0..m2 {
        let psi2 = psi_squared(v_nodes[j]) * wv[j];
        let w = wv[j];
        for i in 0..m1 {
            let p = values[i + j * m1].abs();
            num[i] += psi2 * p;
            den[i] += w * p;
        }
    }
    num.iter()
        .zip(&den)
        .zip(fallback)
        .map(|((&n, &d), &f)| if d == 0.0 { f } else { n / d })
        .collect()
}

/// Elementwise `sigma_LV / sqrt(E)`.
pub fn leverage_update(sigma_lv_row: &[f64], expectation_row: &[f64]) -> Result<Vec<f64>> {
    if sigma_lv_row.len() != expectation_row.len() {
        return Err(Error::InvalidArgument(format!(
            "row length mismatch: {} local volatilities vs {} expectations",
            sigma_lv_row.len(),
            expectation_row.len()
        )));
    }
    sigma_lv_row
        .iter()
        .zip(expectation_row)
        .map(|(&sigma, &e)| {
            if e > 0.0 && e.is_finite() {
                Ok(sigma / e.sqrt())
            } else {
                Err(Error::Calibration(format!(
                    "conditional expectation must be strictly positive, got {e}"
                )))
            }
        })
        .collect()
}

/// Trapezoid-weighted marginal over the variance direction,
/// `M_i = sum_j P_{i,j} w^v_j`.
pub fn marginal_density(p: &DensityField2D) -> Vec<f64> {
    let (m1, m2) = (p.m1(), p.m2());
    let wv = p.weights_y();
    let mut out = vec![0.0; m1];
    for j in 0..m2 {
        for i in 0..m1 {
            out[i] += p.at(i, j) * wv[j];
        }
    }
    out
}

/// Everything a calibration run produces: the leverage lattice, the final
/// 2D density, and the per-(sub)step mass trace.
#[derive(Debug, Clone)]
pub struct CalibrationOutput {
    pub leverage: LeverageSurface,
    pub density: DensityField2D,
    pub trace: EvolveTrace,
}

/// Runs the full leverage calibration over `tg` with `q_iterations` inner
/// iterations per (sub)step. The grids are expected to be pinned at
/// `(X0, V0)` so the Dirac initial condition sits on a node.
pub fn calibrate(
    slv: &SlvParams,
    lv: &LvSurface,
    grid_x: &NonUniformGrid,
    grid_v: &NonUniformGrid,
    tg: &TimeGrid,
    cfg: &HvConfig,
    q_iterations: usize,
) -> Result<CalibrationOutput> {
    slv.validate()?;
    if q_iterations == 0 {
        return Err(Error::InvalidArgument(
            "calibration needs at least one inner iteration".into(),
        ));
    }
    let m1 = grid_x.len();
    let xs = grid_x.nodes().to_vec();
    let attainable = slv.attainable_lower_v();
    let psi = slv.psi;
    let psi_squared = move |v: f64| {
        let p = psi.eval(v);
        p * p
    };
    let krylov = KrylovConfig::default();

    let sigma_lv_row = |tau: f64| -> Vec<f64> { xs.iter().map(|&x| lv.eval(x, tau)).collect() };
    let make_op = |row: &[f64], tau: f64| -> Result<SplitOperator2D> {
        let coeffs = slv.coefficients(|x: f64, _tau: f64| interp_linear_flat(&xs, row, x));
        assemble_2d(grid_x, grid_v, &coeffs, tau, attainable)
    };
    let position = |n: usize, q: usize| move |e: Error| -> Error {
        Error::Calibration(format!("at time level n = {n}, inner iteration q = {q}: {e}"))
    };

    let mut field = DensityField2D::dirac(grid_x, grid_v, slv.x0, slv.v0)?;
    let mut trace = EvolveTrace::default();
    trace.records.push(StepRecord {
        tau: 0.0,
        mass: field.total_mass(),
    });

    // Initialization rule: E_{0,i} = psi^2(V0) for every i.
    let mut expectation_row = vec![psi_squared(slv.v0); m1];
    let mut leverage_values = leverage_update(&sigma_lv_row(0.0), &expectation_row)?;
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(tg.steps() + 1);
    levels.push(leverage_values.clone());

    // Operator at the previous full level, under its final leverage.
    let mut op_prev: Option<SplitOperator2D> = None;
    let dt = tg.dt();

    for n in 1..=tg.steps() {
        if n <= cfg.rannacher_steps {
            let subs = cfg.substeps_per_replaced_step;
            let sub_dt = dt / subs as f64;
            for k in 1..=subs {
                let tau = if k == subs {
                    tg.level(n)
                } else {
                    tg.horizon() * ((n - 1) as f64 + k as f64 / subs as f64)
                        / tg.steps() as f64
                };
                let lv_row = sigma_lv_row(tau);
                let base = field.values.clone();
                let mut current = base.clone();
                let mut op_next = None;
                for q in 1..=q_iterations {
                    let expectation = expectation_from_values(
                        &current,
                        m1,
                        grid_v,
                        psi_squared,
                        &expectation_row,
                    );
                    leverage_values =
                        leverage_update(&lv_row, &expectation).map_err(position(n, q))?;
                    let op = make_op(&leverage_values, tau).map_err(position(n, q))?;
                    let (values, _) = implicit_euler_2d_step(&op, &base, sub_dt, &krylov)
                        .map_err(position(n, q))?;
                    current = values;
                    expectation_row = expectation;
                    op_next = Some(op);
                }
                field.values = current;
                trace.records.push(StepRecord {
                    tau,
                    mass: field.total_mass(),
                });
                trace.euler_substeps += 1;
                if k == subs {
                    op_prev = op_next;
                }
            }
        } else {
            let tau_prev = tg.level(n - 1);
            let tau_next = tg.level(n);
            let prev = match op_prev.take() {
                Some(op) => op,
                None => make_op(&levels[n - 1], tau_prev)?,
            };
            let lv_row = sigma_lv_row(tau_next);
            let base = field.values.clone();
            let mut current = base.clone();
            let mut op_next = None;
            for q in 1..=q_iterations {
                let expectation = expectation_from_values(
                    &current,
                    m1,
                    grid_v,
                    psi_squared,
                    &expectation_row,
                );
                leverage_values =
                    leverage_update(&lv_row, &expectation).map_err(position(n, q))?;
                let op = make_op(&leverage_values, tau_next).map_err(position(n, q))?;
                current =
                    hv_step(&prev, &op, &base, cfg.theta, dt).map_err(position(n, q))?;
                expectation_row = expectation;
                op_next = Some(op);
            }
            field.values = current;
            trace.records.push(StepRecord {
                tau: tau_next,
                mass: field.total_mass(),
            });
            trace.full_steps += 1;
            op_prev = op_next;
        }
        levels.push(leverage_values.clone());
    }

    // The tau_0 column is not produced by the loop; adopt the tau_1 column.
    levels[0] = levels[1].clone();

    let nx = xs.len();
    let mut values = Vec::with_capacity((tg.steps() + 1) * nx);
    for row in &levels {
        values.extend_from_slice(row);
    }
    Ok(CalibrationOutput {
        leverage: LeverageSurface {
            xs,
            taus: tg.levels(),
            values,
        },
        density: field,
        trace,
    })
}

/// Companion 1D local-volatility density solve in log-spot coordinates,
///
/// ```text
/// dp/dtau = d^2( sigma_LV^2/2 p )/dx^2 - d( (r_d - r_f - sigma_LV^2/2) p )/dx,
/// ```
///
/// advanced by Crank-Nicolson with damped startup from a Dirac at `x0`.
pub fn lv_density_1d(
    lv: &LvSurface,
    rd: f64,
    rf: f64,
    x0: f64,
    grid_x: &NonUniformGrid,
    tg: &TimeGrid,
) -> Result<(DensityField1D, EvolveTrace)> {
    let coeffs = ClosureCoeffs1D {
        drift: |x: f64, tau: f64| {
            let sigma = lv.eval(x, tau);
            rd - rf - 0.5 * sigma * sigma
        },
        diffusion: |x: f64, tau: f64| lv.eval(x, tau),
    };
    let p0 = DensityField1D::dirac(grid_x, x0)?;
    crank_nicolson_evolve(|tau| assemble_1d(grid_x, &coeffs, tau), &p0, tg, true)
}
