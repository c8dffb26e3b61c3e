//! Time integration: Crank-Nicolson for 1D problems, the Hundsdorfer-Verwer
//! ADI scheme for 2D split operators, and implicit Euler damping substeps
//! that smooth the Dirac initial data before the second-order schemes start.
//!
//! One Crank-Nicolson step from level `n-1` to `n` solves
//!
//! ```text
//! (I - dt/2 A(tau_n)) P_n = (I + dt/2 A(tau_{n-1})) P_{n-1}.
//! ```
//!
//! One Hundsdorfer-Verwer step advances `W = P_{n-1}` through two implicit
//! sweeps and a corrector, with the mixed-derivative part `A0` always
//! explicit:
//!
//! ```text
//! Y0 = W + dt A(tau_{n-1}) W
//! (I - theta dt A_l(tau_n)) Y_l = Y_{l-1} - theta dt A_l(tau_{n-1}) W,   l = 1, 2
//! Y0~ = Y0 + dt/2 (A(tau_n) Y2 - A(tau_{n-1}) W)
//! (I - theta dt A_l(tau_n)) Y_l~ = Y_{l-1}~ - theta dt A_l(tau_n) Y2,    l = 1, 2
//! P_n = Y2~
//! ```
//!
//! Both evolutions optionally replace the first few steps by implicit Euler
//! substeps: non-smooth initial data excites the undamped high-frequency
//! modes of trapezoidal-type schemes, and a short fully implicit startup
//! restores smooth second-order behavior. The 2D implicit Euler system
//! couples all nine stencil points and is solved iteratively (see the solver
//! configuration in [`KrylovConfig`]).

use crate::error::{Error, Result};
use crate::field::{DensityField1D, DensityField2D};
use crate::fv1d::TridiagonalOperator;
use crate::fv2d::{Axis, DirectionalOperator, SplitOperator2D};
use crate::krylov::{solve_bicgstab, Csr, Ilu0};

pub use crate::krylov::{KrylovConfig, KrylovReport};

/// Uniform partition of `[0, horizon]` into `steps` intervals.
#[derive(Debug, Clone, Copy)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "time horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument(
                "time grid needs at least one step".into(),
            ));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Time level `tau_n = horizon * n / steps`.
    pub fn level(&self, n: usize) -> f64 {
        self.horizon * n as f64 / self.steps as f64
    }

    /// All levels `tau_0..tau_steps` including both endpoints.
    pub fn levels(&self) -> Vec<f64> {
        (0..=self.steps).map(|n| self.level(n)).collect()
    }
}

/// Parameters of the Hundsdorfer-Verwer evolution.
#[derive(Debug, Clone, Copy)]
pub struct HvConfig {
    /// Implicit weight of the directional sweeps.
    pub theta: f64,
    /// Number of leading steps replaced by implicit Euler substeps.
    pub rannacher_steps: usize,
    /// Implicit Euler substeps per replaced step.
    pub substeps_per_replaced_step: usize,
}

impl Default for HvConfig {
    fn default() -> Self {
        Self {
            theta: 0.5 + 3f64.sqrt() / 6.0,
            rannacher_steps: 2,
            substeps_per_replaced_step: 2,
        }
    }
}

impl HvConfig {
    fn validate(&self) -> Result<()> {
        if !self.theta.is_finite() || self.theta <= 0.0 || self.theta > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "theta must lie in (0, 1], got {}",
                self.theta
            )));
        }
        if self.substeps_per_replaced_step == 0 {
            return Err(Error::InvalidArgument(
                "substeps_per_replaced_step must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Mass at one recorded time level.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub tau: f64,
    pub mass: f64,
}

/// Per-(sub)step bookkeeping of an evolution: recorded masses (the entry at
/// `tau = 0` is the initial mass) and how many steps of each kind ran.
#[derive(Debug, Clone, Default)]
pub struct EvolveTrace {
    pub records: Vec<StepRecord>,
    pub full_steps: usize,
    pub euler_substeps: usize,
}

impl EvolveTrace {
    fn start(mass: f64) -> Self {
        Self {
            records: vec![StepRecord { tau: 0.0, mass }],
            full_steps: 0,
            euler_substeps: 0,
        }
    }

    fn push(&mut self, tau: f64, mass: f64) {
        self.records.push(StepRecord { tau, mass });
    }

    /// Largest `|mass - reference|` over all recorded levels.
    pub fn max_deviation_from(&self, reference: f64) -> f64 {
        self.records
            .iter()
            .map(|r| (r.mass - reference).abs())
            .fold(0.0, f64::max)
    }

    /// Largest mass change across a single recorded (sub)step.
    pub fn max_step_change(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| (w[1].mass - w[0].mass).abs())
            .fold(0.0, f64::max)
    }
}

/// Solves the tridiagonal system with `lower[k] x[k-1] + main[k] x[k] +
/// upper[k] x[k+1] = rhs[k]` by the Thomas algorithm. `lower[0]` and
/// `upper[n-1]` are ignored. Fails on a zero pivot; the finite-volume
/// systems solved here are irreducibly diagonally dominant, so a zero pivot
/// signals bad inputs rather than an unlucky ordering.
pub fn tridiagonal_solve(
    lower: &[f64],
    main: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = main.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(Error::InvalidArgument(format!(
            "tridiagonal bands and right-hand side must share one length, got {}/{}/{}/{}",
            lower.len(),
            n,
            upper.len(),
            rhs.len()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut cp = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut denom = main[0];
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::Solver("zero pivot in tridiagonal solve".into()));
    }
    cp[0] = upper[0] / denom;
    x[0] = rhs[0] / denom;
    for k in 1..n {
        denom = main[k] - lower[k] * cp[k - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::Solver("zero pivot in tridiagonal solve".into()));
        }
        cp[k] = upper[k] / denom;
        x[k] = (rhs[k] - lower[k] * x[k - 1]) / denom;
    }
    for k in (0..n - 1).rev() {
        x[k] -= cp[k] * x[k + 1];
    }
    Ok(x)
}

/// Solves `(I - c A) x = rhs` for a tridiagonal `A`.
fn solve_shifted_tridiagonal(op: &TridiagonalOperator, c: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = op.len();
    let lower: Vec<f64> = op.lower.iter().map(|&v| -c * v).collect();
    let main: Vec<f64> = op.main.iter().map(|&v| 1.0 - c * v).collect();
    let upper: Vec<f64> = op.upper.iter().map(|&v| -c * v).collect();
    debug_assert_eq!(rhs.len(), n);
    tridiagonal_solve(&lower, &main, &upper, rhs)
}

/// LU-style factorization of `I - c A_l` for a directional operator,
/// computed once per time level and reused across the predictor and
/// corrector sweeps against the same stage matrix.
struct DirectionalFactor {
    axis: Axis,
    m1: usize,
    m2: usize,
    /// Scaled lower band `-c * lower`.
    lo: Vec<f64>,
    /// Normalized upper band after forward elimination.
    cp: Vec<f64>,
    /// Reciprocal pivots.
    inv_denom: Vec<f64>,
}

impl DirectionalFactor {
    fn new(op: &DirectionalOperator, c: f64) -> Result<Self> {
        let (m1, m2) = (op.m1, op.m2);
        let n = m1 * m2;
        let mut lo = vec![0.0; n];
        let mut cp = vec![0.0; n];
        let mut inv_denom = vec![0.0; n];
        let (lines, line_len, stride) = match op.axis {
            Axis::X => (m2, m1, 1),
            Axis::Y => (m1, m2, m1),
        };
        for line in 0..lines {
            let base = match op.axis {
                Axis::X => line * m1,
                Axis::Y => line,
            };
            let mut denom = 1.0 - c * op.main[base];
            if denom == 0.0 || !denom.is_finite() {
                return Err(Error::Solver("zero pivot in directional sweep".into()));
            }
            inv_denom[base] = 1.0 / denom;
            cp[base] = -c * op.upper[base] * inv_denom[base];
            for s in 1..line_len {
                let k = base + s * stride;
                lo[k] = -c * op.lower[k];
                denom = (1.0 - c * op.main[k]) - lo[k] * cp[k - stride];
                if denom == 0.0 || !denom.is_finite() {
                    return Err(Error::Solver("zero pivot in directional sweep".into()));
                }
                inv_denom[k] = 1.0 / denom;
                cp[k] = -c * op.upper[k] * inv_denom[k];
            }
        }
        Ok(Self {
            axis: op.axis,
            m1,
            m2,
            lo,
            cp,
            inv_denom,
        })
    }

    /// Overwrites `rhs` with the solution of `(I - c A_l) x = rhs`.
    fn solve_in_place(&self, rhs: &mut [f64]) {
        debug_assert_eq!(rhs.len(), self.m1 * self.m2);
        let (lines, line_len, stride) = match self.axis {
            Axis::X => (self.m2, self.m1, 1),
            Axis::Y => (self.m1, self.m2, self.m1),
        };
        for line in 0..lines {
            let base = match self.axis {
                Axis::X => line * self.m1,
                Axis::Y => line,
            };
            rhs[base] *= self.inv_denom[base];
            for s in 1..line_len {
                let k = base + s * stride;
                rhs[k] = (rhs[k] - self.lo[k] * rhs[k - stride]) * self.inv_denom[k];
            }
            for s in (0..line_len - 1).rev() {
                let k = base + s * stride;
                rhs[k] -= self.cp[k] * rhs[k + stride];
            }
        }
    }
}

/// Evolves a 1D density over `tg` with Crank-Nicolson steps; `assemble`
/// produces the operator at a requested time level. With `rannacher` set,
/// the first two steps are replaced by four implicit Euler half-steps.
pub fn crank_nicolson_evolve<F>(
    mut assemble: F,
    p0: &DensityField1D,
    tg: &TimeGrid,
    rannacher: bool,
) -> Result<(DensityField1D, EvolveTrace)>
where
    F: FnMut(f64) -> Result<TridiagonalOperator>,
{
    let n_dof = p0.len();
    let dt = tg.dt();
    let mut field = p0.clone();
    let mut trace = EvolveTrace::start(field.total_mass());
    let mut op_prev: Option<TridiagonalOperator> = None;

    let replaced = if rannacher { 2usize } else { 0 };
    for n in 1..=tg.steps() {
        if n <= replaced {
            for half in 1..=2 {
                let tau = if half == 2 {
                    tg.level(n)
                } else {
                    tg.horizon() * (n as f64 - 0.5) / tg.steps() as f64
                };
                let op = assemble(tau)?;
                if op.len() != n_dof {
                    return Err(Error::InvalidArgument(format!(
                        "assembled operator has {} rows, density has {n_dof}",
                        op.len()
                    )));
                }
                field.values = solve_shifted_tridiagonal(&op, 0.5 * dt, &field.values)?;
                trace.push(tau, field.total_mass());
                trace.euler_substeps += 1;
                if half == 2 {
                    op_prev = Some(op);
                }
            }
        } else {
            let prev = match op_prev.take() {
                Some(op) => op,
                None => assemble(tg.level(n - 1))?,
            };
            let next = assemble(tg.level(n))?;
            if prev.len() != n_dof || next.len() != n_dof {
                return Err(Error::InvalidArgument(format!(
                    "assembled operator has {} rows, density has {n_dof}",
                    next.len()
                )));
            }
            // rhs = (I + dt/2 A(tau_{n-1})) P_{n-1}
            let mut rhs = vec![0.0; n_dof];
            prev.apply(&field.values, &mut rhs);
            for k in 0..n_dof {
                rhs[k] = field.values[k] + 0.5 * dt * rhs[k];
            }
            field.values = solve_shifted_tridiagonal(&next, 0.5 * dt, &rhs)?;
            trace.push(tg.level(n), field.total_mass());
            trace.full_steps += 1;
            op_prev = Some(next);
        }
    }
    Ok((field, trace))
}

/// One Hundsdorfer-Verwer step of size `dt` from the level where `prev` was
/// assembled to the level of `next`.
pub fn hv_step(
    prev: &SplitOperator2D,
    next: &SplitOperator2D,
    w: &[f64],
    theta: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    let n = prev.m1() * prev.m2();
    if next.m1() != prev.m1() || next.m2() != prev.m2() || w.len() != n {
        return Err(Error::InvalidArgument(format!(
            "operator/state shape mismatch: prev {}x{}, next {}x{}, state {}",
            prev.m1(),
            prev.m2(),
            next.m1(),
            next.m2(),
            w.len()
        )));
    }
    if !theta.is_finite() || theta <= 0.0 || theta > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "theta must lie in (0, 1], got {theta}"
        )));
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "step size must be positive and finite, got {dt}"
        )));
    }
    let c = theta * dt;
    // Both stage matrices are used twice per step (predictor and corrector
    // sweep); factor them once.
    let factor_x = DirectionalFactor::new(next.along_x(), c)?;
    let factor_y = DirectionalFactor::new(next.along_y(), c)?;

    let mut f_prev = vec![0.0; n];
    prev.apply_full(w, &mut f_prev);
    let y0: Vec<f64> = (0..n).map(|k| w[k] + dt * f_prev[k]).collect();

    // Implicit sweep in x: (I - c A1_next) Y1 = Y0 - c A1_prev W.
    let mut scratch = vec![0.0; n];
    prev.along_x().apply_add(w, &mut scratch);
    let mut stage: Vec<f64> = (0..n).map(|k| y0[k] - c * scratch[k]).collect();
    factor_x.solve_in_place(&mut stage);

    // Implicit sweep in y: (I - c A2_next) Y2 = Y1 - c A2_prev W.
    scratch.fill(0.0);
    prev.along_y().apply_add(w, &mut scratch);
    for k in 0..n {
        stage[k] -= c * scratch[k];
    }
    factor_y.solve_in_place(&mut stage);
    let y2 = stage;

    // Corrector predictor: Y0~ = Y0 + dt/2 (A(tau_n) Y2 - A(tau_{n-1}) W).
    scratch.fill(0.0);
    next.apply_full(&y2, &mut scratch);
    let mut stage: Vec<f64> = (0..n)
        .map(|k| y0[k] + 0.5 * dt * (scratch[k] - f_prev[k]))
        .collect();

    // Corrector sweeps, both against the new-level operators.
    scratch.fill(0.0);
    next.along_x().apply_add(&y2, &mut scratch);
    for k in 0..n {
        stage[k] -= c * scratch[k];
    }
    factor_x.solve_in_place(&mut stage);

    scratch.fill(0.0);
    next.along_y().apply_add(&y2, &mut scratch);
    for k in 0..n {
        stage[k] -= c * scratch[k];
    }
    factor_y.solve_in_place(&mut stage);
    Ok(stage)
}

/// One implicit Euler step `(I - dt A) P_new = P_old` with the full
/// nine-point coupling, solved iteratively.
pub fn implicit_euler_2d_step(
    op: &SplitOperator2D,
    w: &[f64],
    dt: f64,
    krylov: &KrylovConfig,
) -> Result<(Vec<f64>, KrylovReport)> {
    if w.len() != op.m1() * op.m2() {
        return Err(Error::InvalidArgument(format!(
            "state length {} does not match operator shape {}x{}",
            w.len(),
            op.m1(),
            op.m2()
        )));
    }
    let matrix = Csr::shifted_full(op, dt);
    let ilu = Ilu0::factor(&matrix)?;
    solve_bicgstab(&matrix, &ilu, w, w, krylov)
}

/// Evolves a 2D density over `tg` with Hundsdorfer-Verwer steps; the first
/// `cfg.rannacher_steps` steps are replaced by implicit Euler substeps.
/// `assemble` produces the split operator at a requested time level.
pub fn hv_evolve<F>(
    mut assemble: F,
    p0: &DensityField2D,
    tg: &TimeGrid,
    cfg: &HvConfig,
    krylov: &KrylovConfig,
) -> Result<(DensityField2D, EvolveTrace)>
where
    F: FnMut(f64) -> Result<SplitOperator2D>,
{
    cfg.validate()?;
    let dt = tg.dt();
    let mut field = p0.clone();
    let mut trace = EvolveTrace::start(field.total_mass());
    let mut op_prev: Option<SplitOperator2D> = None;

    let (m1, m2) = (p0.m1(), p0.m2());
    let check_shape = move |op: &SplitOperator2D| -> Result<()> {
        if op.m1() != m1 || op.m2() != m2 {
            return Err(Error::InvalidArgument(format!(
                "assembled operator shape {}x{} does not match density {m1}x{m2}",
                op.m1(),
                op.m2()
            )));
        }
        Ok(())
    };

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
                let op = assemble(tau)?;
                check_shape(&op)?;
                let (values, _) = implicit_euler_2d_step(&op, &field.values, sub_dt, krylov)?;
                field.values = values;
                trace.push(tau, field.total_mass());
                trace.euler_substeps += 1;
                if k == subs {
                    op_prev = Some(op);
                }
            }
        } else {
            let prev = match op_prev.take() {
                Some(op) => op,
                None => {
                    let op = assemble(tg.level(n - 1))?;
                    check_shape(&op)?;
                    op
                }
            };
            let next = assemble(tg.level(n))?;
            check_shape(&next)?;
            field.values = hv_step(&prev, &next, &field.values, cfg.theta, dt)?;
            trace.push(tg.level(n), field.total_mass());
            trace.full_steps += 1;
            op_prev = Some(next);
        }
    }
    Ok((field, trace))
}
