//! `fvadi` — finite-volume forward-equation experiments and leverage
//! calibration.
//!
//! Exit codes: 0 on success, 2 on configuration errors (bad flags,
//! unknown sets, unreadable input files), 3 on numerical failures.

use clap::{Args, Parser, Subcommand};
use fvadi::calibration::LvSurface;
use fvadi::models::{Bs1dParams, Bs2dParams};
use fvadi::Error;
use fvadi_cli::experiments::{
    run_bs1d, run_bs2d, run_calibrate, run_cir, run_heston, Bs1dRun, Bs2dRun, CalibrateRun,
    CirRun, ConvergenceReport, HestonRun, Sweep,
};
use fvadi_cli::sets::{render_table, ParamSet, SetId, SetKind, MARKET_S0, SMILE_A, SMILE_B, SMILE_C};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fvadi",
    version,
    about = "Mass-conservative finite-volume densities and SLV leverage calibration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the 1D Black-Scholes density and compare against the lognormal
    Bs1d(Bs1dArgs),
    /// Solve the square-root variance density (sets A, B) against its closed form
    Cir(CirArgs),
    /// Solve the 2D Black-Scholes density against the bivariate lognormal
    Bs2d(Bs2dArgs),
    /// Solve the Heston joint density (sets C, D); sweeps self-converge
    Heston(HestonArgs),
    /// Calibrate an SLV leverage surface (sets E, F, G)
    Calibrate(CalibrateArgs),
    /// Print the built-in parameter sets
    ListSets,
}

#[derive(Args)]
struct OutArgs {
    /// Directory for CSV artifacts
    #[arg(long, env = "FVADI_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct Bs1dArgs {
    /// Number of spatial nodes
    #[arg(long, default_value_t = 200)]
    m: usize,
    /// Number of time steps
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Grid-size sweep lo:step:hi (writes a convergence table)
    #[arg(long)]
    sweep: Option<Sweep>,
    /// Domestic rate
    #[arg(long, default_value_t = 0.03, allow_hyphen_values = true)]
    rd: f64,
    /// Foreign rate
    #[arg(long, default_value_t = 0.01, allow_hyphen_values = true)]
    rf: f64,
    /// Volatility
    #[arg(long, default_value_t = 0.2)]
    sigma: f64,
    /// Initial spot
    #[arg(long, default_value_t = 100.0)]
    s0: f64,
    /// Horizon in years
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct CirArgs {
    /// Parameter set (A or B)
    #[arg(long, default_value = "A")]
    set: SetId,
    /// Number of spatial nodes
    #[arg(long, default_value_t = 200)]
    m: usize,
    /// Number of time steps
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Grid-size sweep lo:step:hi (writes a convergence table)
    #[arg(long)]
    sweep: Option<Sweep>,
    /// Mean-reversion speed (overrides the set)
    #[arg(long)]
    kappa: Option<f64>,
    /// Mean-reversion level (overrides the set)
    #[arg(long)]
    eta: Option<f64>,
    /// Volatility of variance (overrides the set)
    #[arg(long)]
    xi: Option<f64>,
    /// Initial variance (overrides the set)
    #[arg(long)]
    v0: Option<f64>,
    /// Horizon in years (overrides the set)
    #[arg(long)]
    t: Option<f64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct Bs2dArgs {
    /// Nodes along the first asset
    #[arg(long, default_value_t = 100)]
    m1: usize,
    /// Nodes along the second asset (defaults to m1)
    #[arg(long)]
    m2: Option<usize>,
    /// Number of time steps
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Implicit weight of the splitting scheme (defaults to 1/2 + sqrt(3)/6)
    #[arg(long)]
    theta: Option<f64>,
    /// Sweep over m1 = m2, lo:step:hi
    #[arg(long)]
    sweep: Option<Sweep>,
    /// Risk-free rate
    #[arg(long, default_value_t = 0.03, allow_hyphen_values = true)]
    r: f64,
    /// Volatility of the first asset
    #[arg(long, default_value_t = 0.2)]
    sigma1: f64,
    /// Volatility of the second asset
    #[arg(long, default_value_t = 0.25)]
    sigma2: f64,
    /// Correlation
    #[arg(long, default_value_t = -0.7, allow_hyphen_values = true)]
    rho: f64,
    /// Initial spot of the first asset
    #[arg(long, default_value_t = 100.0)]
    s10: f64,
    /// Initial spot of the second asset
    #[arg(long, default_value_t = 100.0)]
    s20: f64,
    /// Horizon in years
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct HestonArgs {
    /// Parameter set (C or D)
    #[arg(long, default_value = "C")]
    set: SetId,
    /// Nodes along log-spot
    #[arg(long, default_value_t = 100)]
    m1: usize,
    /// Nodes along variance (defaults to m1 / 2)
    #[arg(long)]
    m2: Option<usize>,
    /// Number of time steps
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Implicit weight of the splitting scheme (defaults to 1/2 + sqrt(3)/6)
    #[arg(long)]
    theta: Option<f64>,
    /// Sweep over m1 (m2 = m1 / 2), lo:step:hi; self-converges against
    /// a reference solved at twice the largest size
    #[arg(long)]
    sweep: Option<Sweep>,
    /// Mean-reversion speed (overrides the set)
    #[arg(long)]
    kappa: Option<f64>,
    /// Mean-reversion level (overrides the set)
    #[arg(long)]
    eta: Option<f64>,
    /// Volatility of variance (overrides the set)
    #[arg(long)]
    xi: Option<f64>,
    /// Correlation (overrides the set)
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    /// Domestic rate (overrides the set)
    #[arg(long, allow_hyphen_values = true)]
    rd: Option<f64>,
    /// Foreign rate (overrides the set)
    #[arg(long, allow_hyphen_values = true)]
    rf: Option<f64>,
    /// Initial log-spot (overrides the set)
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    /// Initial variance (overrides the set)
    #[arg(long)]
    v0: Option<f64>,
    /// Horizon in years (overrides the set)
    #[arg(long)]
    t: Option<f64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Parameter set (E, F or G)
    #[arg(long, default_value = "G")]
    set: SetId,
    /// Nodes along log-spot
    #[arg(long, default_value_t = 400)]
    m1: usize,
    /// Nodes along variance
    #[arg(long, default_value_t = 200)]
    m2: usize,
    /// Number of time steps (defaults to 200 per year of horizon)
    #[arg(long)]
    n: Option<usize>,
    /// Inner fixed-point iterations per time step
    #[arg(long, default_value_t = 2)]
    q: usize,
    /// Implicit weight of the splitting scheme (defaults to 1/2 + sqrt(3)/6)
    #[arg(long)]
    theta: Option<f64>,
    /// Local-volatility lattice CSV with header tau,x,sigma_lv
    #[arg(long, conflicts_with_all = ["smile_a", "smile_b", "smile_c"])]
    lv_csv: Option<PathBuf>,
    /// Base level of the built-in smile a + b tanh^2(c x)
    #[arg(long, default_value_t = SMILE_A)]
    smile_a: f64,
    /// Wing rise of the built-in smile
    #[arg(long, default_value_t = SMILE_B)]
    smile_b: f64,
    /// Wing curvature of the built-in smile
    #[arg(long, default_value_t = SMILE_C)]
    smile_c: f64,
    /// Spot level used to map log-spot to strikes
    #[arg(long, default_value_t = MARKET_S0)]
    s0: f64,
    /// Mean-reversion speed (overrides the set)
    #[arg(long)]
    kappa: Option<f64>,
    /// Mean-reversion level (overrides the set)
    #[arg(long)]
    eta: Option<f64>,
    /// Volatility of variance (overrides the set)
    #[arg(long)]
    xi: Option<f64>,
    /// Correlation (overrides the set)
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    /// Domestic rate (overrides the set)
    #[arg(long, allow_hyphen_values = true)]
    rd: Option<f64>,
    /// Foreign rate (overrides the set)
    #[arg(long, allow_hyphen_values = true)]
    rf: Option<f64>,
    /// Initial variance (overrides the set)
    #[arg(long)]
    v0: Option<f64>,
    /// Horizon in years (overrides the set)
    #[arg(long)]
    t: Option<f64>,
    #[command(flatten)]
    out: OutArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::InvalidParams(_) | Error::SurfaceInput(_) | Error::Io(_) => 2,
        Error::Coefficient(_)
        | Error::Model(_)
        | Error::Solver(_)
        | Error::Calibration(_)
        | Error::RootFind(_) => 3,
    }
}

/// Looks up a set and rejects it when it belongs to a different experiment.
fn set_for(set: SetId, kind: SetKind, expected: &str) -> Result<ParamSet, Error> {
    let params = ParamSet::lookup(set);
    if params.kind() == kind {
        Ok(params)
    } else {
        Err(Error::InvalidArgument(format!(
            "set {set} is a {} set; this experiment expects one of {expected}",
            params.kind().label()
        )))
    }
}

fn report_mass(tag: &str, final_mass: f64, max_drift: f64) {
    println!("{tag}: final mass = {final_mass:.16e}, max |mass - 1| over all steps = {max_drift:.3e}");
}

fn report_sweep(tag: &str, sweep: &ConvergenceReport) {
    for (&m, &e) in sweep.ms.iter().zip(&sweep.errors) {
        println!("{tag}: m = {m:>5} -> mixed error = {e:.6e}");
    }
    match sweep.order {
        Some(order) => println!("{tag}: fitted convergence order = {order:.3}"),
        None => println!("{tag}: order fit needs at least 3 sweep points"),
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::ListSets => {
            print!("{}", render_table());
            Ok(())
        }
        Command::Bs1d(a) => {
            let run = Bs1dRun {
                params: Bs1dParams {
                    rd: a.rd,
                    rf: a.rf,
                    sigma: a.sigma,
                    s0: a.s0,
                },
                horizon: a.t,
                m: a.m,
                n: a.n,
                sweep: a.sweep,
            };
            let report = run_bs1d(&run, &a.out.out_dir, "bs1d")?;
            report_mass("bs1d", report.final_mass, report.max_drift);
            println!("bs1d: mixed error vs lognormal = {:.6e}", report.mixed_error);
            if let Some(sweep) = &report.sweep {
                report_sweep("bs1d", sweep);
            }
            println!("bs1d: artifacts in {}", a.out.out_dir.display());
            Ok(())
        }
        Command::Cir(a) => {
            let set = set_for(a.set, SetKind::Variance, "A, B")?;
            let mut params = set.cir();
            if let Some(v) = a.kappa {
                params.kappa = v;
            }
            if let Some(v) = a.eta {
                params.eta = v;
            }
            if let Some(v) = a.xi {
                params.xi = v;
            }
            if let Some(v) = a.v0 {
                params.v0 = v;
            }
            let run = CirRun {
                params,
                horizon: a.t.unwrap_or(set.t),
                m: a.m,
                n: a.n,
                sweep: a.sweep,
            };
            let tag = format!("cir_{}", a.set);
            let report = run_cir(&run, &a.out.out_dir, &tag)?;
            report_mass(&tag, report.final_mass, report.max_drift);
            println!(
                "{tag}: mixed error vs closed form (v >= v_low) = {:.6e}",
                report.mixed_error
            );
            if let Some(sweep) = &report.sweep {
                report_sweep(&tag, sweep);
            }
            println!("{tag}: artifacts in {}", a.out.out_dir.display());
            Ok(())
        }
        Command::Bs2d(a) => {
            let run = Bs2dRun {
                params: Bs2dParams {
                    r: a.r,
                    sigma1: a.sigma1,
                    sigma2: a.sigma2,
                    rho: a.rho,
                    s10: a.s10,
                    s20: a.s20,
                },
                horizon: a.t,
                m1: a.m1,
                m2: a.m2.unwrap_or(a.m1),
                n: a.n,
                theta: a.theta,
                sweep: a.sweep,
            };
            let report = run_bs2d(&run, &a.out.out_dir, "bs2d")?;
            report_mass("bs2d", report.final_mass, report.max_drift);
            println!(
                "bs2d: mixed error vs bivariate lognormal = {:.6e}",
                report.mixed_error
            );
            if let Some(sweep) = &report.sweep {
                report_sweep("bs2d", sweep);
            }
            println!("bs2d: artifacts in {}", a.out.out_dir.display());
            Ok(())
        }
        Command::Heston(a) => {
            let set = set_for(a.set, SetKind::Heston, "C, D")?;
            let mut params = set.heston().expect("heston sets carry full market data");
            if let Some(v) = a.kappa {
                params.kappa = v;
            }
            if let Some(v) = a.eta {
                params.eta = v;
            }
            if let Some(v) = a.xi {
                params.xi = v;
            }
            if let Some(v) = a.rho {
                params.rho = v;
            }
            if let Some(v) = a.rd {
                params.rd = v;
            }
            if let Some(v) = a.rf {
                params.rf = v;
            }
            if let Some(v) = a.x0 {
                params.x0 = v;
            }
            if let Some(v) = a.v0 {
                params.v0 = v;
            }
            if let Some(v) = a.t {
                params.t = v;
            }
            let run = HestonRun {
                params,
                m1: a.m1,
                m2: a.m2.unwrap_or((a.m1 / 2).max(3)),
                n: a.n,
                theta: a.theta,
                sweep: a.sweep,
            };
            let tag = format!("heston_{}", a.set);
            let report = run_heston(&run, &a.out.out_dir, &tag)?;
            report_mass(&tag, report.final_mass, report.max_drift);
            if let Some(sweep) = &report.sweep {
                report_sweep(&tag, sweep);
            }
            println!("{tag}: artifacts in {}", a.out.out_dir.display());
            Ok(())
        }
        Command::Calibrate(a) => {
            let set = set_for(a.set, SetKind::Slv, "E, F, G")?;
            let mut slv = set.slv().expect("slv sets carry full market data");
            if let Some(v) = a.kappa {
                slv.kappa = v;
            }
            if let Some(v) = a.eta {
                slv.eta = v;
            }
            if let Some(v) = a.xi {
                slv.xi = v;
            }
            if let Some(v) = a.rho {
                slv.rho = v;
            }
            if let Some(v) = a.rd {
                slv.rd = v;
            }
            if let Some(v) = a.rf {
                slv.rf = v;
            }
            if let Some(v) = a.v0 {
                slv.v0 = v;
            }
            if let Some(v) = a.t {
                slv.t = v;
            }
            let lv = match &a.lv_csv {
                Some(path) => LvSurface::from_csv_path(path)?,
                None => LvSurface::smile(a.smile_a, a.smile_b, a.smile_c)?,
            };
            let n = a.n.unwrap_or_else(|| ((200.0 * slv.t).round() as usize).max(1));
            let run = CalibrateRun {
                slv,
                lv,
                s0: a.s0,
                m1: a.m1,
                m2: a.m2,
                n,
                q: a.q,
                theta: a.theta,
            };
            let tag = format!("calibrate_{}", a.set);
            let report = run_calibrate(&run, &a.out.out_dir, &tag)?;
            report_mass(&tag, report.final_mass, report.max_drift);
            println!(
                "{tag}: max mixed error, benchmark vs calibrated marginal = {:.6e}",
                report.marginal_error
            );
            for row in &report.implied {
                println!(
                    "{tag}: K/S0 = {:>4} -> iv benchmark = {:>8.4}%, iv calibrated = {:>8.4}%, |diff| = {:.4} vol pts",
                    row.ratio,
                    row.iv_lv,
                    row.iv_slv,
                    row.eps()
                );
            }
            println!("{tag}: artifacts in {}", a.out.out_dir.display());
            Ok(())
        }
    }
}
