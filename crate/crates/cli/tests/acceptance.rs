//! Acceptance gate: one test per release criterion, each printing a single
//! `criterion N: PASS/FAIL` line (visible with `--nocapture`, and always
//! visible for failures) before asserting. Tolerances are pinned in code;
//! a red test here means the implementation does not meet the stated bar,
//! never that the bar moved.
//!
//! Criterion 9 is known not to be attainable by this discretization family
//! and is expected to fail; see that test's comment for the mechanism.

use fvadi::calibration::{calibrate, LvSurface};
use fvadi::diagnostics::{convergence_order, mixed_error};
use fvadi::fv1d::{assemble_1d, weighted_column_sums, ClosureCoeffs1D};
use fvadi::fv2d::{assemble_2d, max_weighted_row_sum_2d, weighted_column_sums_2d, ClosureCoeffs2D};
use fvadi::grids::NonUniformGrid;
use fvadi::models::{Bs1dParams, Bs2dParams, PsiKind, SlvParams};
use fvadi::timestepping::{HvConfig, TimeGrid};
use fvadi_cli::experiments::{
    log_spot_grid, run_bs1d, run_bs2d, run_calibrate, run_cir, run_heston,
    self_convergence_error, solve_heston, variance_grid, Bs1dRun, Bs2dRun, CalibrateRun, CirRun,
    HestonRun,
};
use fvadi_cli::sets::{ParamSet, SetId, MARKET_RD, MARKET_RF, MARKET_S0, SMILE_A, SMILE_B, SMILE_C};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::path::Path;

fn verdict(criterion: &str, pass: bool, detail: &str) {
    let word = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion}: {word} — {detail}");
    assert!(pass, "criterion {criterion}: {word} — {detail}");
}

fn bs1d_params() -> Bs1dParams {
    Bs1dParams {
        rd: 0.03,
        rf: 0.01,
        sigma: 0.2,
        s0: 100.0,
    }
}

fn bs2d_params() -> Bs2dParams {
    Bs2dParams {
        r: 0.03,
        sigma1: 0.2,
        sigma2: 0.25,
        rho: -0.7,
        s10: 100.0,
        s20: 100.0,
    }
}

fn smile() -> LvSurface {
    LvSurface::smile(SMILE_A, SMILE_B, SMILE_C).unwrap()
}

fn calibrate_run(set: SetId, m1: usize, m2: usize, n: usize) -> CalibrateRun {
    CalibrateRun {
        slv: ParamSet::lookup(set).slv().unwrap(),
        lv: smile(),
        s0: MARKET_S0,
        m1,
        m2,
        n,
        q: 2,
        theta: None,
    }
}

// -------------------------------------------------------------------------
// 1. Conservation: per-step total mass within 1e-10 of one for every
//    experiment (calibration at the reduced size m1=100, m2=50, N=50).
// -------------------------------------------------------------------------
#[test]
fn criterion_01_conservation() {
    let tol = 1e-10;
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let mut worst: (f64, String) = (0.0, String::new());
    let mut track = |label: &str, drift: f64| {
        if drift > worst.0 {
            worst = (drift, label.to_string());
        }
    };

    let bs1d = run_bs1d(
        &Bs1dRun {
            params: bs1d_params(),
            horizon: 1.0,
            m: 200,
            n: 200,
            sweep: None,
        },
        out,
        "bs1d",
    )
    .unwrap();
    track("bs1d", bs1d.max_drift);

    for set in [SetId::A, SetId::B] {
        let params = ParamSet::lookup(set);
        let report = run_cir(
            &CirRun {
                params: params.cir(),
                horizon: params.t,
                m: 200,
                n: 200,
                sweep: None,
            },
            out,
            &format!("cir_{set}"),
        )
        .unwrap();
        track(&format!("cir {set}"), report.max_drift);
    }

    let bs2d = run_bs2d(
        &Bs2dRun {
            params: bs2d_params(),
            horizon: 1.0,
            m1: 50,
            m2: 50,
            n: 50,
            theta: None,
            sweep: None,
        },
        out,
        "bs2d",
    )
    .unwrap();
    track("bs2d", bs2d.max_drift);

    for set in [SetId::C, SetId::D] {
        let report = run_heston(
            &HestonRun {
                params: ParamSet::lookup(set).heston().unwrap(),
                m1: 100,
                m2: 50,
                n: 50,
                theta: None,
                sweep: None,
            },
            out,
            &format!("heston_{set}"),
        )
        .unwrap();
        track(&format!("heston {set}"), report.max_drift);
    }

    for set in [SetId::E, SetId::F, SetId::G] {
        let report = run_calibrate(&calibrate_run(set, 100, 50, 50), out, &format!("calibrate_{set}"))
            .unwrap();
        track(&format!("calibrate {set}"), report.max_drift);
    }

    verdict(
        "1",
        worst.0 <= tol,
        &format!(
            "max per-step |mass - 1| = {:.3e} (at {}) over 9 experiment runs, tolerance {tol:.0e}",
            worst.0, worst.1
        ),
    );
}

// -------------------------------------------------------------------------
// 2. Operator identity: weighted column sums of randomized operators vanish
//    to 1e-13 relative to the operator's max (weighted) row sum — 200 draws
//    in 1D, 20 in 2D. In 2D the four corner columns of the mixed stencil
//    telescope to the exact physical corner flux ±rho sigma1 sigma2 instead
//    of zero, and are checked against that value.
// -------------------------------------------------------------------------
#[test]
fn criterion_02_operator_identity() {
    let tol = 1e-13;
    let mut rng = StdRng::seed_from_u64(0x5eed_2024);
    let mut worst_rel: f64 = 0.0;

    let random_grid = |rng: &mut StdRng, lo: usize, hi: usize| {
        let m = rng.gen_range(lo..=hi);
        let mut x = rng.gen_range(-2.0..2.0);
        let mut nodes = Vec::with_capacity(m);
        for _ in 0..m {
            nodes.push(x);
            x += rng.gen_range(0.01..0.35);
        }
        NonUniformGrid::from_nodes(nodes).unwrap()
    };

    for _ in 0..200 {
        let grid = random_grid(&mut rng, 5, 80);
        let (a, b, c) = (
            rng.gen_range(0.05..1.5),
            rng.gen_range(0.0..1.0),
            rng.gen_range(0.2..3.0),
        );
        let (d, e, f) = (
            rng.gen_range(-1.0..1.0),
            rng.gen_range(0.0..2.0),
            rng.gen_range(0.2..2.0),
        );
        let coeffs = ClosureCoeffs1D {
            drift: move |x: f64, _| d + e * (f * x).sin(),
            diffusion: move |x: f64, _| a + b * (c * x).cos().abs(),
        };
        let op = assemble_1d(&grid, &coeffs, rng.gen_range(0.0..1.0)).unwrap();
        let w = grid.weights();
        let scale = (0..op.len())
            .map(|i| w[i] * (op.lower[i].abs() + op.main[i].abs() + op.upper[i].abs()))
            .fold(f64::MIN_POSITIVE, f64::max);
        for s in weighted_column_sums(&grid, &op) {
            worst_rel = worst_rel.max(s.abs() / scale);
        }
    }

    for draw in 0..20 {
        let gx = random_grid(&mut rng, 4, 24);
        let gy = random_grid(&mut rng, 4, 24);
        let rho = rng.gen_range(-0.95..0.95);
        let (a1, b1, c1) = (
            rng.gen_range(0.05..1.2),
            rng.gen_range(0.0..0.8),
            rng.gen_range(0.2..2.0),
        );
        let (a2, b2, c2) = (
            rng.gen_range(0.05..1.2),
            rng.gen_range(0.0..0.8),
            rng.gen_range(0.2..2.0),
        );
        let (d1, d2) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let sigma1 = move |x: f64, y: f64| a1 + b1 * (c1 * x + 0.3 * y).cos().abs();
        let sigma2 = move |x: f64, y: f64| a2 + b2 * (c2 * y - 0.2 * x).sin().abs();
        let coeffs = ClosureCoeffs2D {
            drift_x: move |x: f64, y: f64, _| d1 + 0.5 * (x + y).sin(),
            drift_y: move |x: f64, y: f64, _| d2 + 0.5 * (x - y).cos(),
            diffusion_x: move |x: f64, y: f64, _| sigma1(x, y),
            diffusion_y: move |x: f64, y: f64, _| sigma2(x, y),
            correlation: rho,
        };
        let attainable = draw % 2 == 0;
        let op = assemble_2d(&gx, &gy, &coeffs, rng.gen_range(0.0..1.0), attainable).unwrap();
        let sums = weighted_column_sums_2d(&gx, &gy, &op);
        let scale = max_weighted_row_sum_2d(&gx, &gy, &op).max(f64::MIN_POSITIVE);
        let (m1, m2) = (gx.len(), gy.len());
        let corner = |i: usize, j: usize| {
            let (x, y) = (gx.nodes()[i], gy.nodes()[j]);
            rho * sigma1(x, y) * sigma2(x, y)
        };
        for j in 0..m2 {
            for i in 0..m1 {
                let expected = match (i, j) {
                    (0, 0) => corner(0, 0),
                    (i, 0) if i == m1 - 1 => -corner(m1 - 1, 0),
                    (0, j) if j == m2 - 1 => -corner(0, m2 - 1),
                    (i, j) if i == m1 - 1 && j == m2 - 1 => corner(m1 - 1, m2 - 1),
                    _ => 0.0,
                };
                worst_rel = worst_rel.max((sums[i + j * m1] - expected).abs() / scale);
            }
        }
    }

    verdict(
        "2",
        worst_rel <= tol,
        &format!(
            "max |w^T A| deviation = {worst_rel:.3e} of the max row sum over 200 1D + 20 2D draws, tolerance {tol:.0e}"
        ),
    );
}

// -------------------------------------------------------------------------
// 3. 1D Black-Scholes spatial order in [1.8, 2.2] over m = 50..800 with
//    N = 2000 Crank-Nicolson steps (temporal error negligible).
// -------------------------------------------------------------------------
#[test]
fn criterion_03_bs1d_spatial_order() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_bs1d(
        &Bs1dRun {
            params: bs1d_params(),
            horizon: 1.0,
            m: 200,
            n: 2000,
            sweep: Some("50:50:800".parse().unwrap()),
        },
        dir.path(),
        "bs1d",
    )
    .unwrap();
    let order = report.sweep.unwrap().order.unwrap();
    verdict(
        "3",
        (1.8..=2.2).contains(&order),
        &format!("fitted order = {order:.3} vs lognormal over m = 50..800, band [1.8, 2.2]"),
    );
}

// -------------------------------------------------------------------------
// 4. Square-root-variance spatial order: Set A in [1.8, 2.2]; Set B
//    (Feller-violated) at least 0.9, both with the v_low filter.
// -------------------------------------------------------------------------
#[test]
fn criterion_04_cir_spatial_orders() {
    let dir = tempfile::tempdir().unwrap();
    let mut orders = Vec::new();
    for set in [SetId::A, SetId::B] {
        let params = ParamSet::lookup(set);
        let report = run_cir(
            &CirRun {
                params: params.cir(),
                horizon: params.t,
                m: 200,
                n: 2000,
                sweep: Some("50:50:800".parse().unwrap()),
            },
            dir.path(),
            &format!("cir_{set}"),
        )
        .unwrap();
        orders.push(report.sweep.unwrap().order.unwrap());
    }
    let (a, b) = (orders[0], orders[1]);
    verdict(
        "4",
        (1.8..=2.2).contains(&a) && b >= 0.9,
        &format!("Set A order = {a:.3} (band [1.8, 2.2]), Set B order = {b:.3} (floor 0.9)"),
    );
}

// -------------------------------------------------------------------------
// 5. 2D Black-Scholes spatial order in [1.7, 2.2] over m1 = m2 = 50..250.
// -------------------------------------------------------------------------
#[test]
fn criterion_05_bs2d_spatial_order() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_bs2d(
        &Bs2dRun {
            params: bs2d_params(),
            horizon: 1.0,
            m1: 50,
            m2: 50,
            n: 256,
            theta: None,
            sweep: Some("50:50:250".parse().unwrap()),
        },
        dir.path(),
        "bs2d",
    )
    .unwrap();
    let order = report.sweep.unwrap().order.unwrap();
    verdict(
        "5",
        (1.7..=2.2).contains(&order),
        &format!("fitted order = {order:.3} vs bivariate lognormal over m1 = m2 = 50..250, band [1.7, 2.2]"),
    );
}

// -------------------------------------------------------------------------
// 6. Heston self-convergence against an m1 = 2 m2 = 400 reference: errors
//    decrease monotonically over m1 in {50, 100, 200}; fitted order >= 1.7
//    for Set C and >= 0.9 for Set D.
// -------------------------------------------------------------------------
#[test]
fn criterion_06_heston_self_convergence() {
    let n = 128;
    let ms = [50usize, 100, 200];
    let mut detail = String::new();
    let mut pass = true;
    for (set, floor) in [(SetId::C, 1.7), (SetId::D, 0.9)] {
        let params = ParamSet::lookup(set).heston().unwrap();
        let (gx_f, gv_f, fine, _) = solve_heston(&params, 400, 200, n, None).unwrap();
        let mut errors = Vec::new();
        for &m1 in &ms {
            let (gx, gv, coarse, _) = solve_heston(&params, m1, m1 / 2, n, None).unwrap();
            errors.push(
                self_convergence_error(
                    (&gx_f, &gv_f, &fine.values),
                    (&gx, &gv, &coarse.values),
                )
                .unwrap(),
            );
        }
        let monotone = errors.windows(2).all(|w| w[1] < w[0]);
        let order = convergence_order(&ms, &errors).unwrap();
        pass &= monotone && order >= floor;
        detail.push_str(&format!(
            "Set {set}: errors = [{:.3e}, {:.3e}, {:.3e}] (monotone: {monotone}), order = {order:.3} (floor {floor}); ",
            errors[0], errors[1], errors[2]
        ));
    }
    verdict("6", pass, detail.trim_end_matches("; "));
}

// -------------------------------------------------------------------------
// 7. Temporal order of the splitting scheme: Heston Set C on a fixed
//    m1 = 2 m2 = 100 grid, errors vs an N = 4096 reference over
//    N in {32, 64, 128, 256} with the smoothed startup; order in [1.7, 2.2].
// -------------------------------------------------------------------------
#[test]
fn criterion_07_temporal_order() {
    let params = ParamSet::lookup(SetId::C).heston().unwrap();
    let (_, _, reference, _) = solve_heston(&params, 100, 50, 4096, None).unwrap();
    let ns = [32usize, 64, 128, 256];
    let mut errors = Vec::new();
    for &n in &ns {
        let (_, _, coarse, _) = solve_heston(&params, 100, 50, n, None).unwrap();
        errors.push(
            mixed_error(&reference.values, &coarse.values, 1.0)
                .unwrap()
                .max_error,
        );
    }
    let order = convergence_order(&ns, &errors).unwrap();
    verdict(
        "7",
        (1.7..=2.2).contains(&order),
        &format!(
            "fitted temporal order = {order:.3} over N = 32..256 vs N = 4096 (errors [{:.3e}, {:.3e}, {:.3e}, {:.3e}]), band [1.7, 2.2]",
            errors[0], errors[1], errors[2], errors[3]
        ),
    );
}

// -------------------------------------------------------------------------
// 8. Calibration fidelity for Sets E, F, G at m1 = 400, m2 = 200,
//    time step 1/200, Q = 2: (a) the marginal density of the calibrated
//    model matches the benchmark density to 5e-2 in the mixed metric;
//    (b) implied-vol differences stay within 0.05 vol points near the
//    money and 0.30 vol points on the wings.
// -------------------------------------------------------------------------
#[test]
fn criterion_08_calibration_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let mut detail = String::new();
    let mut pass = true;
    for set in [SetId::E, SetId::F, SetId::G] {
        let t = ParamSet::lookup(set).t;
        let n = (200.0 * t).round() as usize;
        let report = run_calibrate(
            &calibrate_run(set, 400, 200, n),
            dir.path(),
            &format!("calibrate_{set}"),
        )
        .unwrap();
        let marginal_ok = report.marginal_error <= 5e-2;
        let mut atm_worst: f64 = 0.0;
        let mut wing_worst: f64 = 0.0;
        for row in &report.implied {
            let eps = row.eps();
            if (0.9..=1.1).contains(&row.ratio) {
                atm_worst = atm_worst.max(eps);
            } else {
                wing_worst = wing_worst.max(eps);
            }
        }
        // NaN (a failed inversion) must fail the gate, so compare inverted.
        let ladder_ok = atm_worst <= 0.05 && wing_worst <= 0.30;
        pass &= marginal_ok && ladder_ok;
        detail.push_str(&format!(
            "Set {set}: marginal = {:.3e} (tol 5e-2), atm = {atm_worst:.4} (tol 0.05), wings = {wing_worst:.4} (tol 0.30) vol pts; ",
            report.marginal_error
        ));
    }
    verdict("8", pass, detail.trim_end_matches("; "));
}

// -------------------------------------------------------------------------
// 9. Degenerate-vol-of-vol oracle: with xi = 1e-4, V0 = eta, kappa = 20 the
//    variance is pinned at eta, so sigma_SLV * sqrt(eta) should reproduce
//    sigma_LV to 1e-2 at every level n >= 1.
//
//    This criterion is NOT met by this discretization family and the test
//    is expected to fail: with the diffusion effectively switched off, the
//    conservative central-average drift flux admits a sign-alternating
//    right-kernel mode peaked at v = V0 that the node-Dirac initial vector
//    excites at O(1); implicit stages leave kernel modes untouched and the
//    absolute-value-weighted conditional expectation then reads the
//    oscillation instead of eta. The observed deviation floor is ~1.2e-1
//    regardless of grid, step count, or stretch parameters. The tolerance
//    below is intentionally kept at the stated 1e-2.
// -------------------------------------------------------------------------
#[test]
fn criterion_09_degenerate_vol_of_vol() {
    let slv = SlvParams {
        kappa: 20.0,
        eta: 0.0625,
        xi: 1e-4,
        rho: 0.1,
        rd: MARKET_RD,
        rf: MARKET_RF,
        x0: 0.0,
        v0: 0.0625,
        t: 0.25,
        alpha: 0.5,
        psi: PsiKind::SquareRoot,
    };
    let lv = smile();
    let gx = log_spot_grid(slv.x0, 100).unwrap();
    let gv = variance_grid(slv.v0, 50).unwrap();
    let tg = TimeGrid::new(slv.t, 50).unwrap();
    let out = calibrate(&slv, &lv, &gx, &gv, &tg, &HvConfig::default(), 2).unwrap();

    let sqrt_eta = slv.eta.sqrt();
    let mut worst: f64 = 0.0;
    let taus = out.leverage.taus().to_vec();
    for (level, &tau) in taus.iter().enumerate().skip(1) {
        for (i, &x) in out.leverage.xs().to_vec().iter().enumerate() {
            let dev = (out.leverage.row(level)[i] * sqrt_eta - lv.eval(tau, x)).abs();
            worst = worst.max(dev);
        }
    }
    verdict(
        "9",
        worst <= 1e-2,
        &format!(
            "max over n >= 1 of |sigma_SLV * sqrt(eta) - sigma_LV| = {worst:.3e}, tolerance 1e-2 \
             (known floor ~1.2e-1 for this discretization; see test comment)"
        ),
    );
}

// -------------------------------------------------------------------------
// 10. Determinism: two consecutive CLI runs of every experiment produce
//     byte-identical CSV artifacts.
// -------------------------------------------------------------------------
#[test]
fn criterion_10_determinism() {
    let bin = env!("CARGO_BIN_EXE_fvadi");
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &Path| {
        let cases: &[&[&str]] = &[
            &["bs1d", "--m", "51", "--n", "20", "--sweep", "11:10:31"],
            &["cir", "--set", "A", "--m", "51", "--n", "20"],
            &["bs2d", "--m1", "15", "--n", "4"],
            &["heston", "--set", "C", "--m1", "41", "--m2", "21", "--n", "6"],
            &["calibrate", "--set", "G", "--m1", "31", "--m2", "15", "--n", "5"],
        ];
        for case in cases {
            let status = std::process::Command::new(bin)
                .args(*case)
                .arg("--out-dir")
                .arg(out)
                .stdout(std::process::Stdio::null())
                .stderr(std::process::Stdio::null())
                .status()
                .unwrap();
            assert!(status.success(), "{case:?} failed");
        }
    };
    let (first, second) = (dir.path().join("first"), dir.path().join("second"));
    run(&first);
    run(&second);

    let mut names: Vec<String> = std::fs::read_dir(&first)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.len() >= 13, "expected artifacts from all runs, got {names:?}");
    let mut mismatches = Vec::new();
    for name in &names {
        let a = std::fs::read(first.join(name)).unwrap();
        let b = std::fs::read(second.join(name)).unwrap();
        if a != b {
            mismatches.push(name.clone());
        }
    }
    verdict(
        "10",
        mismatches.is_empty(),
        &format!(
            "{} artifacts byte-compared across two runs of 5 experiments; mismatches: {mismatches:?}",
            names.len()
        ),
    );
}
