//! End-to-end acceptance checks. Every criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.
//!
//! The whole pipeline runs twice into separate directories and the written
//! CSV, dataset and model files are compared byte for byte.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, RngAlgorithm, TestRng, TestRunner};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use costate_core::colloc::NlpOptions;
use costate_core::control::{saturate, simulate_closed_loop, solve_input_qp, DisturbanceSchedule, SimOptions};
use costate_core::dataset::{generate_dataset, save_dataset};
use costate_core::figures::{reproduce_figure, FigureId, FigureInputs, FigureReport, FIGURE_INPUT_BOUND};
use costate_core::network::{Activation, ConnModel};
use costate_core::problem::{linear1d, quad1d, vdp2d, FnDynamics, Matrix, OcpProblem, Vector};
use costate_core::tpbvp::{solve_tpbvp, SolverConfig};
use costate_core::train::{gradients, init_model, train, TrainConfig};

struct Check {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(id: u32, name: &'static str, pass: bool, detail: String) -> Check {
    Check { id, name, pass, detail }
}

fn s(v: f64) -> Vector {
    Vector::from_element(1, v)
}

// ------------------------------------------------------------ criterion 1

fn dataset_reproduction(dir: &Path) -> (Check, costate_core::dataset::Dataset) {
    let problem = quad1d();
    let start = Instant::now();
    let (ds, report) = generate_dataset(&problem, -5.0, 5.0, 101, &SolverConfig::default()).expect("generation failed");
    let elapsed = start.elapsed();
    save_dataset(&ds, dir.join("dataset.txt")).unwrap();
    let worst = ds.entries.iter().map(|e| e.x_traj[(200, 0)].abs()).fold(0.0, f64::max);
    let converged = ds.entries.iter().filter(|e| e.converged).count();
    let pass = ds.len() == 101
        && converged == 101
        && report.failures.is_empty()
        && ds.steps == 201
        && worst <= 1e-2
        && elapsed <= Duration::from_secs(120);
    let c = check(
        1,
        "dataset reproduction",
        pass,
        format!(
            "{converged}/101 converged, max |x_traj[200]| = {worst:.3e} (<= 1e-2), {:.1} s (<= 120 s)",
            elapsed.as_secs_f64()
        ),
    );
    (c, ds)
}

// ------------------------------------------------------------ criterion 2

fn riccati_oracle(dir: &Path) -> Check {
    let problem = linear1d();
    let expected = 1.0 + 2f64.sqrt();
    let mut worst = 0.0f64;
    let mut csv = String::from("x0,lambda0,ratio\n");
    for x0 in [-2.0, 1.0, 3.0] {
        let pair = solve_tpbvp(&problem, &s(x0), &SolverConfig::default()).expect("linear solve failed");
        let ratio = pair.lambda_traj[(0, 0)] / x0;
        worst = worst.max((ratio - expected).abs());
        let _ = writeln!(csv, "{x0:?},{:?},{ratio:?}", pair.lambda_traj[(0, 0)]);
    }
    fs::write(dir.join("riccati.csv"), csv).unwrap();
    check(
        2,
        "Riccati oracle",
        worst <= 1e-3,
        format!("max |lambda(0)/x0 - (1+sqrt 2)| = {worst:.3e} (<= 1e-3)"),
    )
}

// ------------------------------------------------------------ criterion 3

const GRAD_REL_TOL: f64 = 1e-4;

/// Largest violation of `|fd − g| ≤ tol·max(|fd|, |g|) + floor` over all
/// parameters, as a ratio (≤ 1 passes).
fn gradient_violation(
    model: &ConnModel,
    problem: &OcpProblem,
    xw: &Matrix,
    lw: &Matrix,
    config: &TrainConfig,
) -> f64 {
    let (g, base) = gradients(model, problem, xw, lw, config).unwrap();
    let g = g.flat();
    let loss = |m: &ConnModel| {
        gradients(m, problem, xw, lw, config)
            .unwrap()
            .1
            .total(config.continuity_weight)
    };
    let floor = 1e-8 * base.total(config.continuity_weight).max(1.0);
    let mut worst = 0.0f64;
    let mut m = model.clone();
    for i in 0..model.num_params() {
        let theta = model.param(i);
        let h = 1e-6 * theta.abs().max(1.0);
        m.set_param(i, theta + h);
        let up = loss(&m);
        m.set_param(i, theta - h);
        let dn = loss(&m);
        m.set_param(i, theta);
        let fd = (up - dn) / (2.0 * h);
        let allowed = GRAD_REL_TOL * fd.abs().max(g[i].abs()) + floor;
        worst = worst.max((fd - g[i]).abs() / allowed);
    }
    worst
}

fn gradient_suite(dir: &Path) -> Check {
    let strategy = (
        any::<bool>(),
        2usize..=6,
        prop::collection::vec(2usize..=8, 1..=2),
        0usize..3,
        0.0f64..2.0,
        any::<u64>(),
    );
    let mut runner = TestRunner::new_with_rng(
        PropConfig {
            cases: 20,
            failure_persistence: None,
            ..PropConfig::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    // The runner takes an `Fn` closure, so per-case records go through cells.
    let log = RefCell::new((String::from("case,problem,horizon,hidden,activation,weight,violation\n"), 0usize, 0.0f64));
    let result = runner.run(&strategy, |(vdp, horizon, hidden, act, weight, seed)| {
        let problem = if vdp { vdp2d() } else { quad1d() };
        let p = problem.state_dim();
        let activation = [Activation::Tanh, Activation::Relu, Activation::Softplus][act];
        let scale = vec![0.5; p];
        let mut model = ConnModel::new(p, horizon, &hidden, activation, scale, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        // Fresh models have zero biases, which can put a ReLU exactly on its
        // kink when a whole layer is inactive; jitter every parameter.
        for i in 0..model.num_params() {
            model.set_param(i, model.param(i) + rng.random_range(-0.3..0.3));
        }
        let xw = Matrix::from_fn(horizon, p, |_, _| rng.random_range(-1.5..1.5));
        let lw = Matrix::from_fn(horizon, p, |_, _| rng.random_range(-1.5..1.5));
        let config = TrainConfig {
            continuity_weight: weight,
            horizon,
            hidden: hidden.clone(),
            activation,
            ..TrainConfig::default()
        };
        let v = gradient_violation(&model, &problem, &xw, &lw, &config);
        let (csv, case, worst) = &mut *log.borrow_mut();
        *worst = worst.max(v);
        let _ = writeln!(
            csv,
            "{case},{},{horizon},{hidden:?},{},{weight:?},{v:.6e}",
            problem.id(),
            activation.name()
        );
        *case += 1;
        prop_assert!(v <= 1.0, "violation ratio {v}");
        Ok(())
    });
    let (csv, case, worst) = log.into_inner();
    fs::write(dir.join("gradients.csv"), &csv).unwrap();
    check(
        3,
        "gradient suite",
        result.is_ok() && case == 20,
        format!(
            "{case} random configurations, worst |fd-g|/(1e-4*max(|fd|,|g|)+floor) = {worst:.3} (<= 1){}",
            result.err().map(|e| format!(": {e}")).unwrap_or_default()
        ),
    )
}

// ------------------------------------------------------------ criterion 4

fn scalar_qp_problem(r: f64, g0: f64, g2: f64, lo: f64, hi: f64) -> OcpProblem {
    let dynamics = FnDynamics::new(
        "qp1",
        1,
        1,
        |x| x.clone(),
        |_| Matrix::identity(1, 1),
        move |x| Matrix::from_element(1, 1, g0 + g2 * x[0] * x[0]),
        move |x| vec![Matrix::from_element(1, 1, 2.0 * g2 * x[0])],
    );
    OcpProblem::new(
        "qp1",
        Arc::new(dynamics),
        Matrix::identity(1, 1),
        Matrix::from_element(1, 1, r),
        s(lo),
        s(hi),
        s(0.0),
        1.0,
        0.5,
    )
    .unwrap()
}

fn coupled_qp_problem(r: Matrix, g: Matrix, lo: Vector, hi: Vector) -> OcpProblem {
    let dynamics = FnDynamics::new(
        "qp2",
        2,
        2,
        |_| Vector::zeros(2),
        |_| Matrix::zeros(2, 2),
        move |_| g.clone(),
        |_| vec![Matrix::zeros(2, 2); 2],
    );
    OcpProblem::new("qp2", Arc::new(dynamics), Matrix::identity(2, 2), r, lo, hi, Vector::zeros(2), 1.0, 0.5).unwrap()
}

fn qp_equivalence(dir: &Path) -> Check {
    let det = || TestRng::deterministic_rng(RngAlgorithm::ChaCha);
    let cfg = |cases| PropConfig {
        cases,
        failure_persistence: None,
        ..PropConfig::default()
    };

    let scalar_worst = RefCell::new(0.0f64);
    let scalar = (0.1f64..10.0, -3.0f64..3.0, -1.0f64..1.0, -5.0f64..5.0, -50.0f64..50.0, 0.0f64..30.0, 0.0f64..30.0);
    let scalar_result = TestRunner::new_with_rng(cfg(1000), det()).run(&scalar, |(r, g0, g2, x, lam, a, b)| {
        let (lo, hi) = (-a, b);
        let problem = scalar_qp_problem(r, g0, g2, lo, hi);
        let u = solve_input_qp(&problem, &s(x), &s(lam)).unwrap()[0];
        let gx = g0 + g2 * x * x;
        let expected = saturate(&s(-gx * lam / r), &s(lo), &s(hi))[0];
        let err = (u - expected).abs();
        let mut w = scalar_worst.borrow_mut();
        *w = w.max(err);
        prop_assert!(err <= 1e-12, "u = {u}, saturated = {expected}");
        Ok(())
    });

    let log = RefCell::new((String::from("case,qp_objective,grid_best\n"), 0usize, f64::NEG_INFINITY));
    let coupled = (
        prop::array::uniform4(-2.0f64..2.0),
        prop::array::uniform4(-2.0f64..2.0),
        prop::array::uniform2(-3.0f64..3.0),
        prop::array::uniform2(0.1f64..2.0),
        prop::array::uniform2(0.1f64..2.0),
    );
    let coupled_result = TestRunner::new_with_rng(cfg(50), det()).run(&coupled, |(a, gm, lam, lo, hi)| {
        // R = AAᵀ + 0.1·I is symmetric positive definite and generally not diagonal.
        let am = Matrix::from_row_slice(2, 2, &a);
        let r = &am * am.transpose() + Matrix::identity(2, 2) * 0.1;
        let g = Matrix::from_row_slice(2, 2, &gm);
        let lam = Vector::from_row_slice(&lam);
        let lov = Vector::from_vec(vec![-lo[0], -lo[1]]);
        let hiv = Vector::from_vec(vec![hi[0], hi[1]]);
        let problem = coupled_qp_problem(r.clone(), g.clone(), lov.clone(), hiv.clone());
        let u = solve_input_qp(&problem, &Vector::zeros(2), &lam).unwrap();
        let lin = g.transpose() * &lam;
        let obj = |u0: f64, u1: f64| {
            0.5 * (r[(0, 0)] * u0 * u0 + 2.0 * r[(0, 1)] * u0 * u1 + r[(1, 1)] * u1 * u1) + lin[0] * u0 + lin[1] * u1
        };
        let mut best = f64::INFINITY;
        for i in 0..1000 {
            let u0 = lov[0] + (hiv[0] - lov[0]) * i as f64 / 999.0;
            for j in 0..1000 {
                let u1 = lov[1] + (hiv[1] - lov[1]) * j as f64 / 999.0;
                best = best.min(obj(u0, u1));
            }
        }
        let got = obj(u[0], u[1]);
        let (csv, case, gap) = &mut *log.borrow_mut();
        *gap = gap.max(got - best);
        let _ = writeln!(csv, "{case},{got:?},{best:?}");
        *case += 1;
        prop_assert!(got <= best + 1e-12, "qp {got} vs grid {best}");
        Ok(())
    });
    let (csv, case, coupled_gap) = log.into_inner();
    let scalar_worst = scalar_worst.into_inner();
    fs::write(dir.join("qp.csv"), csv).unwrap();
    check(
        4,
        "QP equivalence",
        scalar_result.is_ok() && coupled_result.is_ok() && case == 50,
        format!(
            "1000 scalar: max |qp - saturate| = {scalar_worst:.1e} (<= 1e-12); 50 coupled: max (qp - grid best) = {coupled_gap:.3e} (<= 1e-12)"
        ),
    )
}

// ------------------------------------------------------------ criteria 5-8

fn final_abs(report: &FigureReport, scenario: &str, controller: &str) -> f64 {
    report.run(scenario, controller).map_or(f64::INFINITY, |r| {
        if r.diverged {
            f64::INFINITY
        } else {
            r.final_state.abs()
        }
    })
}

fn closed_loop_checks(dir: &Path, model: &ConnModel) -> Vec<Check> {
    let problem = quad1d();
    let inputs = FigureInputs {
        problem: &problem,
        model,
        model_without_continuity: None,
        solver: SolverConfig {
            n_segments: 40,
            ..SolverConfig::default()
        },
        nlp: NlpOptions::default(),
    };
    let mut out = Vec::new();

    let fig3a = reproduce_figure(FigureId::Fig3a, &inputs, dir).unwrap();
    let fig3b = reproduce_figure(FigureId::Fig3b, &inputs, dir).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for (rep, sc) in [(&fig3a, "x0_20"), (&fig3b, "x0_m10")] {
        let conn = final_abs(rep, sc, "conn");
        let reference = final_abs(rep, sc, "reference");
        let dev = rep
            .comparison(sc, "conn_vs_reference")
            .map_or(f64::INFINITY, |c| c.max_state_deviation);
        pass &= conn < 0.05 && reference < 0.01 && dev < 0.5;
        detail.push(format!(
            "{sc}: |x(10)| conn {conn:.2e} (< 0.05), reference {reference:.2e} (< 0.01), max dev t>=1 {dev:.3} (< 0.5)"
        ));
    }
    out.push(check(5, "unseen initial conditions", pass, detail.join("; ")));

    let fig4 = reproduce_figure(FigureId::Fig4, &inputs, dir).unwrap();
    let sc = "x0_m4_bounded";
    let umax = fig4.run(sc, "conn").map_or(f64::INFINITY, |r| r.max_abs_input);
    let conn = final_abs(&fig4, sc, "conn");
    let dev = fig4
        .comparison(sc, "conn_vs_collocation")
        .map_or(f64::INFINITY, |c| c.max_state_deviation);
    out.push(check(
        6,
        "constrained input",
        umax <= FIGURE_INPUT_BOUND && conn < 0.05 && dev < 0.1,
        format!(
            "max |u| {umax:.6} (<= 20.1), |x(10)| {conn:.2e} (< 0.05), max dev vs collocation {dev:.4} (< 0.1), collocation {:?}",
            fig4.collocation_status
        ),
    ));

    let fig5 = reproduce_figure(FigureId::Fig5, &inputs, dir).unwrap();
    let a = final_abs(&fig5, "x0_m4_bounded_disturbed", "conn");
    let b = final_abs(&fig5, "x0_20_disturbed", "conn");
    out.push(check(
        7,
        "disturbance rejection",
        a < 0.05 && b < 0.05,
        format!("|x(10)| x0=-4 bounded {a:.2e}, x0=20 {b:.2e} (< 0.05)"),
    ));

    let tight = problem.with_input_bounds(s(-20.0), s(20.0)).unwrap();
    let opts = SimOptions {
        constrained: true,
        ..SimOptions::default()
    };
    let r = simulate_closed_loop(&tight, model, &s(-4.0), &DisturbanceSchedule::empty(), opts).unwrap();
    r.save_csv(&tight, dir.join("infeasible_x0_m4_umax20.csv")).unwrap();
    let xf = r.final_state()[0];
    let reached_end = !r.diverged && r.len() == tight.steps();
    out.push(check(
        8,
        "infeasibility at u_max = 20",
        reached_end && xf < 0.0,
        format!("x(10) = {xf:.6} (< 0), max x = {:.6}", r.x_series.max()),
    ));
    out
}

fn run_pipeline(dir: &Path) -> Vec<Check> {
    let mut checks = Vec::new();
    let (c1, ds) = dataset_reproduction(dir);
    checks.push(c1);
    checks.push(riccati_oracle(dir));
    checks.push(gradient_suite(dir));
    checks.push(qp_equivalence(dir));

    let problem = quad1d();
    let config = TrainConfig::default();
    let model = init_model(&problem, &ds, &config).unwrap();
    let outcome = train(model, &ds, &problem, &config).unwrap();
    assert!(outcome.aborted.is_none(), "training aborted: {:?}", outcome.aborted);
    // 101 trajectories, 201 samples, horizon 11: 101·(201 − 11) windows per epoch.
    assert!(outcome.log.iter().all(|e| e.updates == 19_190));
    outcome.model.save(dir.join("model.txt")).unwrap();
    checks.extend(closed_loop_checks(dir, &outcome.model));
    checks
}

fn artifact_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn acceptance_criteria() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let mut checks = run_pipeline(first.path());
    run_pipeline(second.path());

    let names = artifact_names(first.path());
    let mut differing = Vec::new();
    for name in &names {
        let a = fs::read(first.path().join(name)).unwrap();
        let b = fs::read(second.path().join(name)).ok();
        if b.as_deref() != Some(a.as_slice()) {
            differing.push(name.clone());
        }
    }
    let csv_count = names.iter().filter(|n| n.ends_with(".csv")).count();
    let same_set = names == artifact_names(second.path());
    checks.push(check(
        9,
        "determinism",
        differing.is_empty() && same_set && csv_count > 0,
        format!(
            "{} files ({csv_count} CSV) compared across two runs, {} differ{}",
            names.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(": {differing:?}") }
        ),
    ));

    println!();
    for c in &checks {
        println!(
            "criterion {} [{}] {}: {}",
            c.id,
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let failed: Vec<u32> = checks.iter().filter(|c| !c.pass).map(|c| c.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
