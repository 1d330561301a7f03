//! Acceptance suite: one line per criterion with its measured runtime.
//!
//! Run with `cargo test -p degen-cli --test acceptance`.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use degen_cli::config::{ExperimentConfig, Kind};
use degen_cli::experiments;
use degen_core::coupling::{self, CouplingSetup};
use degen_core::general_domain::{self as gd, DomainSpec, DriftField, SigmaField};
use degen_core::inequalities;
use degen_core::radial::{self, RadialModel};
use degen_core::seeding::{self, derive_seed};
use degen_core::stats::ks_distance;
use degen_core::transform;
use degen_core::{BallModel, CoeffFn};
use nalgebra::DVector;
use rand::Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn fmt_duration(d: Duration) -> String {
    let s = d.as_secs_f64();
    if s < 1e-3 {
        format!("{:.1} us", s * 1e6)
    } else if s < 1.0 {
        format!("{:.1} ms", s * 1e3)
    } else {
        format!("{s:.2} s")
    }
}

fn criterion(id: u32, name: &str, limit: Option<Duration>, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = run();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let passed = out.passed && in_time;
    let budget = match limit {
        Some(l) => format!("{} / limit {}", fmt_duration(elapsed), fmt_duration(l)),
        None => fmt_duration(elapsed),
    };
    println!(
        "[{}] {id:>2} {name}: {} ({budget}{})",
        if passed { "PASS" } else { "FAIL" },
        out.detail,
        if in_time { "" } else { ", over time limit" }
    );
    passed
}

fn config(kind: Kind, text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).unwrap().resolve(kind).unwrap()
}

fn optimal_exponent() -> Outcome {
    let start = Instant::now();
    let (p, f) = coupling::optimal_p();
    let took = start.elapsed();
    let (ep, ef) = ((p - (1.0 - SQRT_2 / 4.0)).abs(), (f - (SQRT_2 - 1.0)).abs());
    outcome(
        ep <= 1e-9 && ef <= 1e-9 && took < Duration::from_millis(1),
        format!(
            "p* = {p:.12} (err {ep:.1e}), F* = {f:.12} (err {ef:.1e}), call {}",
            fmt_duration(took)
        ),
    )
}

fn threshold_constant() -> Outcome {
    let c = experiments::threshold_c(SQRT_2);
    let err = (c - 2.0 * (SQRT_2 - 1.0)).abs();
    let row = experiments::threshold_row();
    outcome(
        err <= 1e-9 && row.c_star == "0.828427",
        format!("c* = {c:.12} (err {err:.1e}), table {}", row.c_star),
    )
}

fn lemma_a1_suite() -> Outcome {
    let mut rng = seeding::stream(101);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let samples = 100_000;
    for _ in 0..samples {
        let x = 1.0 - rng.random::<f64>();
        let y = 1.0 - rng.random::<f64>();
        let p = 1.0 - 0.5 * (1.0 - rng.random::<f64>()) * (1.0 - 1e-12);
        if x == y || p >= 1.0 {
            continue;
        }
        let (lhs, rhs) = inequalities::lemma_a1_check(x, y, p).unwrap();
        worst = worst.max(lhs / rhs - 1.0);
        if lhs > rhs * (1.0 + inequalities::POINT_SLACK) {
            violations += 1;
        }
    }
    let mut sup_err: f64 = 0.0;
    for q in [1.1, 1.5, 1.9] {
        let closed = (q - 1.0) * (q - 1.0) / (q * (2.0 - q));
        let rep = inequalities::a1_supremum(q).unwrap();
        sup_err = sup_err.max((rep.supremum - closed).abs());
    }
    outcome(
        violations == 0 && sup_err <= 1e-6,
        format!("{violations} violations in {samples} samples (worst lhs/rhs - 1 = {worst:.2e}); max supremum error {sup_err:.1e}"),
    )
}

fn sign_chain() -> Outcome {
    let qs = inequalities::q_grid();
    let reports: Vec<_> = qs
        .iter()
        .map(|&q| inequalities::f_chain_signs(q, 10_000).unwrap())
        .collect();
    let failed: Vec<f64> = reports.iter().filter(|r| !r.passed()).map(|r| r.q).collect();
    let endpoint = reports
        .iter()
        .flat_map(|r| r.endpoint_values)
        .map(f64::abs)
        .fold(0.0, f64::max);
    let mismatch = reports.iter().flat_map(|r| r.derivative_mismatch).fold(0.0, f64::max);
    outcome(
        qs.len() == 19 && failed.is_empty(),
        format!(
            "{} q values, failures at {failed:?}; max |f_i(1)| = {endpoint:.1e}; max derivative mismatch {mismatch:.1e}",
            qs.len()
        ),
    )
}

fn ellipticity() -> Outcome {
    let mut rng = seeding::stream(202);
    let mut worst_rel: f64 = 0.0;
    let mut bound_fail = 0;
    let mut bounded = 0;
    for _ in 0..100_000 {
        let m = rng.random_range(1..=5);
        let dir: Vec<f64> = (0..m).map(|_| seeding::gaussian(&mut rng)).collect();
        let norm = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
        let radius = rng.random::<f64>() * 0.999_999;
        let y: Vec<f64> = dir.iter().map(|c| c * radius / norm).collect();
        let xi: Vec<f64> = (0..m).map(|_| 3.0 * seeding::gaussian(&mut rng)).collect();

        let xi_sq: f64 = xi.iter().map(|c| c * c).sum();
        let form = transform::a_quadratic_form(&y, &xi);
        let v = DVector::from_column_slice(&xi);
        let via_matrix = (v.transpose() * transform::a_matrix(&y) * &v)[(0, 0)];
        let root = transform::a_sqrt(&y).unwrap() * &v;
        worst_rel = worst_rel
            .max((form - via_matrix).abs() / xi_sq)
            .max((form - root.norm_squared()).abs() / xi_sq);
        if radius <= 0.5 {
            bounded += 1;
            if form < 0.75 * xi_sq {
                bound_fail += 1;
            }
        }
    }
    outcome(
        worst_rel <= 1e-14 && bound_fail == 0,
        format!("max relative deviation {worst_rel:.1e} over 1e5 pairs; 3/4 bound failed on {bound_fail} of {bounded} pairs with |y| <= 1/2"),
    )
}

fn classification() -> Outcome {
    let cfg = config(
        Kind::Classify,
        "[classify]\nrs = [0.5, 0.75]\ncs = [0.5, 1.0, 1.9, 2.1, 3.0]\n",
    );
    let rows = experiments::classification_table(&cfg).unwrap();
    let mut wrong = Vec::new();
    for row in &rows {
        let expected = if row.r == 0.5 && row.c < 2.0 {
            "attainable"
        } else {
            "unattainable"
        };
        if row.attainable != expected {
            wrong.push(format!("r={} c={}: {}", row.r, row.c, row.verdict));
        }
    }
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("({}, {}) {}", r.r, r.c, r.verdict))
        .collect();
    outcome(
        wrong.is_empty() && rows.len() == 10,
        format!("{}; mismatches {wrong:?}", table.join(", ")),
    )
}

fn drift_formula() -> Outcome {
    let model = RadialModel::constant(2, 0.5, SQRT_2, 1.5).unwrap();
    let mut worst: f64 = 0.0;
    let mut cells = Vec::new();
    for (i, p) in [0.6, 0.75, 0.9].into_iter().enumerate() {
        for (j, v) in [0.01, 0.05, 0.2].into_iter().enumerate() {
            let rep =
                radial::verify_drift_of_yp(&model, p, v, 1e-6, 1_000_000, derive_seed(303, &[i as u64, j as u64]))
                    .unwrap();
            worst = worst.max(rep.z.abs());
            cells.push(format!("{:.2}", rep.z));
        }
    }
    outcome(
        worst < 4.0,
        format!("z on 3x3 (p, v) grid [{}]; max |z| = {worst:.2}", cells.join(", ")),
    )
}

fn occupation() -> Outcome {
    let cfg = config(
        Kind::Occupation,
        "[numeric]\nT = 1.0\ndt = 1e-5\nreplicas = 1000\nseed = 404\n[occupation]\ndeltas = [1e-3, 1e-2, 1e-1]\n",
    );
    assert_eq!((cfg.model.n, cfg.model.r, cfg.model.g.eval(1.0)), (2, 0.5, 1.0));
    let rows = experiments::occupation_rows(&cfg).unwrap();
    let xs: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_fraction).collect();
    let slope = experiments::log_log_slope(&xs, &ys);
    outcome(
        ys[0] < ys[1] && slope > 0.0,
        format!(
            "fractions {:.4} / {:.4} / {:.4} at delta 1e-3 / 1e-2 / 1e-1; log-log slope {slope:.3}",
            ys[0], ys[1], ys[2]
        ),
    )
}

fn coupling_mechanics() -> Outcome {
    let model = BallModel::constant(2, SQRT_2, 1.5).unwrap();
    let (p, _) = coupling::optimal_p();
    let x0 = [0.6, 0.8];
    let same = coupling::run_coupled(&model, &x0, &x0, 0.05, 1e-5, 505, p).unwrap();
    let identical = same.steps.iter().all(|s| s.w == 0.0 && s.gap == 0.0);

    let setup = CouplingSetup::new(&model, p).unwrap();
    let (x, xt) = coupling::boundary_pair(2, 1e-3);
    let paths = 1000;
    let held = (0..paths)
        .filter(|&i| {
            coupling::run_coupled_with(&model, &setup, &x, &xt, 0.05, 1e-5, derive_seed(506, &[i]), false)
                .unwrap()
                .inequality_held
        })
        .count();
    let fraction = held as f64 / paths as f64;
    outcome(
        identical && fraction >= 0.99,
        format!(
            "identical starts W == 0: {identical}; inequality held on {held}/{paths} paths (eps = {:.4}, C = {:.3}, factor {})",
            setup.eps,
            setup.constants.c_hat,
            coupling::SAFETY
        ),
    )
}

fn cross_simulator() -> Outcome {
    let model = BallModel::new(
        2,
        0.5,
        CoeffFn::constant(SQRT_2).unwrap(),
        CoeffFn::constant(1.0).unwrap(),
    )
    .unwrap();
    let [ball, rad, chart] = experiments::terminal_samples(&model, 1.0, 1e-3, 100_000, 606).unwrap();
    let ks = [
        ks_distance(&ball, &rad),
        ks_distance(&ball, &chart),
        ks_distance(&rad, &chart),
    ];
    outcome(
        ks.iter().all(|&k| k < 0.02),
        format!(
            "KS ball-radial {:.4}, ball-chart {:.4}, radial-chart {:.4} at 1e5 paths",
            ks[0], ks[1], ks[2]
        ),
    )
}

fn reduction() -> Outcome {
    let (gamma, g) = (SQRT_2, 1.0);
    let sphere = DomainSpec::sphere(2, CoeffFn::constant(gamma).unwrap(), CoeffFn::constant(g).unwrap()).unwrap();
    let boundary = gd::boundary_samples(&sphere, 1000, 707).unwrap();
    let alpha = gd::alpha(&sphere, &boundary).unwrap();
    let target = g / (gamma * gamma);
    let alpha_err = alpha.values.iter().map(|a| (a - target).abs()).fold(0.0, f64::max);

    let width = gd::default_neighborhood_width(&sphere, 708).unwrap();
    let near = gd::neighborhood_samples(&sphere, 20_000, width, 709).unwrap();
    let drift = gd::is_function_of_h(&sphere, |x| gd::normal_drift(&sphere, x), &near).unwrap();
    let diff = gd::is_function_of_h(&sphere, |x| gd::normal_diffusion(&sphere, x), &near).unwrap();

    let ell = DomainSpec::ellipsoid(
        vec![1.0, 2.0],
        SigmaField::Constant(nalgebra::DMatrix::identity(2, 2)),
        DriftField::Contracting,
    )
    .unwrap();
    let width = gd::default_neighborhood_width(&ell, 710).unwrap();
    let near = gd::neighborhood_samples(&ell, 20_000, width, 711).unwrap();
    let grad_sq = gd::is_function_of_h(&ell, |x| gd::normal_diffusion(&ell, x), &near).unwrap();

    outcome(
        alpha_err <= 1e-10 && drift.is_function && diff.is_function && !grad_sq.is_function,
        format!(
            "sphere alpha error {alpha_err:.1e}; sphere drift/diffusion function of h: {}/{}; ellipsoid <grad h, grad h> function of h: {}",
            drift.is_function, diff.is_function, grad_sq.is_function
        ),
    )
}

fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "json") && !p.ends_with("manifest.json"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn determinism() -> Outcome {
    let runs: [(Kind, &str); 9] = [
        (Kind::Simulate, "[numeric]\nT = 0.2\n"),
        (Kind::Couple, "[numeric]\nT = 0.01\n"),
        (Kind::Sweep, "[numeric]\nT = 0.005\nreplicas = 8\n"),
        (Kind::Classify, "[classify]\nrs = [0.5]\ncs = [1.0, 3.0]\n"),
        (Kind::VerifyInequalities, "[inequalities]\nsamples = 1000\n"),
        (Kind::Occupation, "[numeric]\nT = 0.1\ndt = 1e-4\nreplicas = 16\n"),
        (Kind::TransformCheck, "[numeric]\nT = 0.2\nreplicas = 500\n"),
        (
            Kind::Domain,
            "[domain]\nshape = \"ellipsoid\"\naxes = [1.0, 2.0]\ndrift = \"contracting\"\nsamples = 500\n",
        ),
        (Kind::PaperTables, ""),
    ];
    let tmp = tempfile::tempdir().unwrap();
    let mut compared = 0;
    let mut differing = Vec::new();
    for (kind, text) in runs {
        let mut trees = Vec::new();
        for rep in 0..2 {
            let mut cfg = ExperimentConfig::from_toml(text).unwrap();
            let dir = tmp.path().join(format!("{kind}-{rep}"));
            cfg.output.dir = Some(dir.clone());
            let cfg = cfg.resolve(kind).unwrap();
            let code = degen_cli::execute(kind, &cfg, true);
            assert!(
                code == degen_cli::EXIT_OK || code == degen_cli::EXIT_ASSERTION,
                "{kind} exited {code}"
            );
            trees.push(outputs(&dir));
        }
        compared += trees[0].len();
        if trees[0].is_empty() || trees[0] != trees[1] {
            differing.push(kind.as_str());
        }
    }
    outcome(
        differing.is_empty(),
        format!("{compared} output files over 9 experiments; differing: {differing:?}"),
    )
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        criterion(1, "optimal exponent", Some(Duration::from_millis(1)), optimal_exponent),
        criterion(
            2,
            "threshold constant",
            Some(Duration::from_millis(1)),
            threshold_constant,
        ),
        criterion(3, "two-point power inequality", Some(secs(5)), lemma_a1_suite),
        criterion(4, "sign chain", Some(secs(5)), sign_chain),
        criterion(5, "ellipticity of A(y)", Some(secs(2)), ellipticity),
        criterion(6, "boundary classification", Some(secs(10)), classification),
        criterion(7, "drift of Y^p", Some(secs(120)), drift_formula),
        criterion(8, "boundary occupation", Some(secs(300)), occupation),
        criterion(9, "coupling mechanics", Some(secs(300)), coupling_mechanics),
        criterion(10, "cross-simulator law", Some(secs(300)), cross_simulator),
        criterion(11, "reduction to h", Some(secs(10)), reduction),
        criterion(12, "determinism", None, determinism),
    ];
    let failed = results.iter().filter(|&&ok| !ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
