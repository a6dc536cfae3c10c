//! End-to-end acceptance run: one PASS/FAIL line per criterion, non-zero
//! exit if any fails. Run alone (`cargo test --release --test acceptance`)
//! since several checks are wall-clock measurements.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::Vector6;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{
    central_difference, exhaustive_tree, factor_violations, fixed_assignment_score, pose_grid_optimum, rangeloc,
    small_scene, PIPELINE, SMALL_CONFIG,
};
use rangeloc::cloud::{Point, Pose};
use rangeloc::factors::FactorVector;
use rangeloc::forest::{
    evaluate_model, forest_to_string, predict_error, train_forest, variance, Dataset, ForestParams, Node,
};
use rangeloc::harness::{
    dataset_from_reports, route_summary, run_dynamic_comparison, spearman, sweep_ranges, train_models, RunConfig,
    Scenario, WaypointReport,
};
use rangeloc::ndt::{build_ndt_map, ndt_gradient_hessian, register, RegConfig};
use rangeloc::planner::{build_range_profile, default_candidates, plan_range};
use rangeloc::scene::{generate_scene, make_trajectory};

const CORPUS_SEED: u64 = 7;
const C1_SCENES: u64 = 10;
const C1_TOLERANCE_M: f64 = 0.02;
const C1_BUDGET_S: f64 = 300.0;
const C2_CONFIGS: u64 = 100;
const C2_TOLERANCE: f64 = 1e-4;
const C3_MAX_RHO: f64 = -0.7;
const C4_MIN_RHO: f64 = 0.9;
const C5_THRESHOLD_CM: f64 = 10.0;
const C5_MAX_TIME_RATIO: f64 = 0.5;
const C5_MIN_WITHIN: f64 = 0.8;
const C9_HOLDOUT: f64 = 0.2;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_registration_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut within = 0;
    for k in 0..C1_SCENES {
        let s = small_scene(10_000 + k);
        let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let init = s.truth.compose(&Pose::shift(0.5 * a.cos(), 0.5 * a.sin()));
        let r = register(&s.map, &s.scan, &init, &RegConfig::default()).map_err(|e| e.to_string())?;
        let grid = pose_grid_optimum(&s.map, &s.scan, &s.truth, 0.6, 0.01, 3f64.to_radians(), 0.25f64.to_radians());
        let gap = r.pose.position_error(&grid);
        within += usize::from(gap <= C1_TOLERANCE_M);
        worst = worst.max(gap);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= C1_TOLERANCE_M && secs < C1_BUDGET_S,
        format!("{within}/{C1_SCENES} scenes within {} cm, worst gap {:.2} cm, {secs:.0} s", C1_TOLERANCE_M * 100.0, worst * 100.0),
    )
}

fn c2_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    for k in 0..C2_CONFIGS {
        let s = small_scene(20_000 + k);
        let mut v = s.truth.to_vector();
        for i in 0..6 {
            v[i] += if i < 3 { rng.random_range(-0.3..0.3) } else { rng.random_range(-0.05..0.05) };
        }
        let d = ndt_gradient_hessian(&s.map, &s.scan, &Pose::from_vector(&v));
        let f = fixed_assignment_score(&s.map, &s.scan, &v);
        let fd: Vector6<f64> = central_difference(&f, &v, 1e-6);
        worst = worst.max((d.gradient - fd).norm() / fd.norm().max(1e-12));
    }
    check(worst < C2_TOLERANCE, format!("{C2_CONFIGS} configurations, worst relative error {worst:.1e}"))
}

struct Corpus {
    cfg: RunConfig,
    scenario: Scenario,
    reports: Vec<WaypointReport>,
}

fn corpus() -> rangeloc::Result<Corpus> {
    let cfg = RunConfig::with_seed(CORPUS_SEED);
    let scene = generate_scene(&cfg.scene)?;
    let scenario = Scenario {
        map: build_ndt_map(&scene, cfg.eval.cell_size)?,
        trajectory: make_trajectory(&cfg.scene, cfg.waypoint_spacing)?,
        scene,
        noise_sigma: cfg.scene.noise_sigma,
    };
    let reports = sweep_ranges(&scenario, &cfg.eval, &cfg.factors)?;
    Ok(Corpus { cfg, scenario, reports })
}

fn route_line(c: &Corpus, metric: impl Fn(&rangeloc::harness::RouteRow) -> f64) -> (Vec<f64>, Vec<f64>) {
    route_summary(&c.reports).iter().map(|r| (r.range, metric(r))).unzip()
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(" ")
}

fn c3_error_trend(c: &Corpus) -> Outcome {
    let (ranges, err) = route_line(c, |r| r.mean_error_cm);
    let rho = spearman(&ranges, &err);
    check(rho <= C3_MAX_RHO, format!("rho {rho:.3}, error cm [{}]", fmt(&err)))
}

fn c4_time_trend(c: &Corpus) -> Outcome {
    let (ranges, time) = route_line(c, |r| r.mean_time_ms);
    let rho = spearman(&ranges, &time);
    let increasing = time.windows(2).all(|w| w[0] < w[1]);
    check(rho >= C4_MIN_RHO && increasing, format!("rho {rho:.3}, time ms [{}]", fmt(&time)))
}

fn c5_dynamic_vs_static(c: &Corpus) -> Outcome {
    let data = dataset_from_reports(&c.reports);
    let models = train_models(&data, &c.cfg.eval.candidate_ranges, &c.cfg.forest).map_err(|e| e.to_string())?;
    let profile = build_range_profile(
        &models,
        &c.scenario.map,
        &c.scenario.trajectory,
        C5_THRESHOLD_CM,
        &c.cfg.eval.candidate_ranges,
        &c.cfg.factors,
    )
    .map_err(|e| e.to_string())?;
    let s = run_dynamic_comparison(&c.scenario, &profile, &c.cfg.eval).map_err(|e| e.to_string())?.summary();
    let ratio = s.dynamic_mean_time_ms / s.static_mean_time_ms;
    check(
        ratio <= C5_MAX_TIME_RATIO && s.within_threshold >= C5_MIN_WITHIN,
        format!(
            "dynamic {:.1} ms vs static {:.1} ms ({:.0}%), {:.1}% within {C5_THRESHOLD_CM} cm, mean range {:.1} m",
            s.dynamic_mean_time_ms,
            s.static_mean_time_ms,
            100.0 * ratio,
            100.0 * s.within_threshold,
            s.dynamic_mean_range
        ),
    )
}

fn c6_planner() -> Outcome {
    let table = [15.0, 15.0, 8.6, 6.0, 4.1, 2.6, 1.7, 0.9, 0.3];
    let c = default_candidates();
    let predicted: Vec<(f64, f64)> = c.iter().copied().zip(table).collect();
    let at10 = plan_range(&predicted, 10.0, &c).map_err(|e| e.to_string())?.range;
    let at25 = plan_range(&predicted, 25.0, &c).map_err(|e| e.to_string())?.range;
    check(at10 == 20.0 && at25 == 10.0, format!("10 cm -> {at10} m, 25 cm -> {at25} m"))
}

fn c7_factor_invariants(c: &Corpus) -> Outcome {
    let mut violations = Vec::new();
    let mut checked = 0;
    let ranges = [0.5, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0];
    for w in &c.scenario.trajectory.waypoints {
        violations.extend(factor_violations(&c.scenario.map, &w.position, &ranges, &c.cfg.factors));
        checked += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    for k in 0..20 {
        let s = small_scene(30_000 + k);
        let p = Point::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), 0.0);
        violations.extend(factor_violations(&s.map, &p, &[0.5, 2.0, 5.0, 10.0, 15.0], &c.cfg.factors));
        checked += 1;
    }
    violations.extend(factor_violations(&c.scenario.map, &Point::new(1e4, 1e4, 0.0), &[10.0], &c.cfg.factors));
    let head = violations.first().cloned().unwrap_or_default();
    check(violations.is_empty(), format!("{checked} centers, {} violations {head}", violations.len()))
}

fn fv(a: f64, b: f64) -> FactorVector {
    let mut v = [Some(1.0); 11];
    v[0] = Some(a);
    v[7] = Some(b);
    FactorVector::from_values(15.0, &v).unwrap()
}

fn c8_forest_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut data = Dataset::default();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for i in 0..12 {
        let a = rng.random_range(0..8) as f64;
        let b = rng.random_range(0..10) as f64 * 0.25;
        let t = rng.random_range(0..20i64);
        data.push(i, fv(a, b), Some(t as f64));
        x.push(vec![a, b]);
        y.push(t);
    }
    let single = ForestParams { n_trees: 1, max_depth: 8, min_leaf: 1, features_per_split: Some(12), bootstrap: false, seed: 0 };
    let model = train_forest(&data, &single).map_err(|e| e.to_string())?;
    let oracle: Vec<Node> = exhaustive_tree(&x, &y, 8, 1)
        .into_iter()
        .map(|n| match n {
            Node::Split { feature, threshold, right } => Node::Split { feature: [0, 7][feature], threshold, right },
            leaf => leaf,
        })
        .collect();
    let cart = model.trees[0].nodes == oracle;

    let mut constant = Dataset::default();
    for i in 0..40 {
        constant.push(i, fv(rng.random_range(0.0..50.0), rng.random()), Some(7.25));
    }
    let cm = train_forest(&constant, &ForestParams { seed: 3, ..Default::default() }).map_err(|e| e.to_string())?;
    let exact = (0..20).all(|_| predict_error(&cm, &fv(rng.random_range(-10.0..60.0), rng.random())).unwrap() == 7.25);

    let p = ForestParams { seed: 11, ..Default::default() };
    let a = forest_to_string(&train_forest(&data, &p).map_err(|e| e.to_string())?);
    let b = forest_to_string(&train_forest(&data, &p).map_err(|e| e.to_string())?);
    check(
        cart && exact && a == b,
        format!("exhaustive CART {cart}, constant exact {exact}, reproducible {}", a == b),
    )
}

fn c9_model_gate(c: &Corpus) -> Outcome {
    let data = dataset_from_reports(&c.reports);
    let (train, hold) = data.split_by_waypoint(C9_HOLDOUT, c.cfg.forest.seed);
    let (mut sse, mut sst, mut n) = (0.0, 0.0, 0);
    let mut per_range = Vec::new();
    for &r in &c.cfg.eval.candidate_ranges {
        let (tr, ho) = (train.for_range(r), hold.for_range(r));
        if tr.is_empty() || ho.is_empty() {
            continue;
        }
        let m = train_forest(&tr, &c.cfg.forest).map_err(|e| e.to_string())?;
        let ev = evaluate_model(&m, &ho).map_err(|e| e.to_string())?;
        let var = variance(&ho.targets());
        sse += ev.mse_cm2 * ho.len() as f64;
        sst += var * ho.len() as f64;
        n += ho.len();
        per_range.push(format!("{r}:{:.1}/{var:.1}", ev.mse_cm2));
    }
    if n == 0 {
        return Err("empty holdout".into());
    }
    let (mse, var) = (sse / n as f64, sst / n as f64);
    check(
        mse <= var,
        format!("holdout mse {mse:.2} vs variance {var:.2} over {n} rows [{}]", per_range.join(" ")),
    )
}

/// Drops every column or `key=value` token naming a time.
fn strip_timing(text: &str) -> String {
    let mut out = String::new();
    let mut drop: Vec<usize> = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') {
            let kept: Vec<&str> = line.split(' ').filter(|t| !t.contains("time_ms=")).collect();
            out += &kept.join(" ");
        } else {
            let cells: Vec<&str> = line.split(',').collect();
            if drop.is_empty() && cells.iter().any(|c| c.contains("time")) {
                drop = cells.iter().enumerate().filter(|(_, c)| c.contains("time")).map(|(i, _)| i).collect();
            }
            let kept: Vec<&str> = cells.iter().enumerate().filter(|(i, _)| !drop.contains(i)).map(|(_, c)| *c).collect();
            out += &kept.join(",");
        }
        out.push('\n');
    }
    out
}

fn snapshot(dir: &Path) -> BTreeMap<String, String> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let name = p.strip_prefix(dir).unwrap().display().to_string();
                files.insert(name, strip_timing(&fs::read_to_string(&p).unwrap()));
            }
        }
    }
    files
}

fn c10_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, SMALL_CONFIG).map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        for args in PIPELINE {
            let args: Vec<&str> = args.iter().copied().chain(["--seed", "3"]).collect();
            let o = rangeloc(&cfg, &out, &args);
            if !o.status.success() {
                return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&o.stderr)));
            }
        }
        runs.push(snapshot(&out));
    }
    let differing: Vec<&String> = runs[0].keys().filter(|k| runs[0].get(*k) != runs[1].get(*k)).collect();
    let same_files = runs[0].len() == runs[1].len();
    check(
        differing.is_empty() && same_files,
        format!("{} files compared, differing {differing:?}", runs[0].len()),
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: u32, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("C{id:<2} {tag} {name}: {detail}");
    };
    report(1, "registration matches pose-grid optimum", c1_registration_oracle());
    report(2, "analytic gradient", c2_gradient());
    let corpus = corpus();
    match &corpus {
        Ok(c) => {
            report(3, "route error falls with range", c3_error_trend(c));
            report(4, "route time rises with range", c4_time_trend(c));
            report(5, "dynamic range vs static maximum", c5_dynamic_vs_static(c));
        }
        Err(e) => {
            for (id, name) in [(3, "route error falls with range"), (4, "route time rises with range"), (5, "dynamic range vs static maximum")] {
                report(id, name, Err(format!("corpus sweep failed: {e}")));
            }
        }
    }
    report(6, "planner on the reference error row", c6_planner());
    match &corpus {
        Ok(c) => report(7, "factor invariants", c7_factor_invariants(c)),
        Err(e) => report(7, "factor invariants", Err(e.to_string())),
    }
    report(8, "forest oracle", c8_forest_oracle());
    match &corpus {
        Ok(c) => report(9, "error model beats the mean", c9_model_gate(c)),
        Err(e) => report(9, "error model beats the mean", Err(e.to_string())),
    }
    report(10, "pipeline determinism", c10_determinism());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
