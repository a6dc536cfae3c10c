use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rangeloc::cloud::{read_cloud, write_cloud};
use rangeloc::factors::{factor_vector, read_factor_csv, write_factor_csv, FactorRow};
use rangeloc::forest::{evaluate_model, read_forest, train_forest, variance, write_forest, Dataset, ForestModel};
use rangeloc::harness::{
    emit_report, read_comparison, read_report, read_sweep_errors, route_summary, run_dynamic_comparison, sweep_ranges,
    write_comparison, ReportFormat, RunConfig, Scenario, TimingMode,
};
use rangeloc::ndt::{build_ndt_map, read_ndt_map, write_ndt_map};
use rangeloc::planner::{build_range_profile, read_profile, write_profile};
use rangeloc::scene::{generate_scene, make_trajectory, read_trajectory, write_trajectory, SceneSpec};
use rangeloc::{Error, Result};

/// Observation-range planning for NDT localization on synthetic street scenes.
///
/// Stages read and write fixed file names inside --out-dir, so running
/// `scene build-map factors sweep train plan compare report` in order forms the
/// whole pipeline.
#[derive(Parser)]
#[command(name = "rangeloc", version)]
struct Cli {
    /// TOML run configuration; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum)]
    timing_mode: Option<Mode>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Serial,
    Parallel,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Plotdata,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the scene cloud and trajectory: scene.toml, scene.txt, trajectory.csv.
    Scene {
        /// Scene description to use instead of the configured one.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Build the NDT map from scene.txt: map.ndt.
    BuildMap,
    /// Map factors for every waypoint and candidate range: factors.csv.
    Factors,
    /// Offset-based error and time per waypoint and range: sweep.csv, runs.csv, route.csv.
    Sweep,
    /// Fit one error model per range from factors.csv and sweep.csv: models/, model_eval.csv.
    Train,
    /// Select per-waypoint ranges from the models: profile.csv.
    Plan {
        /// Error budget in cm; defaults to the configured threshold.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Dynamic profile ranges vs the largest candidate: comparison.csv.
    Compare,
    /// Summaries of sweep.csv/runs.csv (and comparison.csv when present).
    Report {
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        c.set_seed(s);
    }
    if let Some(m) = cli.timing_mode {
        c.eval.timing_mode = match m {
            Mode::Serial => TimingMode::Serial,
            Mode::Parallel => TimingMode::Parallel,
        };
    }
    c.validate()?;
    Ok(c)
}

fn model_path(dir: &Path, range: f64) -> PathBuf {
    dir.join("models").join(format!("model_r{range}.txt"))
}

fn load_models(dir: &Path, c: &RunConfig) -> Result<Vec<ForestModel>> {
    c.eval.candidate_ranges.iter().map(|&r| read_forest(&model_path(dir, r))).collect()
}

fn scenario(dir: &Path) -> Result<Scenario> {
    let spec = SceneSpec::load(dir.join("scene.toml"))?;
    Ok(Scenario {
        scene: read_cloud(dir.join("scene.txt"))?,
        map: read_ndt_map(dir.join("map.ndt"))?,
        trajectory: read_trajectory(dir.join("trajectory.csv"))?,
        noise_sigma: spec.noise_sigma,
    })
}

fn run(cli: Cli) -> Result<()> {
    let c = config(&cli)?;
    let dir = cli.out_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    match &cli.command {
        Command::Scene { spec } => {
            let spec = match spec {
                Some(p) => SceneSpec::load(p)?,
                None => c.scene.clone(),
            };
            let cloud = generate_scene(&spec)?;
            let traj = make_trajectory(&spec, c.waypoint_spacing)?;
            let toml_path = dir.join("scene.toml");
            std::fs::write(&toml_path, spec.to_toml_string()).map_err(|e| Error::io(&toml_path, e))?;
            write_cloud(dir.join("scene.txt"), &cloud)?;
            write_trajectory(dir.join("trajectory.csv"), &traj)?;
            println!("scene: {} points, {} waypoints over {} m", cloud.len(), traj.len(), spec.total_length());
        }
        Command::BuildMap => {
            let cloud = read_cloud(dir.join("scene.txt"))?;
            let map = build_ndt_map(&cloud, c.eval.cell_size)?;
            write_ndt_map(dir.join("map.ndt"), &map)?;
            println!("map: {} cells of {} m", map.len(), map.cell_size());
        }
        Command::Factors => {
            let map = read_ndt_map(dir.join("map.ndt"))?;
            let traj = read_trajectory(dir.join("trajectory.csv"))?;
            let mut rows = Vec::new();
            for (id, w) in traj.waypoints.iter().enumerate() {
                for &r in &c.eval.candidate_ranges {
                    rows.push(FactorRow {
                        waypoint_id: id,
                        factors: factor_vector(&map, &w.position, r, &c.factors)?,
                    });
                }
            }
            write_factor_csv(dir.join("factors.csv"), &rows)?;
            println!("factors: {} rows", rows.len());
        }
        Command::Sweep => {
            let sc = scenario(dir)?;
            let reports = sweep_ranges(&sc, &c.eval, &c.factors)?;
            emit_report(dir, &reports, ReportFormat::Csv, c.eval.timing_mode)?;
            print_route(&reports);
        }
        Command::Train => {
            let factors = read_factor_csv(dir.join("factors.csv"))?;
            let errors = read_sweep_errors(&dir.join("sweep.csv"))?;
            let data = Dataset::join(&factors, &errors);
            if data.dropped > 0 {
                println!("train: {} rows without a finite error dropped", data.dropped);
            }
            let (train, hold) = data.split_by_waypoint(c.holdout_fraction, c.forest.seed);
            let models_dir = dir.join("models");
            std::fs::create_dir_all(&models_dir).map_err(|e| Error::io(&models_dir, e))?;
            let mut eval = String::from("# rangeloc model_eval v1\nrange,train_rows,holdout_rows,mae_cm,mse_cm2,holdout_variance_cm2\n");
            for &r in &c.eval.candidate_ranges {
                let (tr, ho) = (train.for_range(r), hold.for_range(r));
                if !ho.is_empty() && !tr.is_empty() {
                    let m = train_forest(&tr, &c.forest)?;
                    let ev = evaluate_model(&m, &ho)?;
                    let var = variance(&ho.targets());
                    eval += &format!("{r},{},{},{},{},{var}\n", tr.len(), ho.len(), ev.mae_cm, ev.mse_cm2);
                    println!("range {r:>4}: holdout mae {:.2} cm, mse {:.2} (variance {var:.2})", ev.mae_cm, ev.mse_cm2);
                }
                write_forest(&model_path(dir, r), &train_forest(&data.for_range(r), &c.forest)?)?;
            }
            let p = dir.join("model_eval.csv");
            std::fs::write(&p, eval).map_err(|e| Error::io(&p, e))?;
        }
        Command::Plan { threshold } => {
            let models = load_models(dir, &c)?;
            let map = read_ndt_map(dir.join("map.ndt"))?;
            let traj = read_trajectory(dir.join("trajectory.csv"))?;
            let t = threshold.unwrap_or(c.eval.threshold_cm);
            let profile = build_range_profile(&models, &map, &traj, t, &c.eval.candidate_ranges, &c.factors)?;
            write_profile(dir.join("profile.csv"), &profile)?;
            println!(
                "profile: mean range {:.1} m, {:.1}% predicted within {t} cm",
                profile.mean_range(),
                100.0 * profile.satisfied_fraction()
            );
        }
        Command::Compare => {
            let sc = scenario(dir)?;
            let profile = read_profile(dir.join("profile.csv"))?;
            let report = run_dynamic_comparison(&sc, &profile, &c.eval)?;
            write_comparison(&dir.join("comparison.csv"), &report)?;
            print_comparison(&report.summary(), report.threshold_cm);
        }
        Command::Report { format } => {
            let reports = read_report(dir)?;
            let format = match format {
                Format::Csv => ReportFormat::Csv,
                Format::Plotdata => ReportFormat::Plotdata,
            };
            for p in emit_report(dir, &reports, format, c.eval.timing_mode)? {
                println!("wrote {}", p.display());
            }
            print_route(&reports);
            let cmp = dir.join("comparison.csv");
            if cmp.exists() {
                let r = read_comparison(&cmp)?;
                print_comparison(&r.summary(), r.threshold_cm);
            }
        }
    }
    Ok(())
}

fn print_route(reports: &[rangeloc::harness::WaypointReport]) {
    println!("range  error_cm  mean_ms  max_ms  flagged");
    for r in route_summary(reports) {
        println!(
            "{:>5}  {:>8.2}  {:>7.2}  {:>6.1}  {:>7}",
            r.range, r.mean_error_cm, r.mean_time_ms, r.max_time_ms, r.flagged
        );
    }
}

fn print_comparison(s: &rangeloc::harness::ComparisonSummary, threshold: f64) {
    println!(
        "dynamic: {:.2} ms mean, {:.1} ms max, {:.2} cm mean error, {:.1} m mean range",
        s.dynamic_mean_time_ms, s.dynamic_max_time_ms, s.dynamic_mean_error_cm, s.dynamic_mean_range
    );
    println!(
        "static {} m: {:.2} ms mean, {:.1} ms max, {:.2} cm mean error",
        s.static_range, s.static_mean_time_ms, s.static_max_time_ms, s.static_mean_error_cm
    );
    println!(
        "{:.1}% of {} waypoints within {threshold} cm ({} excluded, {} flagged)",
        100.0 * s.within_threshold,
        s.evaluated,
        s.excluded,
        s.flagged
    );
}
