//! CSV emission of sweeps and comparisons, and their readers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{mean, ComparisonReport, ComparisonRow, OffsetRun, RangeEval, RangeReport, TimingMode, WaypointReport};
use crate::cloud::Pose;
use crate::error::{Error, Result};
use crate::factors::FactorVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// `sweep.csv`, `runs.csv` and `route.csv`.
    Csv,
    /// `plotdata.csv`: one `(waypoint_id, range, metric, value)` row per value.
    Plotdata,
}

const SWEEP_HEADER: &str = "# rangeloc sweep v1";
const RUNS_HEADER: &str = "# rangeloc runs v1";
const SWEEP_FIXED: [&str; 13] = [
    "waypoint_id",
    "range",
    "gt_x",
    "gt_y",
    "gt_z",
    "gt_roll",
    "gt_pitch",
    "gt_yaw",
    "mean_error_cm",
    "mean_time_ms",
    "max_time_ms",
    "diverged",
    "scan_points",
];

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn write(path: &Path, text: String) -> Result<PathBuf> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

/// Writes the reports into `dir` and returns the files written.
pub fn emit_report(dir: &Path, reports: &[WaypointReport], format: ReportFormat, mode: TimingMode) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no waypoint reports to emit".into()));
    }
    match format {
        ReportFormat::Csv => {
            let mut sweep = format!(
                "{SWEEP_HEADER} timing_mode={}\n{},{}\n",
                mode.as_str(),
                SWEEP_FIXED.join(","),
                FactorVector::COLUMNS.join(",")
            );
            let mut runs = format!(
                "{RUNS_HEADER} timing_mode={}\nwaypoint_id,range,offset,error_cm,rotation_error_rad,time_ms,iterations,converged\n",
                mode.as_str()
            );
            for w in reports {
                let Some(gt) = w.ground_truth else {
                    writeln!(sweep, "# excluded={}", w.waypoint_id).unwrap();
                    continue;
                };
                for r in &w.ranges {
                    let e = &r.eval;
                    write!(
                        sweep,
                        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                        w.waypoint_id,
                        e.range,
                        gt.tx,
                        gt.ty,
                        gt.tz,
                        gt.roll,
                        gt.pitch,
                        gt.yaw,
                        e.mean_error_cm,
                        e.mean_time_ms,
                        e.max_time_ms,
                        e.diverged,
                        e.scan_points
                    )
                    .unwrap();
                    for v in r.factors.values() {
                        write!(sweep, ",{}", opt(v)).unwrap();
                    }
                    sweep.push('\n');
                    for (k, o) in e.runs.iter().enumerate() {
                        writeln!(
                            runs,
                            "{},{},{k},{},{},{},{},{}",
                            w.waypoint_id, e.range, o.error_cm, o.rotation_error_rad, o.time_ms, o.iterations, o.converged
                        )
                        .unwrap();
                    }
                }
            }
            let route = route_csv(&route_summary(reports));
            Ok(vec![
                write(&dir.join("sweep.csv"), sweep)?,
                write(&dir.join("runs.csv"), runs)?,
                write(&dir.join("route.csv"), route)?,
            ])
        }
        ReportFormat::Plotdata => {
            let mut text = String::from("# rangeloc plotdata v1\nwaypoint_id,range,metric,value\n");
            for w in reports {
                for r in &w.ranges {
                    let e = &r.eval;
                    let mut row = |metric: &str, v: Option<f64>| {
                        writeln!(text, "{},{},{metric},{}", w.waypoint_id, e.range, opt(v)).unwrap()
                    };
                    row("mean_error_cm", Some(e.mean_error_cm));
                    row("mean_time_ms", Some(e.mean_time_ms));
                    row("max_time_ms", Some(e.max_time_ms));
                    for (name, v) in FactorVector::COLUMNS.iter().zip(r.factors.values()) {
                        row(name, v);
                    }
                }
            }
            Ok(vec![write(&dir.join("plotdata.csv"), text)?])
        }
    }
}

/// Reads `sweep.csv` and `runs.csv` from `dir` back into reports.
pub fn read_report(dir: &Path) -> Result<Vec<WaypointReport>> {
    let sweep_path = dir.join("sweep.csv");
    let runs_path = dir.join("runs.csv");
    let sweep = std::fs::read_to_string(&sweep_path).map_err(|e| Error::io(&sweep_path, e))?;
    let runs_text = std::fs::read_to_string(&runs_path).map_err(|e| Error::io(&runs_path, e))?;

    let mut runs: Vec<(usize, f64, OffsetRun)> = Vec::new();
    for (i, line) in runs_text.lines().enumerate() {
        if line.starts_with('#') || line.starts_with("waypoint_id") || line.is_empty() {
            continue;
        }
        let t: Vec<&str> = line.split(',').collect();
        let bad = |s: &str| Error::parse(&runs_path, i + 1, format!("bad value `{s}`"));
        if t.len() != 8 {
            return Err(Error::parse(&runs_path, i + 1, "expected 8 fields"));
        }
        let f = |k: usize| t[k].parse::<f64>().map_err(|_| bad(t[k]));
        runs.push((
            t[0].parse().map_err(|_| bad(t[0]))?,
            f(1)?,
            OffsetRun {
                error_cm: f(3)?,
                rotation_error_rad: f(4)?,
                time_ms: f(5)?,
                iterations: t[6].parse().map_err(|_| bad(t[6]))?,
                converged: t[7].parse().map_err(|_| bad(t[7]))?,
            },
        ));
    }

    let mut reports: Vec<WaypointReport> = Vec::new();
    let width = SWEEP_FIXED.len() + FactorVector::COLUMNS.len();
    for (i, line) in sweep.lines().enumerate() {
        let bad = |s: &str| Error::parse(&sweep_path, i + 1, format!("bad value `{s}`"));
        if let Some(id) = line.strip_prefix("# excluded=") {
            reports.push(WaypointReport {
                waypoint_id: id.parse().map_err(|_| bad(id))?,
                ground_truth: None,
                ranges: Vec::new(),
            });
            continue;
        }
        if line.starts_with('#') || line.starts_with("waypoint_id") || line.is_empty() {
            continue;
        }
        let t: Vec<&str> = line.split(',').collect();
        if t.len() != width {
            return Err(Error::parse(&sweep_path, i + 1, format!("expected {width} fields")));
        }
        let f = |k: usize| t[k].parse::<f64>().map_err(|_| bad(t[k]));
        let id: usize = t[0].parse().map_err(|_| bad(t[0]))?;
        let range = f(1)?;
        let gt = Pose::from_vector(&nalgebra::Vector6::new(f(2)?, f(3)?, f(4)?, f(5)?, f(6)?, f(7)?));
        let values = t[SWEEP_FIXED.len()..]
            .iter()
            .map(|s| if s.is_empty() { Ok(None) } else { s.parse().map(Some).map_err(|_| bad(s)) })
            .collect::<Result<Vec<_>>>()?;
        let eval = RangeEval {
            range,
            mean_error_cm: f(8)?,
            mean_time_ms: f(9)?,
            max_time_ms: f(10)?,
            diverged: t[11].parse().map_err(|_| bad(t[11]))?,
            scan_points: t[12].parse().map_err(|_| bad(t[12]))?,
            runs: runs
                .iter()
                .filter(|(w, r, _)| *w == id && *r == range)
                .map(|x| x.2)
                .collect(),
        };
        let factors = FactorVector::from_values(range, &values).map_err(|e| Error::parse(&sweep_path, i + 1, e.to_string()))?;
        let report = match reports.last_mut() {
            Some(w) if w.waypoint_id == id => w,
            _ => {
                reports.push(WaypointReport {
                    waypoint_id: id,
                    ground_truth: Some(gt),
                    ranges: Vec::new(),
                });
                reports.last_mut().unwrap()
            }
        };
        report.ranges.push(RangeReport { eval, factors });
    }
    reports.sort_by_key(|w| w.waypoint_id);
    Ok(reports)
}

/// Route-level aggregate for one range, the analogue of a Table-I column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteRow {
    pub range: f64,
    /// Mean over waypoints with a finite error.
    pub mean_error_cm: f64,
    pub mean_time_ms: f64,
    pub max_time_ms: f64,
    pub waypoints: usize,
    pub flagged: usize,
    pub excluded: usize,
}

pub fn route_summary(reports: &[WaypointReport]) -> Vec<RouteRow> {
    let excluded = reports.iter().filter(|w| w.excluded()).count();
    let Some(first) = reports.iter().find(|w| !w.excluded()) else {
        return Vec::new();
    };
    first
        .ranges
        .iter()
        .map(|r| {
            let evals: Vec<&RangeEval> = reports.iter().filter_map(|w| w.at(r.eval.range)).map(|x| &x.eval).collect();
            RouteRow {
                range: r.eval.range,
                mean_error_cm: mean(evals.iter().map(|e| e.mean_error_cm).filter(|e| e.is_finite())),
                mean_time_ms: mean(evals.iter().map(|e| e.mean_time_ms)),
                max_time_ms: evals.iter().map(|e| e.max_time_ms).fold(0.0, f64::max),
                waypoints: evals.len(),
                flagged: evals.iter().filter(|e| e.flagged()).count(),
                excluded,
            }
        })
        .collect()
}

fn route_csv(rows: &[RouteRow]) -> String {
    let mut text = String::from("# rangeloc route v1\nrange,mean_error_cm,mean_time_ms,max_time_ms,waypoints,flagged,excluded\n");
    for r in rows {
        writeln!(
            text,
            "{},{},{},{},{},{},{}",
            r.range, r.mean_error_cm, r.mean_time_ms, r.max_time_ms, r.waypoints, r.flagged, r.excluded
        )
        .unwrap();
    }
    text
}

pub fn write_route_summary(path: &Path, rows: &[RouteRow]) -> Result<()> {
    write(path, route_csv(rows)).map(|_| ())
}

const COMPARISON_HEADER: &str = "# rangeloc comparison v1";

pub fn write_comparison(path: &Path, report: &ComparisonReport) -> Result<()> {
    let mut text = format!(
        "{COMPARISON_HEADER} threshold_cm={} static_range={}\n\
         waypoint_id,excluded,dynamic_range,dynamic_error_cm,dynamic_time_ms,dynamic_max_time_ms,dynamic_diverged,dynamic_scan_points,\
         static_error_cm,static_time_ms,static_max_time_ms,static_diverged,static_scan_points\n",
        report.threshold_cm, report.static_range
    );
    for r in &report.rows {
        match (&r.dynamic, &r.fixed) {
            (Some(d), Some(s)) => writeln!(
                text,
                "{},false,{},{},{},{},{},{},{},{},{},{},{}",
                r.waypoint_id,
                d.range,
                d.mean_error_cm,
                d.mean_time_ms,
                d.max_time_ms,
                d.diverged,
                d.scan_points,
                s.mean_error_cm,
                s.mean_time_ms,
                s.max_time_ms,
                s.diverged,
                s.scan_points
            )
            .unwrap(),
            _ => writeln!(text, "{},true,,,,,,,,,,,", r.waypoint_id).unwrap(),
        }
    }
    let s = report.summary();
    writeln!(
        text,
        "# summary evaluated={} excluded={} flagged={} dynamic_mean_time_ms={} dynamic_max_time_ms={} dynamic_mean_error_cm={} \
         dynamic_mean_range={} static_mean_time_ms={} static_max_time_ms={} static_mean_error_cm={} within_threshold={}",
        s.evaluated,
        s.excluded,
        s.flagged,
        s.dynamic_mean_time_ms,
        s.dynamic_max_time_ms,
        s.dynamic_mean_error_cm,
        s.dynamic_mean_range,
        s.static_mean_time_ms,
        s.static_max_time_ms,
        s.static_mean_error_cm,
        s.within_threshold
    )
    .unwrap();
    write(path, text).map(|_| ())
}

/// Reads a comparison file. Per-offset runs are not stored there, so the
/// evaluations come back with empty `runs`.
pub fn read_comparison(path: &Path) -> Result<ComparisonReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let meta = lines
        .next()
        .and_then(|h| h.strip_prefix(COMPARISON_HEADER))
        .ok_or_else(|| Error::parse(path, 1, "missing comparison header"))?;
    let (mut threshold_cm, mut static_range) = (None, None);
    for kv in meta.split_whitespace() {
        match kv.split_once('=') {
            Some(("threshold_cm", v)) => threshold_cm = v.parse().ok(),
            Some(("static_range", v)) => static_range = v.parse().ok(),
            _ => {}
        }
    }
    let (Some(threshold_cm), Some(static_range)) = (threshold_cm, static_range) else {
        return Err(Error::parse(path, 1, "header lacks threshold_cm or static_range"));
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let ln = i + 2;
        if line.starts_with('#') || line.starts_with("waypoint_id") || line.is_empty() {
            continue;
        }
        let t: Vec<&str> = line.split(',').collect();
        if t.len() != 13 {
            return Err(Error::parse(path, ln, "expected 13 fields"));
        }
        let bad = |s: &str| Error::parse(path, ln, format!("bad value `{s}`"));
        let waypoint_id = t[0].parse().map_err(|_| bad(t[0]))?;
        let excluded: bool = t[1].parse().map_err(|_| bad(t[1]))?;
        if excluded {
            rows.push(ComparisonRow { waypoint_id, excluded, dynamic: None, fixed: None });
            continue;
        }
        let f = |k: usize| t[k].parse::<f64>().map_err(|_| bad(t[k]));
        let u = |k: usize| t[k].parse::<usize>().map_err(|_| bad(t[k]));
        let eval = |range: f64, k: usize| -> Result<RangeEval> {
            Ok(RangeEval {
                range,
                mean_error_cm: f(k)?,
                mean_time_ms: f(k + 1)?,
                max_time_ms: f(k + 2)?,
                diverged: u(k + 3)?,
                scan_points: u(k + 4)?,
                runs: Vec::new(),
            })
        };
        rows.push(ComparisonRow {
            waypoint_id,
            excluded,
            dynamic: Some(eval(f(2)?, 3)?),
            fixed: Some(eval(static_range, 8)?),
        });
    }
    Ok(ComparisonReport { threshold_cm, static_range, rows })
}

/// `(waypoint_id, range, mean_error_cm)` from a `sweep.csv`, located by header name.
pub fn read_sweep_errors(path: &Path) -> Result<Vec<(usize, f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cols: Option<[usize; 3]> = None;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let t: Vec<&str> = line.split(',').collect();
        let Some(c) = cols else {
            let find = |name: &str| {
                t.iter()
                    .position(|h| *h == name)
                    .ok_or_else(|| Error::parse(path, i + 1, format!("no `{name}` column")))
            };
            cols = Some([find("waypoint_id")?, find("range")?, find("mean_error_cm")?]);
            continue;
        };
        let get = |k: usize| t.get(k).copied().ok_or_else(|| Error::parse(path, i + 1, "short row"));
        let bad = |s: &str| Error::parse(path, i + 1, format!("bad value `{s}`"));
        let (w, r, e) = (get(c[0])?, get(c[1])?, get(c[2])?);
        out.push((
            w.parse().map_err(|_| bad(w))?,
            r.parse().map_err(|_| bad(r))?,
            e.parse().map_err(|_| bad(e))?,
        ));
    }
    Ok(out)
}
