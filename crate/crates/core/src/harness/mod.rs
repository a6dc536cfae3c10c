//! End-to-end evaluation: ground truth, offset-based error and time per
//! waypoint and range, dataset assembly, and the dynamic-vs-static comparison.

mod config;
mod report;
mod stats;

pub use config::RunConfig;
pub use report::{
    emit_report, read_comparison, read_report, read_sweep_errors, route_summary, write_comparison, write_route_summary, ReportFormat,
    RouteRow,
};
pub use stats::{mean, spearman};

use std::str::FromStr;

use rayon::prelude::*;

use crate::cloud::{crop_range, voxel_filter, Point, PointCloud, Pose};
use crate::error::{Error, Result};
use crate::factors::{factor_vector, FactorConfig, FactorVector};
use crate::forest::{train_forest, Dataset, ForestModel, ForestParams};
use crate::ndt::{register, NdtMap, RegConfig};
use crate::planner::RangeProfile;
use crate::scene::{simulate_scan, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimingMode {
    /// One registration at a time; the only mode whose timings are reported.
    #[default]
    Serial,
    /// Waypoints evaluated concurrently; timings are not trustworthy.
    Parallel,
}

impl TimingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TimingMode::Serial => "serial",
            TimingMode::Parallel => "parallel",
        }
    }
}

impl FromStr for TimingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "serial" => Ok(TimingMode::Serial),
            "parallel" => Ok(TimingMode::Parallel),
            _ => Err(Error::Config(format!("timing mode must be serial or parallel, got `{s}`"))),
        }
    }
}

/// Identity plus `count` planar offsets of the given radius, evenly spaced in
/// direction starting along +x.
pub fn planar_offsets(radius: f64, count: usize) -> Vec<Pose> {
    let mut offsets = vec![Pose::identity()];
    offsets.extend((0..count).map(|k| {
        let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
        Pose::shift(radius * a.cos(), radius * a.sin())
    }));
    offsets
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub subsample_leaf: f64,
    pub cell_size: f64,
    pub offsets: Vec<Pose>,
    pub candidate_ranges: Vec<f64>,
    pub gt_range: f64,
    pub threshold_cm: f64,
    pub seed: u64,
    pub timing_mode: TimingMode,
    pub registration: RegConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            subsample_leaf: 0.5,
            cell_size: 1.0,
            offsets: planar_offsets(0.5, 8),
            candidate_ranges: crate::planner::default_candidates(),
            gt_range: 100.0,
            threshold_cm: 10.0,
            seed: 0,
            timing_mode: TimingMode::Serial,
            registration: RegConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.subsample_leaf > 0.0) || !(self.cell_size > 0.0) {
            return bad("subsample_leaf and cell_size must be positive");
        }
        if !self.offsets.contains(&Pose::identity()) {
            return bad("offsets must include the identity");
        }
        if self.candidate_ranges.is_empty()
            || self.candidate_ranges[0] <= 0.0
            || self.candidate_ranges.windows(2).any(|w| w[0] >= w[1])
        {
            return bad("candidate_ranges must be positive and strictly ascending");
        }
        if !(self.gt_range >= self.max_range()) {
            return bad("gt_range must be at least the largest candidate range");
        }
        if !(self.threshold_cm >= 0.0) {
            return bad("threshold_cm must be nonnegative");
        }
        Ok(())
    }

    pub fn max_range(&self) -> f64 {
        *self.candidate_ranges.last().unwrap_or(&0.0)
    }
}

/// What the harness needs from a scene: the cloud to simulate scans from, the
/// map built from it, and the route.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub scene: PointCloud,
    pub map: NdtMap,
    pub trajectory: Trajectory,
    pub noise_sigma: f64,
}

impl Scenario {
    /// Sensor-frame scan at a waypoint out to the ground-truth range.
    pub fn scan(&self, waypoint_id: usize, config: &EvalConfig) -> Result<PointCloud> {
        let wp = self
            .trajectory
            .waypoints
            .get(waypoint_id)
            .ok_or_else(|| Error::InvalidArgument(format!("no waypoint {waypoint_id}")))?;
        simulate_scan(&self.scene, wp, config.gt_range, self.noise_sigma, config.seed, waypoint_id)
    }
}

/// Scan cropped to `range` around the sensor and voxel-subsampled.
pub fn prepare_scan(scan: &PointCloud, range: f64, leaf: f64) -> Result<PointCloud> {
    voxel_filter(&crop_range(scan, &Point::origin(), range)?, leaf)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub pose: Pose,
    pub converged: bool,
    pub iterations: usize,
}

/// Registers the full-range scan from the nominal pose. A waypoint whose
/// ground truth did not converge is excluded from evaluation.
pub fn compute_ground_truth(map: &NdtMap, scan: &PointCloud, nominal: &Pose, config: &EvalConfig) -> Result<GroundTruth> {
    let full = prepare_scan(scan, config.gt_range, config.subsample_leaf)?;
    let r = register(map, &full, nominal, &config.registration)?;
    Ok(GroundTruth {
        pose: r.pose,
        converged: r.converged,
        iterations: r.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetRun {
    pub error_cm: f64,
    pub rotation_error_rad: f64,
    pub time_ms: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeEval {
    pub range: f64,
    /// Mean position error over all offsets; +∞ when every offset diverged.
    pub mean_error_cm: f64,
    pub mean_time_ms: f64,
    pub max_time_ms: f64,
    pub diverged: usize,
    pub scan_points: usize,
    pub runs: Vec<OffsetRun>,
}

impl RangeEval {
    pub fn flagged(&self) -> bool {
        !self.mean_error_cm.is_finite()
    }
}

/// Registers from every offset around the ground truth using the scan limited
/// to `range`; errors are 3D position distances to the ground truth.
pub fn evaluate_waypoint(map: &NdtMap, scan: &PointCloud, gt: &Pose, range: f64, config: &EvalConfig) -> Result<RangeEval> {
    let sub = prepare_scan(scan, range, config.subsample_leaf)?;
    let runs = if sub.is_empty() {
        config
            .offsets
            .iter()
            .map(|_| OffsetRun {
                error_cm: f64::INFINITY,
                rotation_error_rad: f64::INFINITY,
                time_ms: 0.0,
                iterations: 0,
                converged: false,
            })
            .collect()
    } else {
        config
            .offsets
            .iter()
            .map(|o| {
                let r = register(map, &sub, &gt.compose(o), &config.registration)?;
                Ok(OffsetRun {
                    error_cm: r.pose.position_error(gt) * 100.0,
                    rotation_error_rad: r.pose.rotation_error(gt),
                    time_ms: r.matching_time,
                    iterations: r.iterations,
                    converged: r.converged,
                })
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok(summarize_runs(range, sub.len(), runs))
}

pub fn summarize_runs(range: f64, scan_points: usize, runs: Vec<OffsetRun>) -> RangeEval {
    let diverged = runs.iter().filter(|r| !r.converged).count();
    let mean_error_cm = if diverged == runs.len() {
        f64::INFINITY
    } else {
        mean(runs.iter().map(|r| r.error_cm))
    };
    RangeEval {
        range,
        mean_error_cm,
        mean_time_ms: mean(runs.iter().map(|r| r.time_ms)),
        max_time_ms: runs.iter().map(|r| r.time_ms).fold(0.0, f64::max),
        diverged,
        scan_points,
        runs,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeReport {
    pub eval: RangeEval,
    pub factors: FactorVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointReport {
    pub waypoint_id: usize,
    /// `None` when the ground truth did not converge; such waypoints carry no ranges.
    pub ground_truth: Option<Pose>,
    pub ranges: Vec<RangeReport>,
}

impl WaypointReport {
    pub fn excluded(&self) -> bool {
        self.ground_truth.is_none()
    }

    pub fn at(&self, range: f64) -> Option<&RangeReport> {
        self.ranges.iter().find(|r| r.eval.range == range)
    }
}

fn for_waypoints<T: Send>(n: usize, mode: TimingMode, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    match mode {
        TimingMode::Serial => (0..n).map(f).collect(),
        TimingMode::Parallel => (0..n).into_par_iter().map(&f).collect(),
    }
}

/// Every waypoint at every candidate range: offset errors, matching times and
/// the factor vector.
pub fn sweep_ranges(scenario: &Scenario, config: &EvalConfig, factors: &FactorConfig) -> Result<Vec<WaypointReport>> {
    config.validate()?;
    for_waypoints(scenario.trajectory.len(), config.timing_mode, |id| {
        sweep_waypoint(scenario, id, config, factors)
    })
}

pub fn sweep_waypoint(scenario: &Scenario, id: usize, config: &EvalConfig, factors: &FactorConfig) -> Result<WaypointReport> {
    let wp = &scenario.trajectory.waypoints[id];
    let scan = scenario.scan(id, config)?;
    let gt = compute_ground_truth(&scenario.map, &scan, &wp.pose(), config)?;
    if !gt.converged {
        return Ok(WaypointReport {
            waypoint_id: id,
            ground_truth: None,
            ranges: Vec::new(),
        });
    }
    let ranges = config
        .candidate_ranges
        .iter()
        .map(|&r| {
            Ok(RangeReport {
                eval: evaluate_waypoint(&scenario.map, &scan, &gt.pose, r, config)?,
                factors: factor_vector(&scenario.map, &wp.position, r, factors)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(WaypointReport {
        waypoint_id: id,
        ground_truth: Some(gt.pose),
        ranges,
    })
}

/// Training rows from a sweep; flagged (+∞) errors are dropped and counted.
pub fn dataset_from_reports(reports: &[WaypointReport]) -> Dataset {
    let mut d = Dataset::default();
    for w in reports {
        for r in &w.ranges {
            d.push(w.waypoint_id, r.factors.clone(), Some(r.eval.mean_error_cm));
        }
    }
    d
}

/// One model per candidate range, in candidate order.
pub fn train_models(data: &Dataset, candidates: &[f64], params: &ForestParams) -> Result<Vec<ForestModel>> {
    candidates
        .iter()
        .map(|&r| train_forest(&data.for_range(r), params))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub waypoint_id: usize,
    pub excluded: bool,
    pub dynamic: Option<RangeEval>,
    pub fixed: Option<RangeEval>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonSummary {
    pub evaluated: usize,
    pub excluded: usize,
    pub dynamic_mean_time_ms: f64,
    pub dynamic_max_time_ms: f64,
    pub dynamic_mean_error_cm: f64,
    pub dynamic_mean_range: f64,
    pub static_mean_time_ms: f64,
    pub static_max_time_ms: f64,
    pub static_mean_error_cm: f64,
    pub static_range: f64,
    /// Fraction of evaluated waypoints whose dynamic-range error is within the threshold.
    pub within_threshold: f64,
    /// Evaluated waypoints whose error is +∞ in the dynamic or static run.
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub threshold_cm: f64,
    pub static_range: f64,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn summary(&self) -> ComparisonSummary {
        let rows: Vec<(&RangeEval, &RangeEval)> = self
            .rows
            .iter()
            .filter_map(|r| Some((r.dynamic.as_ref()?, r.fixed.as_ref()?)))
            .collect();
        let finite = |v: &mut dyn Iterator<Item = f64>| mean(v.filter(|e| e.is_finite()));
        let n = rows.len();
        ComparisonSummary {
            evaluated: n,
            excluded: self.rows.len() - n,
            dynamic_mean_time_ms: mean(rows.iter().map(|r| r.0.mean_time_ms)),
            dynamic_max_time_ms: rows.iter().map(|r| r.0.max_time_ms).fold(0.0, f64::max),
            dynamic_mean_error_cm: finite(&mut rows.iter().map(|r| r.0.mean_error_cm)),
            dynamic_mean_range: mean(rows.iter().map(|r| r.0.range)),
            static_mean_time_ms: mean(rows.iter().map(|r| r.1.mean_time_ms)),
            static_max_time_ms: rows.iter().map(|r| r.1.max_time_ms).fold(0.0, f64::max),
            static_mean_error_cm: finite(&mut rows.iter().map(|r| r.1.mean_error_cm)),
            static_range: self.static_range,
            within_threshold: rows.iter().filter(|r| r.0.mean_error_cm <= self.threshold_cm).count() as f64
                / n.max(1) as f64,
            flagged: rows.iter().filter(|r| r.0.flagged() || r.1.flagged()).count(),
        }
    }
}

/// Evaluates every waypoint at its profile range and at the largest candidate.
pub fn run_dynamic_comparison(scenario: &Scenario, profile: &RangeProfile, config: &EvalConfig) -> Result<ComparisonReport> {
    config.validate()?;
    let traj = &scenario.trajectory;
    let matches = profile.len() == traj.len()
        && profile
            .entries
            .iter()
            .zip(&traj.waypoints)
            .enumerate()
            .all(|(i, (e, w))| e.waypoint_id == i && e.position.distance(&w.position) < 1e-6);
    if !matches {
        return Err(Error::Mismatch("range profile does not match the trajectory".into()));
    }
    let static_range = config.max_range();
    let rows = for_waypoints(traj.len(), config.timing_mode, |id| {
        let wp = &traj.waypoints[id];
        let scan = scenario.scan(id, config)?;
        let gt = compute_ground_truth(&scenario.map, &scan, &wp.pose(), config)?;
        if !gt.converged {
            return Ok(ComparisonRow {
                waypoint_id: id,
                excluded: true,
                dynamic: None,
                fixed: None,
            });
        }
        let range = profile.entries[id].selected_range;
        Ok(ComparisonRow {
            waypoint_id: id,
            excluded: false,
            dynamic: Some(evaluate_waypoint(&scenario.map, &scan, &gt.pose, range, config)?),
            fixed: Some(evaluate_waypoint(&scenario.map, &scan, &gt.pose, static_range, config)?),
        })
    })?;
    Ok(ComparisonReport {
        threshold_cm: profile.threshold_cm,
        static_range,
        rows,
    })
}
