//! TOML run configuration. Every key is optional; missing keys keep defaults.
//!
//! ```toml
//! seed = 7
//! timing_mode = "serial"
//! waypoint_spacing = 8.0
//!
//! [eval]
//! subsample_leaf = 0.5
//! cell_size = 1.0
//! candidate_ranges = [10, 15, 20, 25, 30, 35, 40, 45, 50]
//! gt_range = 100.0
//! threshold_cm = 10.0
//! offset_radius = 0.5
//! offset_count = 8
//! # explicit [tx, ty, tz, roll, pitch, yaw] offsets replace radius/count
//! # offsets = [[0, 0, 0, 0, 0, 0], [0.5, 0, 0, 0, 0, 0]]
//!
//! [registration]
//! max_iterations = 30
//! translation_epsilon = 1e-4
//! rotation_epsilon = 1e-5
//! max_halvings = 10
//! max_translation_step = 0.5
//! max_rotation_step = 0.1
//!
//! [forest]
//! n_trees = 100
//! max_depth = 8
//! min_leaf = 2
//! features_per_split = 4   # omit for ceil(d/3)
//! holdout_fraction = 0.2
//!
//! [factors]
//! azimuth_bins = 180
//! elevation_bins = 20
//! min_elevation_deg = -10.0
//! max_elevation_deg = 30.0
//! normal_bins = 18
//! shift_half_extent = 1.0
//! shift_step = 0.2
//!
//! # [scene] replaces the built-in corpus; same schema as the `scene` subcommand's scene.toml
//! ```

use std::path::Path;

use nalgebra::Vector6;
use serde::Deserialize;

use super::{planar_offsets, EvalConfig};
use crate::cloud::Pose;
use crate::error::{Error, Result};
use crate::factors::FactorConfig;
use crate::forest::ForestParams;
use crate::scene::SceneSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scene: SceneSpec,
    pub waypoint_spacing: f64,
    pub eval: EvalConfig,
    pub forest: ForestParams,
    pub factors: FactorConfig,
    pub holdout_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::with_seed(0)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    seed: Option<u64>,
    timing_mode: Option<String>,
    waypoint_spacing: Option<f64>,
    #[serde(default)]
    eval: RawEval,
    #[serde(default)]
    registration: RawRegistration,
    #[serde(default)]
    forest: RawForest,
    #[serde(default)]
    factors: RawFactors,
    scene: Option<RawScene>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEval {
    subsample_leaf: Option<f64>,
    cell_size: Option<f64>,
    candidate_ranges: Option<Vec<f64>>,
    gt_range: Option<f64>,
    threshold_cm: Option<f64>,
    offset_radius: Option<f64>,
    offset_count: Option<usize>,
    offsets: Option<Vec<[f64; 6]>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegistration {
    max_iterations: Option<usize>,
    translation_epsilon: Option<f64>,
    rotation_epsilon: Option<f64>,
    max_halvings: Option<usize>,
    max_translation_step: Option<f64>,
    max_rotation_step: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForest {
    n_trees: Option<usize>,
    max_depth: Option<usize>,
    min_leaf: Option<usize>,
    features_per_split: Option<usize>,
    bootstrap: Option<bool>,
    holdout_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFactors {
    azimuth_bins: Option<usize>,
    elevation_bins: Option<usize>,
    min_elevation_deg: Option<f64>,
    max_elevation_deg: Option<f64>,
    normal_bins: Option<usize>,
    shift_half_extent: Option<f64>,
    shift_step: Option<f64>,
}

/// Scene table whose seed may be left to the top-level seed.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    extent: f64,
    segments: Vec<crate::scene::SegmentSpec>,
    noise_sigma: f64,
    seed: Option<u64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl RunConfig {
    pub fn with_seed(seed: u64) -> Self {
        RunConfig {
            scene: SceneSpec::default_corpus(seed),
            waypoint_spacing: 8.0,
            eval: EvalConfig {
                seed,
                ..EvalConfig::default()
            },
            forest: ForestParams {
                seed,
                ..ForestParams::default()
            },
            factors: FactorConfig::default(),
            holdout_fraction: 0.2,
        }
    }

    /// Replaces every seed (scene, scans, forest) with `seed`.
    pub fn set_seed(&mut self, seed: u64) {
        self.scene.seed = seed;
        self.eval.seed = seed;
        self.forest.seed = seed;
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: Raw = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut c = RunConfig::with_seed(raw.seed.unwrap_or(0));
        if let Some(m) = &raw.timing_mode {
            c.eval.timing_mode = m.parse()?;
        }
        set(&mut c.waypoint_spacing, raw.waypoint_spacing);

        let e = raw.eval;
        set(&mut c.eval.subsample_leaf, e.subsample_leaf);
        set(&mut c.eval.cell_size, e.cell_size);
        set(&mut c.eval.candidate_ranges, e.candidate_ranges);
        set(&mut c.eval.gt_range, e.gt_range);
        set(&mut c.eval.threshold_cm, e.threshold_cm);
        if let Some(list) = e.offsets {
            if e.offset_radius.is_some() || e.offset_count.is_some() {
                return Err(Error::Config("give either offsets or offset_radius/offset_count".into()));
            }
            c.eval.offsets = list.iter().map(|o| Pose::from_vector(&Vector6::from_row_slice(o))).collect();
        } else if e.offset_radius.is_some() || e.offset_count.is_some() {
            c.eval.offsets = planar_offsets(e.offset_radius.unwrap_or(0.5), e.offset_count.unwrap_or(8));
        }

        let r = raw.registration;
        let reg = &mut c.eval.registration;
        set(&mut reg.max_iterations, r.max_iterations);
        set(&mut reg.translation_epsilon, r.translation_epsilon);
        set(&mut reg.rotation_epsilon, r.rotation_epsilon);
        set(&mut reg.max_halvings, r.max_halvings);
        set(&mut reg.max_translation_step, r.max_translation_step);
        set(&mut reg.max_rotation_step, r.max_rotation_step);

        let f = raw.forest;
        set(&mut c.forest.n_trees, f.n_trees);
        set(&mut c.forest.max_depth, f.max_depth);
        set(&mut c.forest.min_leaf, f.min_leaf);
        set(&mut c.forest.bootstrap, f.bootstrap);
        c.forest.features_per_split = f.features_per_split;
        set(&mut c.holdout_fraction, f.holdout_fraction);

        let x = raw.factors;
        set(&mut c.factors.image.azimuth_bins, x.azimuth_bins);
        set(&mut c.factors.image.elevation_bins, x.elevation_bins);
        set(&mut c.factors.image.min_elevation_deg, x.min_elevation_deg);
        set(&mut c.factors.image.max_elevation_deg, x.max_elevation_deg);
        set(&mut c.factors.normal_bins, x.normal_bins);
        set(&mut c.factors.shifts.half_extent, x.shift_half_extent);
        set(&mut c.factors.shifts.step, x.shift_step);

        if let Some(s) = raw.scene {
            c.scene = SceneSpec {
                extent: s.extent,
                segments: s.segments,
                noise_sigma: s.noise_sigma,
                seed: s.seed.or(raw.seed).unwrap_or(0),
            };
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.eval.validate()?;
        if !(self.waypoint_spacing > 0.0) {
            return Err(Error::Config("waypoint_spacing must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("holdout_fraction must be in [0, 1)".into()));
        }
        let f = &self.factors;
        if f.normal_bins == 0
            || f.image.azimuth_bins == 0
            || f.image.elevation_bins == 0
            || !(f.image.max_elevation_deg > f.image.min_elevation_deg)
            || !(f.shifts.step > 0.0)
            || !(f.shifts.half_extent >= 0.0)
        {
            return Err(Error::Config("invalid factor settings".into()));
        }
        if self.forest.n_trees == 0 || self.forest.min_leaf == 0 {
            return Err(Error::Config("n_trees and min_leaf must be positive".into()));
        }
        Ok(())
    }
}
