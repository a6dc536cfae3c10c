//! Per-waypoint choice of the shortest observation range meeting an error budget.

use std::fmt::Write as _;
use std::path::Path;

use crate::cloud::Point;
use crate::error::{Error, Result};
use crate::factors::{factor_vector, FactorConfig};
use crate::forest::{predict_error, ForestModel};
use crate::ndt::NdtMap;
use crate::scene::Trajectory;

/// 10 m to 50 m every 5 m.
pub fn default_candidates() -> Vec<f64> {
    (0..9).map(|k| 10.0 + 5.0 * k as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeChoice {
    pub range: f64,
    pub predicted_error_cm: f64,
    pub satisfied: bool,
}

/// Smallest candidate whose predicted error is within `threshold_cm`; if none
/// is, the largest candidate, unsatisfied. Candidates without a prediction
/// count as +∞.
pub fn plan_range(predicted: &[(f64, f64)], threshold_cm: f64, candidates: &[f64]) -> Result<RangeChoice> {
    let Some(&last) = candidates.last() else {
        return Err(Error::InvalidArgument("no candidate ranges".into()));
    };
    if candidates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("candidate ranges must be strictly ascending".into()));
    }
    let lookup = |r: f64| {
        predicted
            .iter()
            .find(|(pr, _)| *pr == r)
            .map_or(f64::INFINITY, |p| p.1)
    };
    for &r in candidates {
        let e = lookup(r);
        if e <= threshold_cm {
            return Ok(RangeChoice {
                range: r,
                predicted_error_cm: e,
                satisfied: true,
            });
        }
    }
    Ok(RangeChoice {
        range: last,
        predicted_error_cm: lookup(last),
        satisfied: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileEntry {
    pub waypoint_id: usize,
    pub position: Point,
    pub selected_range: f64,
    pub predicted_error_cm: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeProfile {
    pub entries: Vec<ProfileEntry>,
    pub threshold_cm: f64,
    pub candidate_ranges: Vec<f64>,
}

impl RangeProfile {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn satisfied_fraction(&self) -> f64 {
        self.entries.iter().filter(|e| e.satisfied).count() as f64 / self.entries.len().max(1) as f64
    }

    pub fn mean_range(&self) -> f64 {
        self.entries.iter().map(|e| e.selected_range).sum::<f64>() / self.entries.len().max(1) as f64
    }
}

/// Predicted error per candidate range at one position.
pub fn predict_ranges(
    models: &[ForestModel],
    map: &NdtMap,
    position: &Point,
    candidates: &[f64],
    factors: &FactorConfig,
) -> Result<Vec<(f64, f64)>> {
    candidates
        .iter()
        .map(|&r| {
            let model = models
                .iter()
                .find(|m| m.range == r)
                .ok_or_else(|| Error::Mismatch(format!("no model for range {r}")))?;
            let fv = factor_vector(map, position, r, factors)?;
            Ok((r, predict_error(model, &fv)?))
        })
        .collect()
}

pub fn build_range_profile(
    models: &[ForestModel],
    map: &NdtMap,
    trajectory: &Trajectory,
    threshold_cm: f64,
    candidates: &[f64],
    factors: &FactorConfig,
) -> Result<RangeProfile> {
    if models.len() != candidates.len() {
        return Err(Error::Mismatch(format!(
            "{} models for {} candidate ranges",
            models.len(),
            candidates.len()
        )));
    }
    let entries = trajectory
        .waypoints
        .iter()
        .enumerate()
        .map(|(id, w)| {
            let predicted = predict_ranges(models, map, &w.position, candidates, factors)?;
            let c = plan_range(&predicted, threshold_cm, candidates)?;
            Ok(ProfileEntry {
                waypoint_id: id,
                position: w.position,
                selected_range: c.range,
                predicted_error_cm: c.predicted_error_cm,
                satisfied: c.satisfied,
            })
        })
        .collect::<Result<_>>()?;
    Ok(RangeProfile {
        entries,
        threshold_cm,
        candidate_ranges: candidates.to_vec(),
    })
}

/// Range of the nearest profile entry; ties go to the lower waypoint id.
pub fn lookup_range(profile: &RangeProfile, position: &Point) -> Result<f64> {
    let mut best: Option<(f64, usize, f64)> = None;
    for e in &profile.entries {
        let d = e.position.distance(position);
        let better = match best {
            None => true,
            Some((bd, bid, _)) => d < bd || (d == bd && e.waypoint_id < bid),
        };
        if better {
            best = Some((d, e.waypoint_id, e.selected_range));
        }
    }
    best.map(|b| b.2)
        .ok_or_else(|| Error::InvalidArgument("empty range profile".into()))
}

pub const PROFILE_HEADER: &str = "# rangeloc profile v1";

pub fn write_profile(path: impl AsRef<Path>, profile: &RangeProfile) -> Result<()> {
    let path = path.as_ref();
    let cands: Vec<String> = profile.candidate_ranges.iter().map(f64::to_string).collect();
    let mut text = format!(
        "{PROFILE_HEADER} threshold_cm={} candidates={}\nwaypoint_id,x,y,z,selected_range_m,predicted_error_cm,satisfied\n",
        profile.threshold_cm,
        cands.join(";")
    );
    for e in &profile.entries {
        writeln!(
            text,
            "{},{},{},{},{},{},{}",
            e.waypoint_id, e.position.x, e.position.y, e.position.z, e.selected_range, e.predicted_error_cm, e.satisfied
        )
        .unwrap();
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_profile(path: impl AsRef<Path>) -> Result<RangeProfile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let meta = header
        .strip_prefix(PROFILE_HEADER)
        .ok_or_else(|| Error::parse(path, 1, "missing profile header"))?;
    let mut threshold_cm = None;
    let mut candidate_ranges = Vec::new();
    for kv in meta.split_whitespace() {
        match kv.split_once('=') {
            Some(("threshold_cm", v)) => threshold_cm = v.parse().ok(),
            Some(("candidates", v)) => {
                candidate_ranges = v
                    .split(';')
                    .map(|t| t.parse().map_err(|_| Error::parse(path, 1, format!("bad candidate `{t}`"))))
                    .collect::<Result<_>>()?
            }
            _ => return Err(Error::parse(path, 1, format!("unknown header field `{kv}`"))),
        }
    }
    let threshold_cm = threshold_cm.ok_or_else(|| Error::parse(path, 1, "header lacks threshold_cm"))?;
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        let ln = i + 2;
        if line.is_empty() || line.starts_with("waypoint_id") {
            continue;
        }
        let t: Vec<&str> = line.split(',').collect();
        if t.len() != 7 {
            return Err(Error::parse(path, ln, "expected 7 fields"));
        }
        let bad = |s: &str| Error::parse(path, ln, format!("bad value `{s}`"));
        let f = |k: usize| t[k].parse::<f64>().map_err(|_| bad(t[k]));
        entries.push(ProfileEntry {
            waypoint_id: t[0].parse().map_err(|_| bad(t[0]))?,
            position: Point::try_new(f(1)?, f(2)?, f(3)?).map_err(|_| bad(t[1]))?,
            selected_range: f(4)?,
            predicted_error_cm: f(5)?,
            satisfied: t[6].parse().map_err(|_| bad(t[6]))?,
        });
    }
    Ok(RangeProfile {
        entries,
        threshold_cm,
        candidate_ranges,
    })
}
