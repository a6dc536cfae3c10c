use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use crate::factors::{FactorRow, FactorVector};
use crate::rng::{self, Purpose};

/// One observation: factors at a (waypoint, range) and the error measured there.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub waypoint_id: usize,
    pub range: f64,
    pub factors: FactorVector,
    pub measured_error_cm: f64,
}

impl DatasetRow {
    /// Stable identity used to order rows independently of input order.
    pub fn key(&self) -> (usize, u64) {
        (self.waypoint_id, self.range.to_bits())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub rows: Vec<DatasetRow>,
    /// Rows rejected because their target was not a finite, nonnegative number.
    pub dropped: usize,
}

impl Dataset {
    /// Joins factor rows with measured errors on `(waypoint_id, range)`.
    /// Rows whose error is missing or non-finite are dropped and counted.
    pub fn join(factors: &[FactorRow], errors: &[(usize, f64, f64)]) -> Self {
        let mut out = Dataset::default();
        for f in factors {
            let target = errors
                .iter()
                .find(|(w, r, _)| *w == f.waypoint_id && *r == f.factors.range)
                .map(|e| e.2);
            out.push(f.waypoint_id, f.factors.clone(), target);
        }
        out
    }

    pub fn push(&mut self, waypoint_id: usize, factors: FactorVector, target: Option<f64>) {
        match target {
            Some(t) if t.is_finite() && t >= 0.0 => self.rows.push(DatasetRow {
                waypoint_id,
                range: factors.range,
                factors,
                measured_error_cm: t,
            }),
            _ => self.dropped += 1,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ranges(&self) -> Vec<f64> {
        let set: BTreeSet<u64> = self.rows.iter().map(|r| r.range.to_bits()).collect();
        let mut v: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn for_range(&self, range: f64) -> Dataset {
        Dataset {
            rows: self.rows.iter().filter(|r| r.range == range).cloned().collect(),
            dropped: 0,
        }
    }

    /// Splits by waypoint so that all ranges of a waypoint land on the same
    /// side; roughly `holdout_fraction` of the waypoints are held out.
    pub fn split_by_waypoint(&self, holdout_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let ids: BTreeSet<usize> = self.rows.iter().map(|r| r.waypoint_id).collect();
        let mut ids: Vec<usize> = ids.into_iter().collect();
        ids.shuffle(&mut rng::stream(seed, Purpose::Split, 0));
        let n_hold = ((ids.len() as f64) * holdout_fraction).round() as usize;
        let held: BTreeSet<usize> = ids.into_iter().take(n_hold).collect();
        let (hold, train): (Vec<_>, Vec<_>) = self.rows.iter().cloned().partition(|r| held.contains(&r.waypoint_id));
        (
            Dataset { rows: train, dropped: 0 },
            Dataset { rows: hold, dropped: 0 },
        )
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.measured_error_cm).collect()
    }
}
