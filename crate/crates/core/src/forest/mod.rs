//! Random-forest regression from factor vectors to localization error.

mod dataset;
mod io;
mod tree;

pub use dataset::{Dataset, DatasetRow};
pub use io::{forest_to_string, read_forest, write_forest};
pub use tree::{Node, Tree};

use rand::Rng;

use crate::error::{Error, Result};
use crate::factors::FactorVector;
use crate::rng::{self, Purpose};
use tree::{bounded_mean, Builder, TreeParams};

/// Name of the extra feature marking an imputed `r_average`.
pub const IMPUTED_FLAG_COLUMN: &str = "r_average_missing";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// `None` means ⌈d/3⌉ of the d feature columns.
    pub features_per_split: Option<usize>,
    pub seed: u64,
    /// Draw a bootstrap resample per tree. Turning this off trains every tree
    /// on the full dataset.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 8,
            min_leaf: 2,
            features_per_split: None,
            seed: 0,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn features_per_split_for(&self, d: usize) -> usize {
        self.features_per_split.unwrap_or(d.div_ceil(3)).clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub range: f64,
    pub columns: Vec<String>,
    pub params: ForestParams,
    /// Training-column medians used in place of missing values.
    pub medians: Vec<f64>,
    pub target_min: f64,
    pub target_max: f64,
    pub trees: Vec<Tree>,
}

pub fn model_columns() -> Vec<String> {
    FactorVector::COLUMNS
        .iter()
        .chain(std::iter::once(&IMPUTED_FLAG_COLUMN))
        .map(|s| s.to_string())
        .collect()
}

pub fn raw_features(fv: &FactorVector) -> Vec<Option<f64>> {
    fv.values().to_vec()
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        v[n / 2 - 1] + (v[n / 2] - v[n / 2 - 1]) / 2.0
    }
}

fn impute(raw: &[Option<f64>], medians: &[f64]) -> Vec<f64> {
    let mut x: Vec<f64> = raw.iter().zip(medians).map(|(v, m)| v.unwrap_or(*m)).collect();
    x.push(if raw.iter().any(Option::is_none) { 1.0 } else { 0.0 });
    x
}

pub fn train_forest(data: &Dataset, params: &ForestParams) -> Result<ForestModel> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidArgument("n_trees must be positive".into()));
    }
    if params.min_leaf == 0 {
        return Err(Error::InvalidArgument("min_leaf must be positive".into()));
    }
    // Canonical order makes the result independent of input row order.
    let mut rows: Vec<&DatasetRow> = data.rows.iter().collect();
    rows.sort_by_key(|r| r.key());
    let range = rows[0].range;

    let raw: Vec<Vec<Option<f64>>> = rows.iter().map(|r| raw_features(&r.factors)).collect();
    let medians: Vec<f64> = (0..FactorVector::COLUMNS.len())
        .map(|j| median(raw.iter().filter_map(|r| r[j]).collect()))
        .collect();
    let x: Vec<Vec<f64>> = raw.iter().map(|r| impute(r, &medians)).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.measured_error_cm).collect();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        features_per_split: params.features_per_split_for(x[0].len()),
    };

    let n = y.len();
    let trees = (0..params.n_trees)
        .map(|t| {
            let mut rng = rng::stream(params.seed, Purpose::Bootstrap, t as u64);
            let samples: Vec<usize> = if params.bootstrap {
                let mut s: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                s.sort_unstable();
                s
            } else {
                (0..n).collect()
            };
            Builder {
                x: &x,
                y: &y,
                params: tree_params,
                rng: &mut rng,
                nodes: Vec::new(),
            }
            .grow(samples)
        })
        .collect();

    Ok(ForestModel {
        range,
        columns: model_columns(),
        params: *params,
        medians,
        target_min: y.iter().copied().fold(f64::INFINITY, f64::min),
        target_max: y.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        trees,
    })
}

impl ForestModel {
    /// Prediction from raw values in [`FactorVector::COLUMNS`] order.
    pub fn predict_raw(&self, raw: &[Option<f64>]) -> Result<f64> {
        if raw.len() != self.medians.len() || self.columns.len() != raw.len() + 1 {
            return Err(Error::FeatureMismatch {
                expected: self.medians.len(),
                got: raw.len(),
            });
        }
        let x = impute(raw, &self.medians);
        let p = bounded_mean(self.trees.iter().map(|t| t.predict(&x)).collect::<Vec<_>>().into_iter());
        Ok(p.clamp(self.target_min, self.target_max))
    }
}

pub fn predict_error(model: &ForestModel, fv: &FactorVector) -> Result<f64> {
    if model.columns != model_columns() {
        return Err(Error::Mismatch(format!(
            "model columns {:?} differ from factor columns",
            model.columns
        )));
    }
    model.predict_raw(&raw_features(fv))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub mae_cm: f64,
    pub mse_cm2: f64,
}

pub fn evaluate_model(model: &ForestModel, holdout: &Dataset) -> Result<Evaluation> {
    if holdout.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut abs, mut sq) = (0.0, 0.0);
    for row in &holdout.rows {
        let e = predict_error(model, &row.factors)? - row.measured_error_cm;
        abs += e.abs();
        sq += e * e;
    }
    let n = holdout.len() as f64;
    Ok(Evaluation {
        mae_cm: abs / n,
        mse_cm2: sq / n,
    })
}

/// Population variance, the MSE of always predicting the mean.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}
