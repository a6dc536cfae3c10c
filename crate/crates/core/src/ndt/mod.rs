//! Normal distributions transform: a voxel map of Gaussians, the per-point
//! likelihood score, its analytic derivatives and Newton registration.

mod io;
mod register;
mod score;

use std::collections::HashMap;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

pub use io::{read_ndt_map, write_ndt_map};
pub use register::{register, RegConfig, RegistrationResult};
pub use score::{ndt_gradient_hessian, ndt_score, Derivatives, ScoreParams};

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};

/// Cells with fewer points are left out of the map.
pub const MIN_POINTS: usize = 5;
/// Smallest eigenvalue allowed relative to the largest one.
pub const EIGEN_FLOOR_RATIO: f64 = 1e-3;
/// Absolute eigenvalue floor (m²) so that coincident points still yield a
/// full-rank covariance.
pub const EIGEN_FLOOR_ABS: f64 = 1e-6;

pub type CellIndex = [i64; 3];

/// One normal distribution of the map.
#[derive(Debug, Clone, PartialEq)]
pub struct NdCell {
    pub mean: Point,
    pub covariance: Matrix3<f64>,
    pub inverse_covariance: Matrix3<f64>,
    /// Standard deviations along the eigen axes, descending.
    pub eigen_sigmas: [f64; 3],
    /// Unit eigen axes matching `eigen_sigmas`.
    pub eigen_axes: [Vector3<f64>; 3],
    pub point_count: usize,
}

impl NdCell {
    /// Builds a cell from a raw sample covariance, clamping small eigenvalues.
    pub fn from_moments(mean: Point, covariance: Matrix3<f64>, point_count: usize) -> Self {
        let (mut values, axes) = sorted_eigen(&covariance);
        values[0] = values[0].max(EIGEN_FLOOR_ABS);
        let floor = EIGEN_FLOOR_RATIO * values[0];
        values[1] = values[1].max(floor);
        values[2] = values[2].max(floor);
        Self::from_eigen(mean, values, axes, point_count)
    }

    /// Builds a cell from a covariance that is already regularized.
    pub fn from_regularized(mean: Point, covariance: Matrix3<f64>, point_count: usize) -> Self {
        let (values, axes) = sorted_eigen(&covariance);
        let mut cell = Self::from_eigen(mean, values.map(|v| v.max(0.0)), axes, point_count);
        cell.covariance = covariance;
        cell
    }

    fn from_eigen(mean: Point, values: [f64; 3], axes: [Vector3<f64>; 3], point_count: usize) -> Self {
        let mut covariance = Matrix3::zeros();
        let mut inverse_covariance = Matrix3::zeros();
        for k in 0..3 {
            let outer = axes[k] * axes[k].transpose();
            covariance += outer * values[k];
            inverse_covariance += outer / values[k];
        }
        // exact symmetry keeps the Hessian symmetric downstream
        let covariance = (covariance + covariance.transpose()) * 0.5;
        let inverse_covariance = (inverse_covariance + inverse_covariance.transpose()) * 0.5;
        NdCell {
            mean,
            covariance,
            inverse_covariance,
            eigen_sigmas: values.map(f64::sqrt),
            eigen_axes: axes,
            point_count,
        }
    }

    /// Unit axis of the smallest spread; the surface normal for plane-like cells.
    pub fn normal(&self) -> Vector3<f64> {
        self.eigen_axes[2]
    }
}

fn sorted_eigen(m: &Matrix3<f64>) -> ([f64; 3], [Vector3<f64>; 3]) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.map(|k| eig.eigenvalues[k]);
    let axes = order.map(|k| eig.eigenvectors.column(k).normalize());
    (values, axes)
}

/// Sparse voxel grid of normal distributions, grid anchored at the world origin.
#[derive(Debug, Clone)]
pub struct NdtMap {
    cell_size: f64,
    indices: Vec<CellIndex>,
    cells: Vec<NdCell>,
    lookup: HashMap<CellIndex, usize>,
    score_params: ScoreParams,
}

impl NdtMap {
    /// Cells are stored in ascending index order regardless of input order.
    pub fn from_cells(cell_size: f64, cells: impl IntoIterator<Item = (CellIndex, NdCell)>) -> Result<Self> {
        if !(cell_size > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        let mut entries: Vec<(CellIndex, NdCell)> = cells.into_iter().collect();
        entries.sort_by_key(|(k, _)| *k);
        entries.dedup_by_key(|(k, _)| *k);
        let lookup = entries.iter().enumerate().map(|(i, (k, _))| (*k, i)).collect();
        let (indices, cells) = entries.into_iter().unzip();
        Ok(NdtMap {
            cell_size,
            indices,
            cells,
            lookup,
            score_params: ScoreParams::default(),
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn score_params(&self) -> &ScoreParams {
        &self.score_params
    }

    pub fn set_score_params(&mut self, params: ScoreParams) {
        self.score_params = params;
    }

    pub fn get(&self, index: &CellIndex) -> Option<&NdCell> {
        self.lookup.get(index).map(|&i| &self.cells[i])
    }

    /// The cell containing `p`, if that cell is occupied.
    pub fn cell_at(&self, p: &Point) -> Option<&NdCell> {
        self.get(&p.cell_index(self.cell_size))
    }

    pub fn cells(&self) -> &[NdCell] {
        &self.cells
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellIndex, &NdCell)> {
        self.indices.iter().zip(&self.cells)
    }

    /// Sub-map holding only the cells accepted by `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&NdCell) -> bool) -> NdtMap {
        let mut out = NdtMap::from_cells(
            self.cell_size,
            self.iter()
                .filter(|(_, c)| keep(c))
                .map(|(k, c)| (*k, c.clone())),
        )
        .expect("cell size already validated");
        out.score_params = self.score_params;
        out
    }
}

/// Builds the map: per occupied cell with at least [`MIN_POINTS`] points, the
/// centroid and the (N−1)-normalized sample covariance, eigen-regularized.
pub fn build_ndt_map(cloud: &PointCloud, cell_size: f64) -> Result<NdtMap> {
    if !(cell_size > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cell size must be positive, got {cell_size}"
        )));
    }
    let mut groups: HashMap<CellIndex, Vec<Vector3<f64>>> = HashMap::new();
    for p in &cloud.points {
        groups
            .entry(p.cell_index(cell_size))
            .or_default()
            .push(p.to_vector());
    }
    let cells = groups.into_iter().filter_map(|(idx, pts)| {
        if pts.len() < MIN_POINTS {
            return None;
        }
        let n = pts.len() as f64;
        let mean = pts.iter().sum::<Vector3<f64>>() / n;
        let cov = pts
            .iter()
            .map(|p| (p - mean) * (p - mean).transpose())
            .sum::<Matrix3<f64>>()
            / (n - 1.0);
        Some((idx, NdCell::from_moments(Point::from_vector(&mean), cov, pts.len())))
    });
    NdtMap::from_cells(cell_size, cells)
}
