use nalgebra::{Matrix3, Matrix3x6, Matrix6, Vector3, Vector6};

use super::NdtMap;
use crate::cloud::{Point, PointCloud, Pose, RotationDerivatives};

/// Shape of the per-point likelihood `scale · exp(−0.5 · sharpness · dᵀΣ⁻¹d)`.
///
/// The default `(1, 1)` is the plain Gaussian, bounding the score to `[0, n]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreParams {
    pub scale: f64,
    pub sharpness: f64,
}

impl Default for ScoreParams {
    fn default() -> Self {
        ScoreParams {
            scale: 1.0,
            sharpness: 1.0,
        }
    }
}

impl ScoreParams {
    /// Gaussian-plus-uniform mixture constants for a given outlier ratio.
    pub fn with_outlier_ratio(outlier_ratio: f64, cell_size: f64) -> Self {
        let c1 = 10.0 * (1.0 - outlier_ratio);
        let c2 = outlier_ratio / cell_size.powi(3);
        let d3 = -c2.ln();
        let d1 = -(c1 + c2).ln() - d3;
        let d2 = -2.0 * ((-(c1 * (-0.5f64).exp() + c2).ln() - d3) / d1).ln();
        ScoreParams {
            scale: -d1,
            sharpness: d2,
        }
    }
}

/// Score value with its gradient and Hessian over `(tx, ty, tz, roll, pitch, yaw)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub score: f64,
    pub gradient: Vector6<f64>,
    pub hessian: Matrix6<f64>,
}

/// Sum over scan points of the likelihood of the cell containing the
/// transformed point. Points landing in empty cells contribute nothing.
pub fn ndt_score(map: &NdtMap, scan: &PointCloud, pose: &Pose) -> f64 {
    score_points(map, &scan.points, pose)
}

pub(crate) fn score_points(map: &NdtMap, points: &[Point], pose: &Pose) -> f64 {
    let rot = pose.rotation();
    let t = pose.translation();
    let ScoreParams { scale, sharpness } = *map.score_params();
    let mut total = 0.0;
    for p in points {
        let moved = rot * p.to_vector() + t;
        if let Some(cell) = map.cell_at(&Point::from_vector(&moved)) {
            let d = moved - cell.mean.to_vector();
            let q = d.dot(&(cell.inverse_covariance * d));
            total += scale * (-0.5 * sharpness * q).exp();
        }
    }
    total
}

pub fn ndt_gradient_hessian(map: &NdtMap, scan: &PointCloud, pose: &Pose) -> Derivatives {
    derivatives_points(map, &scan.points, pose)
}

pub(crate) fn derivatives_points(map: &NdtMap, points: &[Point], pose: &Pose) -> Derivatives {
    let rd = RotationDerivatives::new(pose);
    let t = pose.translation();
    let ScoreParams { scale, sharpness } = *map.score_params();

    let mut score = 0.0;
    let mut gradient = Vector6::zeros();
    let mut hessian = Matrix6::zeros();
    let mut jac = Matrix3x6::zeros();
    jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());

    for p in points {
        let x = p.to_vector();
        let moved = rd.rotation * x + t;
        let Some(cell) = map.cell_at(&Point::from_vector(&moved)) else {
            continue;
        };
        let d = moved - cell.mean.to_vector();
        let inv = &cell.inverse_covariance;
        let q = inv * d;
        let e = scale * (-0.5 * sharpness * d.dot(&q)).exp();
        if e == 0.0 {
            continue;
        }
        for k in 0..3 {
            jac.set_column(3 + k, &(rd.first[k] * x));
        }
        // qJ[i] = dᵀ Σ⁻¹ ∂T/∂p_i
        let qj: Vector6<f64> = jac.transpose() * q;
        let inv_j = inv * jac;
        let jt_inv_j = jac.transpose() * inv_j;

        score += e;
        gradient -= qj * (sharpness * e);

        let mut second = Matrix6::zeros();
        for i in 0..3 {
            for j in i..3 {
                let h: Vector3<f64> = rd.second[i][j] * x;
                let v = q.dot(&h);
                second[(3 + i, 3 + j)] = v;
                second[(3 + j, 3 + i)] = v;
            }
        }
        hessian -= (jt_inv_j + second - qj * qj.transpose() * sharpness) * (sharpness * e);
    }
    let hessian = (hessian + hessian.transpose()) * 0.5;
    Derivatives {
        score,
        gradient,
        hessian,
    }
}
