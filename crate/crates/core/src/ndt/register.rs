use std::time::Instant;

use nalgebra::{SymmetricEigen, Vector6};

use super::score::{derivatives_points, score_points};
use super::NdtMap;
use crate::cloud::{PointCloud, Pose};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RegConfig {
    pub max_iterations: usize,
    /// Stop once the accepted translation step is below this (m)...
    pub translation_epsilon: f64,
    /// ...and the accepted rotation step is below this (rad).
    pub rotation_epsilon: f64,
    pub max_halvings: usize,
    /// Newton steps are scaled down so the translation part never exceeds this (m).
    pub max_translation_step: f64,
    /// Same for the rotation part (rad).
    pub max_rotation_step: f64,
}

impl Default for RegConfig {
    fn default() -> Self {
        RegConfig {
            max_iterations: 30,
            translation_epsilon: 1e-4,
            rotation_epsilon: 1e-5,
            max_halvings: 10,
            max_translation_step: 0.5,
            max_rotation_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub pose: Pose,
    pub converged: bool,
    pub iterations: usize,
    /// Wall-clock duration of the call in milliseconds.
    pub matching_time: f64,
    pub final_score: f64,
}

/// Newton ascent on the NDT score starting from `initial`.
///
/// Non-concave Hessians are made negative definite by flipping and flooring
/// their eigenvalues; each step is then backtracked by halving until the score
/// does not decrease, so the accepted iterates have a non-decreasing score.
pub fn register(map: &NdtMap, scan: &PointCloud, initial: &Pose, config: &RegConfig) -> Result<RegistrationResult> {
    let start = Instant::now();
    if scan.is_empty() {
        return Err(Error::EmptyScan);
    }
    let points = &scan.points;
    let mut params = initial.to_vector();
    let mut pose = *initial;
    let mut current = derivatives_points(map, points, &pose);
    let mut converged = false;
    let mut iterations = 0;

    loop {
        let mut step = newton_step(&current.gradient, &current.hessian);
        clamp_step(&mut step, config);
        if step_is_small(&step, config) {
            converged = true;
            break;
        }
        if iterations == config.max_iterations {
            break;
        }
        iterations += 1;

        let mut accepted = None;
        let mut trial = step;
        for _ in 0..=config.max_halvings {
            let candidate = Pose::from_vector(&(params + trial));
            let s = score_points(map, points, &candidate);
            if s >= current.score {
                accepted = Some((candidate, trial));
                break;
            }
            trial *= 0.5;
        }
        let Some((candidate, taken)) = accepted else {
            converged = step_is_small(&trial, config);
            break;
        };
        params += taken;
        pose = candidate;
        current = derivatives_points(map, points, &pose);
        if step_is_small(&taken, config) {
            converged = true;
            break;
        }
    }

    if current.score == 0.0 {
        converged = false;
    }
    Ok(RegistrationResult {
        pose,
        converged,
        iterations,
        matching_time: start.elapsed().as_secs_f64() * 1e3,
        final_score: current.score,
    })
}

/// Ascent step `−H̃⁻¹ g` where `H̃` is the Hessian with eigenvalues forced
/// negative and bounded away from zero.
fn newton_step(gradient: &Vector6<f64>, hessian: &nalgebra::Matrix6<f64>) -> Vector6<f64> {
    if gradient.iter().all(|g| *g == 0.0) {
        return Vector6::zeros();
    }
    let eig = SymmetricEigen::new(*hessian);
    let largest = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (largest * 1e-6).max(1e-12);
    let mut step = Vector6::zeros();
    for k in 0..6 {
        let axis = eig.eigenvectors.column(k);
        let curvature = eig.eigenvalues[k].abs().max(floor);
        step += axis * (axis.dot(gradient) / curvature);
    }
    step
}

fn clamp_step(step: &mut Vector6<f64>, config: &RegConfig) {
    let t = step.fixed_rows::<3>(0).norm();
    let r = step.fixed_rows::<3>(3).norm();
    let factor = (config.max_translation_step / t)
        .min(config.max_rotation_step / r)
        .min(1.0);
    if factor < 1.0 {
        *step *= factor;
    }
}

fn step_is_small(step: &Vector6<f64>, config: &RegConfig) -> bool {
    step.fixed_rows::<3>(0).norm() < config.translation_epsilon
        && step.fixed_rows::<3>(3).norm() < config.rotation_epsilon
}
