//! Python bindings: clouds, NDT maps and registration, map factors, the
//! per-range error model and the range planner.

use std::collections::HashMap;
use std::path::Path;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use rangeloc::cloud::{apply_pose, crop_range, read_cloud, voxel_filter, write_cloud, Point, PointCloud, Pose};
use rangeloc::factors::{factor_vector, FactorConfig, FactorVector};
use rangeloc::forest::{predict_error, read_forest, train_forest, write_forest, Dataset, ForestModel, ForestParams};
use rangeloc::ndt::{build_ndt_map, ndt_gradient_hessian, ndt_score, read_ndt_map, register, write_ndt_map, NdtMap, RegConfig};
use rangeloc::planner::{default_candidates, plan_range};
use rangeloc::scene::{generate_scene, make_trajectory, SceneSpec};
use rangeloc::Error;

type Xyz = (f64, f64, f64);
/// `(tx, ty, tz, roll, pitch, yaw)`
type Pose6 = (f64, f64, f64, f64, f64, f64);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn pose(p: Pose6) -> Pose {
    Pose::new(p.0, p.1, p.2, p.3, p.4, p.5)
}

fn pose6(p: &Pose) -> Pose6 {
    (p.tx, p.ty, p.tz, p.roll, p.pitch, p.yaw)
}

fn point(p: Xyz) -> PyResult<Point> {
    Point::try_new(p.0, p.1, p.2).map_err(py_err)
}

#[pyclass(name = "PointCloud", module = "rangeloc_py")]
struct PyCloud {
    inner: PointCloud,
}

#[pymethods]
impl PyCloud {
    /// Scan-frame cloud from `(x, y, z)` tuples.
    #[new]
    fn new(points: Vec<Xyz>) -> PyResult<Self> {
        let pts = points.into_iter().map(point).collect::<PyResult<Vec<_>>>()?;
        Ok(PyCloud { inner: PointCloud::scan(pts) })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyCloud { inner: read_cloud(path).map_err(py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        write_cloud(path, &self.inner).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn points(&self) -> Vec<Xyz> {
        self.inner.iter().map(|p| (p.x, p.y, p.z)).collect()
    }

    fn voxel_filter(&self, leaf: f64) -> PyResult<Self> {
        Ok(PyCloud { inner: voxel_filter(&self.inner, leaf).map_err(py_err)? })
    }

    fn crop(&self, center: Xyz, range: f64) -> PyResult<Self> {
        Ok(PyCloud { inner: crop_range(&self.inner, &point(center)?, range).map_err(py_err)? })
    }

    fn transformed(&self, pose6: Pose6) -> Self {
        PyCloud { inner: apply_pose(&self.inner, &pose(pose6)) }
    }
}

#[pyclass(name = "RegistrationResult", module = "rangeloc_py", get_all)]
struct PyRegistration {
    pose: Pose6,
    converged: bool,
    iterations: usize,
    matching_time_ms: f64,
    final_score: f64,
}

#[pymethods]
impl PyRegistration {
    fn __repr__(&self) -> String {
        format!(
            "RegistrationResult(pose={:?}, converged={}, iterations={}, matching_time_ms={:.3}, final_score={:.3})",
            self.pose, self.converged, self.iterations, self.matching_time_ms, self.final_score
        )
    }
}

#[pyclass(name = "NdtMap", module = "rangeloc_py")]
struct PyMap {
    inner: NdtMap,
}

#[pymethods]
impl PyMap {
    #[new]
    #[pyo3(signature = (cloud, cell_size = 1.0))]
    fn new(cloud: &PyCloud, cell_size: f64) -> PyResult<Self> {
        Ok(PyMap { inner: build_ndt_map(&cloud.inner, cell_size).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyMap { inner: read_ndt_map(path).map_err(py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        write_ndt_map(path, &self.inner).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn cell_size(&self) -> f64 {
        self.inner.cell_size()
    }

    fn score(&self, scan: &PyCloud, pose6: Pose6) -> f64 {
        ndt_score(&self.inner, &scan.inner, &pose(pose6))
    }

    /// `(score, gradient, hessian)` with the gradient as a list of 6 and the
    /// Hessian as 6 rows.
    fn derivatives(&self, scan: &PyCloud, pose6: Pose6) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
        let d = ndt_gradient_hessian(&self.inner, &scan.inner, &pose(pose6));
        let rows = (0..6).map(|i| (0..6).map(|j| d.hessian[(i, j)]).collect()).collect();
        (d.score, d.gradient.iter().copied().collect(), rows)
    }

    #[pyo3(signature = (scan, initial, max_iterations = 30))]
    fn register(&self, scan: &PyCloud, initial: Pose6, max_iterations: usize) -> PyResult<PyRegistration> {
        let cfg = RegConfig { max_iterations, ..RegConfig::default() };
        let r = register(&self.inner, &scan.inner, &pose(initial), &cfg).map_err(py_err)?;
        Ok(PyRegistration {
            pose: pose6(&r.pose),
            converged: r.converged,
            iterations: r.iterations,
            matching_time_ms: r.matching_time,
            final_score: r.final_score,
        })
    }

    /// Map factors of the vicinity of `center` within `range`, by column name.
    fn factors(&self, center: Xyz, range: f64) -> PyResult<HashMap<String, Option<f64>>> {
        let fv = factor_vector(&self.inner, &point(center)?, range, &FactorConfig::default()).map_err(py_err)?;
        Ok(factor_dict(&fv))
    }
}

fn factor_dict(fv: &FactorVector) -> HashMap<String, Option<f64>> {
    FactorVector::COLUMNS.iter().map(|c| c.to_string()).zip(fv.values()).collect()
}

fn factor_from_dict(range: f64, d: &HashMap<String, Option<f64>>) -> PyResult<FactorVector> {
    let values = FactorVector::COLUMNS
        .iter()
        .map(|c| d.get(*c).copied().ok_or_else(|| PyValueError::new_err(format!("missing factor {c}"))))
        .collect::<PyResult<Vec<_>>>()?;
    FactorVector::from_values(range, &values).map_err(py_err)
}

#[pyclass(name = "ErrorModel", module = "rangeloc_py")]
struct PyModel {
    inner: ForestModel,
}

#[pymethods]
impl PyModel {
    /// Random-forest error model for one range from factor dicts and
    /// measured errors in cm.
    #[staticmethod]
    #[pyo3(signature = (range, factors, errors_cm, n_trees = 100, max_depth = 8, min_leaf = 2, seed = 0))]
    fn train(
        range: f64,
        factors: Vec<HashMap<String, Option<f64>>>,
        errors_cm: Vec<f64>,
        n_trees: usize,
        max_depth: usize,
        min_leaf: usize,
        seed: u64,
    ) -> PyResult<Self> {
        if factors.len() != errors_cm.len() {
            return Err(PyValueError::new_err("factors and errors_cm differ in length"));
        }
        let mut data = Dataset::default();
        for (i, (f, e)) in factors.iter().zip(&errors_cm).enumerate() {
            data.push(i, factor_from_dict(range, f)?, Some(*e));
        }
        let params = ForestParams { n_trees, max_depth, min_leaf, seed, ..ForestParams::default() };
        Ok(PyModel { inner: train_forest(&data, &params).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyModel { inner: read_forest(Path::new(path)).map_err(py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        write_forest(Path::new(path), &self.inner).map_err(py_err)
    }

    #[getter]
    fn range(&self) -> f64 {
        self.inner.range
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.columns.clone()
    }

    fn predict(&self, factors: HashMap<String, Option<f64>>) -> PyResult<f64> {
        predict_error(&self.inner, &factor_from_dict(self.inner.range, &factors)?).map_err(py_err)
    }

    fn predict_at(&self, map: &PyMap, center: Xyz) -> PyResult<f64> {
        let fv = factor_vector(&map.inner, &point(center)?, self.inner.range, &FactorConfig::default()).map_err(py_err)?;
        predict_error(&self.inner, &fv).map_err(py_err)
    }
}

/// Shortest candidate range whose predicted error is within the threshold,
/// as `(range, predicted_error_cm, satisfied)`.
#[pyfunction]
#[pyo3(name = "plan_range", signature = (predicted, threshold_cm, candidates = None))]
fn py_plan_range(predicted: Vec<(f64, f64)>, threshold_cm: f64, candidates: Option<Vec<f64>>) -> PyResult<(f64, f64, bool)> {
    let c = candidates.unwrap_or_else(default_candidates);
    let r = plan_range(&predicted, threshold_cm, &c).map_err(py_err)?;
    Ok((r.range, r.predicted_error_cm, r.satisfied))
}

/// Scene cloud and waypoint poses for a TOML scene spec, or the default
/// street corpus for `seed` when no spec is given.
#[pyfunction]
#[pyo3(name = "generate_scene", signature = (seed = 0, spec_toml = None, waypoint_spacing = 8.0))]
fn py_generate_scene(seed: u64, spec_toml: Option<&str>, waypoint_spacing: f64) -> PyResult<(PyCloud, Vec<Pose6>)> {
    let spec = match spec_toml {
        Some(t) => SceneSpec::from_toml_str(t).map_err(py_err)?,
        None => SceneSpec::default_corpus(seed),
    };
    let cloud = generate_scene(&spec).map_err(py_err)?;
    let traj = make_trajectory(&spec, waypoint_spacing).map_err(py_err)?;
    Ok((PyCloud { inner: cloud }, traj.waypoints.iter().map(|w| pose6(&w.pose())).collect()))
}

#[pymodule]
fn rangeloc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCloud>()?;
    m.add_class::<PyMap>()?;
    m.add_class::<PyRegistration>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(py_plan_range, m)?)?;
    m.add_function(wrap_pyfunction!(py_generate_scene, m)?)?;
    m.add("FACTOR_COLUMNS", FactorVector::COLUMNS.to_vec())?;
    Ok(())
}
