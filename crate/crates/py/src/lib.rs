//! Python bindings: model construction and evaluation, the closed-form heat
//! solution, the sphere transform, and the experiment runner.

use std::fs;
use std::io::{BufReader, BufWriter, Write};

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use spinn::bases::sphere::{SphereBasisSpec, SphereTransform};
use spinn::eval::{preset, run_experiment, ExperimentConfig, RunDirs, PRESETS};
use spinn::model::{reassemble_multi_eval, Model, ModelConfig};
use spinn::Error;

fn py_err(e: Error) -> PyErr {
    match &e {
        Error::Config(_) | Error::InvalidVariant(_) | Error::ShapeMismatch { .. } | Error::InvalidShape(_) => {
            PyValueError::new_err(e.to_string())
        }
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Model", module = "spinn_py")]
struct PyModel {
    inner: Model,
}

#[pymethods]
impl PyModel {
    /// Interval heat model; `variant` is one of `naive`, `spectral-exact`,
    /// `spectral-full`, `spectral-mlp-step`, `spectral-mlp-recon`.
    #[staticmethod]
    #[pyo3(signature = (variant, k = 20, samples = 101, alpha = 0.01, seed = 0))]
    fn interval(variant: &str, k: usize, samples: usize, alpha: f64, seed: u64) -> PyResult<Self> {
        let cfg = ModelConfig::interval(variant, k, samples, alpha).map_err(py_err)?;
        Ok(PyModel { inner: Model::build(&cfg, seed).map_err(py_err)? })
    }

    /// Sphere Allen-Cahn model: `naive`, `sphere-a`, `sphere-b`, `sphere-c`.
    #[staticmethod]
    #[pyo3(signature = (variant, degree = 5, eps = 0.1, width = 48, seed = 0))]
    fn sphere(variant: &str, degree: usize, eps: f64, width: usize, seed: u64) -> PyResult<Self> {
        let cfg = ModelConfig::sphere(variant, degree, eps, width).map_err(py_err)?;
        Ok(PyModel { inner: Model::build(&cfg, seed).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let f = fs::File::open(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(PyModel { inner: Model::load(&mut BufReader::new(f)).map_err(py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let f = fs::File::create(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let mut w = BufWriter::new(f);
        self.inner.save(&mut w).map_err(py_err)?;
        w.flush().map_err(|e| PyIOError::new_err(e.to_string()))
    }

    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    fn variant(&self) -> String {
        self.inner.variant_name()
    }

    /// Solution values at `points` (each `[x]` or `[theta, phi]`) and time `t`
    /// for the initial condition sampled as `samples`.
    fn predict(&self, py: Python<'_>, samples: Vec<f64>, t: f64, points: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        py.detach(|| reassemble_multi_eval(&self.inner, &samples, t, &points)).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Model({}, {} parameters)", self.inner.variant_name(), self.inner.n_params())
    }
}

/// Closed-form heat solution for sine coefficients `coeffs` (modes 1..K).
#[pyfunction]
fn heat_analytic(coeffs: Vec<f64>, x: f64, t: f64, alpha: f64) -> f64 {
    spinn::oracle::heat_analytic(&coeffs, x, t, alpha)
}

/// Least-squares spherical harmonic coefficients from the 20 x 20 grid.
#[pyfunction]
fn sphere_transform(samples: Vec<f64>, degree: usize) -> PyResult<Vec<f64>> {
    let t = SphereTransform::new(SphereBasisSpec::new(degree)).map_err(py_err)?;
    Ok(t.transform(&samples).map_err(py_err)?.values)
}

/// Grid values of a spherical harmonic expansion.
#[pyfunction]
fn sphere_synthesize(coeffs: Vec<f64>, degree: usize) -> PyResult<Vec<f64>> {
    let t = SphereTransform::new(SphereBasisSpec::new(degree)).map_err(py_err)?;
    if coeffs.len() != t.spec.len() {
        return Err(py_err(Error::ShapeMismatch { expected: t.spec.len(), got: coeffs.len() }));
    }
    Ok(t.synthesize(&coeffs))
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    PRESETS.to_vec()
}

/// Canonical text of a preset, usable as a config file.
#[pyfunction]
fn preset_text(name: &str) -> PyResult<String> {
    Ok(preset(name).map_err(py_err)?.to_text())
}

/// Runs an experiment from config text and returns the metric rows as
/// `(variant, metric, t, value)` tuples; `t` is `None` for scalar metrics.
#[pyfunction]
#[pyo3(signature = (config, out_dir, cache_dir = None))]
fn run(
    py: Python<'_>,
    config: &str,
    out_dir: &str,
    cache_dir: Option<&str>,
) -> PyResult<Vec<(String, String, Option<f64>, f64)>> {
    let cfg = ExperimentConfig::parse(config).map_err(py_err)?;
    let mut dirs = RunDirs::new(out_dir);
    if let Some(c) = cache_dir {
        dirs.cache = c.into();
    }
    let rep = py.detach(|| run_experiment(&cfg, &dirs)).map_err(py_err)?;
    Ok(rep.rows.into_iter().map(|r| (r.variant, r.metric, r.t, r.value)).collect())
}

/// Module entry point; also usable with `pyo3::append_to_inittab!` when embedding.
#[pymodule]
pub fn spinn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(heat_analytic, m)?)?;
    m.add_function(wrap_pyfunction!(sphere_transform, m)?)?;
    m.add_function(wrap_pyfunction!(sphere_synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(preset_text, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
