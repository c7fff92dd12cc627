use std::path::PathBuf;

use clap::Parser;
use pyo3::exceptions::{PyFileNotFoundError, PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use thermonet::cli::commands::{evaluate_predictor, load_dataset};
use thermonet::cli::formats::{load_checkpoint, read_bytes, VoxelBlob};
use thermonet::cli::Cli;
use thermonet::models::CheckpointModel;
use thermonet::types::QualityVector;
use thermonet::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::MissingArtifact(_) => PyFileNotFoundError::new_err(e.to_string()),
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Shape { .. } | Error::InvalidArgument(_) | Error::Config(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Run a CLI command, e.g. `run(["synth", "--out", "runs/a"])`.
#[pyfunction]
fn run(args: Vec<String>) -> PyResult<()> {
    let cli = Cli::try_parse_from(std::iter::once("thermonet".to_string()).chain(args))
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    cli.run().map_err(to_py)
}

/// Average per-voxel absolute difference.
#[pyfunction]
fn adp(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    thermonet::evalreport::adp(&a, &b).map_err(to_py)
}

#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    thermonet::evalreport::pearson(&x, &y).map_err(to_py)
}

/// Read a voxel blob as `((w, l, h), values)`.
#[pyfunction]
fn read_voxels(path: PathBuf) -> PyResult<((usize, usize, usize), Vec<f64>)> {
    let bytes = read_bytes(&path).map_err(to_py)?;
    let blob = VoxelBlob::decode(&bytes, &path).map_err(to_py)?;
    let [w, l, h] = blob.dims_usize();
    Ok(((w, l, h), blob.data.to_f64()))
}

fn quality_dict<'py>(py: Python<'py>, q: QualityVector) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (name, v) in QualityVector::NAMES.iter().zip(q.to_array()) {
        d.set_item(*name, v)?;
    }
    Ok(d)
}

/// A trained checkpoint, either a reconstruction model or a predictor.
#[pyclass(module = "thermonet_py")]
struct Model {
    seed: u64,
    stats_ref: String,
    inner: CheckpointModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = load_checkpoint(&path).map_err(to_py)?;
        Ok(Self {
            seed: ck.seed,
            stats_ref: ck.stats_ref,
            inner: ck.model,
        })
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.seed
    }

    #[getter]
    fn stats_ref(&self) -> &str {
        &self.stats_ref
    }

    /// "ae", "vae3d", or the predictor variant name.
    #[getter]
    fn kind(&self) -> &'static str {
        match &self.inner {
            CheckpointModel::Recon(m) => m.arch.kind.as_str(),
            CheckpointModel::Predictor(p) => p.spec.variant.as_str(),
        }
    }

    /// Encoder latent size, if the model has one.
    #[getter]
    fn latent(&self) -> Option<usize> {
        match &self.inner {
            CheckpointModel::Recon(m) => Some(m.arch.latent),
            CheckpointModel::Predictor(p) => p.encoder.as_ref().map(|e| e.arch.latent),
        }
    }

    /// Reconstruct flat volumes through a reconstruction model.
    fn reconstruct(&self, volumes: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let CheckpointModel::Recon(m) = &self.inner else {
            return Err(PyValueError::new_err("reconstruct needs a reconstruction checkpoint"));
        };
        let refs: Vec<&[f64]> = volumes.iter().map(Vec::as_slice).collect();
        m.reconstruct(&refs).map_err(to_py)
    }

    /// Predict the parts of one split of a preprocessed run directory.
    #[pyo3(signature = (out, split = "test"))]
    fn predict<'py>(&self, py: Python<'py>, out: PathBuf, split: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let CheckpointModel::Predictor(p) = &self.inner else {
            return Err(PyValueError::new_err("predict needs a predictor checkpoint"));
        };
        let ds = load_dataset(&out).map_err(to_py)?;
        let s = &ds.dataset.split;
        let idx = match split {
            "train" => &s.train,
            "val" => &s.val,
            "test" => &s.test,
            other => return Err(PyValueError::new_err(format!("unknown split {other:?}; expected train, val or test"))),
        };
        let rows = evaluate_predictor(p, &ds, idx).map_err(to_py)?;
        rows.into_iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("build_id", r.build_id)?;
                d.set_item("part_id", r.part_id)?;
                d.set_item("truth", quality_dict(py, r.truth)?)?;
                d.set_item("pred", quality_dict(py, r.pred)?)?;
                d.set_item("adp", r.adp)?;
                Ok(d)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Model(kind={:?}, seed={})", self.kind(), self.seed)
    }
}

#[pymodule]
fn thermonet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(adp, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(read_voxels, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}
