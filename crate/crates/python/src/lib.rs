//! Python bindings. Structured values (configs, metrics, reports) cross the
//! boundary as plain dicts and lists.

use std::path::PathBuf;

use adgan_core::data::{load_hsc, save_hsc, synth_dataset, HsiDataset, SynthSpec};
use adgan_core::evaluation::{diversity_report, metrics as compute_metrics, ConfusionMatrix};
use adgan_core::model::{load_checkpoint, AdganModel, ArchConfig};
use adgan_core::pipeline::{evaluate, prepare, ExperimentConfig, Prepared};
use adgan_core::regularization::{self, RegularizerConfig, RegularizerKind};
use adgan_core::training::train;
use adgan_core::{Error, Tensor};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(format!("[{}] {other}", other.kind())),
    }
}

/// A str is taken as JSON text; anything else goes through `json.dumps`.
fn json_text(py: Python<'_>, obj: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(s) = obj.extract::<String>() {
        return Ok(s);
    }
    py.import("json")?.call_method1("dumps", (obj,))?.extract()
}

fn from_json<T: serde::de::DeserializeOwned>(py: Python<'_>, obj: Option<&Bound<'_, PyAny>>) -> PyResult<Option<T>> {
    match obj {
        None => Ok(None),
        Some(o) => {
            let text = json_text(py, o)?;
            serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| PyValueError::new_err(format!("[config] {e}")))
        }
    }
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Labeled hyperspectral cube.
#[pyclass(name = "Dataset", module = "adgan")]
pub struct PyDataset {
    inner: HsiDataset,
}

#[pymethods]
impl PyDataset {
    /// Synthetic scene; `spec` is a dict or JSON string of generator settings.
    #[staticmethod]
    #[pyo3(signature = (spec=None))]
    fn synth(py: Python<'_>, spec: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let spec: SynthSpec = from_json(py, spec)?.unwrap_or_default();
        Ok(Self {
            inner: synth_dataset(&spec).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_hsc(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_hsc(&path, &self.inner).map_err(py_err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.cube.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.cube.height
    }

    #[getter]
    fn bands(&self) -> usize {
        self.inner.cube.bands
    }

    /// Row-major class ids, 0 = unlabeled.
    fn labels(&self) -> Vec<u16> {
        self.inner.labels.labels.clone()
    }

    /// Pixel counts for classes 1..=K.
    fn class_counts(&self) -> Vec<usize> {
        self.inner.labels.class_counts()
    }

    fn spectrum(&self, y: usize, x: usize) -> PyResult<Vec<f64>> {
        if y >= self.inner.cube.height || x >= self.inner.cube.width {
            return Err(PyValueError::new_err(format!("pixel ({y}, {x}) outside the cube")));
        }
        Ok(self.inner.cube.spectrum(y, x))
    }

    fn cube_sha256(&self) -> String {
        self.inner.cube.sha256()
    }
}

/// Generator plus discriminator.
#[pyclass(name = "Model", module = "adgan")]
pub struct PyModel {
    inner: AdganModel,
}

#[pymethods]
impl PyModel {
    /// Freshly initialized model; `arch` is a dict or JSON string.
    #[new]
    #[pyo3(signature = (arch=None, seed=0))]
    fn new(py: Python<'_>, arch: Option<&Bound<'_, PyAny>>, seed: u64) -> PyResult<Self> {
        let arch: ArchConfig = from_json(py, arch)?.unwrap_or_default();
        let mut inner = AdganModel::new(arch, seed).map_err(py_err)?;
        inner.set_training(false);
        Ok(Self { inner })
    }

    /// Model stored in a checkpoint file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let mut inner = load_checkpoint(&path).map_err(py_err)?.model;
        inner.set_training(false);
        Ok(Self { inner })
    }

    fn arch<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.arch)
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn patch_size(&self) -> usize {
        self.inner.arch.patch_size
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.arch.channels
    }

    /// Class ids for `n` patches given as a flat `n × C × S × S` list.
    #[pyo3(signature = (patches, n, include_fake=false))]
    fn predict(&mut self, patches: Vec<f64>, n: usize, include_fake: bool) -> PyResult<Vec<u16>> {
        let a = &self.inner.arch;
        let x = Tensor::new(vec![n, a.channels, a.patch_size, a.patch_size], patches).map_err(py_err)?;
        self.inner.predict(&x, include_fake).map_err(py_err)
    }

    /// Flat `n × C × S × S` samples of one class.
    #[pyo3(signature = (class_id, n, seed=0))]
    fn generate(&mut self, class_id: u16, n: usize, seed: u64) -> PyResult<Vec<f64>> {
        Ok(adgan_core::evaluation::generate_class(&mut self.inner, class_id, n, seed)
            .map_err(py_err)?
            .into_data())
    }

    #[pyo3(signature = (class_id, n=16, seed=0))]
    fn diversity<'py>(&mut self, py: Python<'py>, class_id: u16, n: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let rep = diversity_report(&mut self.inner, class_id, n, seed, None).map_err(py_err)?;
        to_py(py, &rep)
    }
}

/// Data preparation, training and evaluation under one config.
#[pyclass(name = "Experiment", module = "adgan")]
pub struct PyExperiment {
    cfg: ExperimentConfig,
    prep: Option<Prepared>,
}

impl PyExperiment {
    fn prepared(&mut self) -> PyResult<&Prepared> {
        if self.prep.is_none() {
            self.prep = Some(prepare(&self.cfg).map_err(py_err)?);
        }
        Ok(self.prep.as_ref().unwrap())
    }
}

#[pymethods]
impl PyExperiment {
    /// `config` is a dict or JSON string; unknown keys are rejected.
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(py: Python<'_>, config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let cfg: ExperimentConfig = match config {
            Some(c) => ExperimentConfig::from_json(&json_text(py, c)?).map_err(py_err)?,
            None => ExperimentConfig::default(),
        };
        Ok(Self {
            cfg: cfg.resolve().map_err(py_err)?,
            prep: None,
        })
    }

    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.cfg)
    }

    /// Training and test sample counts.
    fn prepare(&mut self) -> PyResult<(usize, usize)> {
        let p = self.prepared()?;
        Ok((p.train.len(), p.test.len()))
    }

    /// Trains and returns the best model and the per-epoch log.
    #[pyo3(signature = (checkpoint_dir=None))]
    fn train<'py>(&mut self, py: Python<'py>, checkpoint_dir: Option<PathBuf>) -> PyResult<(PyModel, Bound<'py, PyAny>)> {
        if let Some(d) = &checkpoint_dir {
            std::fs::create_dir_all(d).map_err(|e| PyIOError::new_err(format!("{}: {e}", d.display())))?;
        }
        let cfg = self.cfg.train.clone();
        let p = self.prepared()?;
        let outcome = train(&p.train, Some(&p.test), &cfg, checkpoint_dir.as_deref()).map_err(py_err)?;
        let mut model = outcome.best.model;
        model.set_training(false);
        Ok((PyModel { inner: model }, to_py(py, &outcome.log.epochs)?))
    }

    /// Metrics on the held-out pixels and on all labeled pixels.
    fn evaluate<'py>(&mut self, py: Python<'py>, model: &mut PyModel) -> PyResult<Bound<'py, PyAny>> {
        let opts = self.cfg.classify.clone();
        let p = self.prepared()?;
        let (report, _) = evaluate(&mut model.inner, p, &opts).map_err(py_err)?;
        to_py(py, &report)
    }
}

fn plane_tensor(plane: &[Vec<f64>]) -> PyResult<Tensor> {
    let h = plane.len();
    let w = plane.first().map_or(0, Vec::len);
    if h == 0 || w == 0 || plane.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err("plane must be a nonempty rectangular list of rows"));
    }
    Tensor::new(vec![h, w], plane.concat()).map_err(py_err)
}

fn rows<T: Clone>(flat: &[T], w: usize) -> Vec<Vec<T>> {
    flat.chunks(w).map(<[T]>::to_vec).collect()
}

fn block_drop(
    plane: Vec<Vec<f64>>,
    kind: RegularizerKind,
    b_size: usize,
    k: f64,
    keep_prob: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<bool>>)> {
    let a = plane_tensor(&plane)?;
    let cfg = RegularizerConfig {
        kind,
        b_size,
        k,
        keep_prob,
        ..RegularizerConfig::default()
    };
    cfg.validate().map_err(py_err)?;
    let w = a.shape()[1];
    let mask = regularization::sample_masks(&a, &cfg, seed).map_err(py_err)?.remove(0);
    let out = match kind {
        RegularizerKind::Adapdrop => regularization::adapdrop(&a, &cfg, seed),
        _ => regularization::dropblock(&a, &cfg, seed),
    }
    .map_err(py_err)?;
    Ok((rows(out.data(), w), rows(&mask.keep, w)))
}

/// AdapDrop on one plane. Returns the output rows and the keep mask.
#[pyfunction]
#[pyo3(signature = (plane, b_size=7, k=40.0, keep_prob=0.9, seed=0))]
fn adapdrop(
    plane: Vec<Vec<f64>>,
    b_size: usize,
    k: f64,
    keep_prob: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<bool>>)> {
    block_drop(plane, RegularizerKind::Adapdrop, b_size, k, keep_prob, seed)
}

/// DropBlock on one plane. Returns the output rows and the keep mask.
#[pyfunction]
#[pyo3(signature = (plane, b_size=7, keep_prob=0.9, seed=0))]
fn dropblock(plane: Vec<Vec<f64>>, b_size: usize, keep_prob: f64, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<bool>>)> {
    block_drop(plane, RegularizerKind::Dropblock, b_size, 100.0, keep_prob, seed)
}

/// Block-center rate for a square feature map.
#[pyfunction]
fn compute_gamma(keep_prob: f64, b_size: usize, feat_size: usize) -> PyResult<f64> {
    regularization::compute_gamma(keep_prob, b_size, feat_size).map_err(py_err)
}

/// OA, AA, kappa and per-class accuracy of a confusion matrix (rows =
/// reference classes).
#[pyfunction]
fn metrics<'py>(py: Python<'py>, confusion: Vec<Vec<u64>>) -> PyResult<Bound<'py, PyAny>> {
    let cm = ConfusionMatrix::from_rows(&confusion).map_err(py_err)?;
    to_py(py, &compute_metrics(&cm).map_err(py_err)?)
}

#[pymodule]
fn adgan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyExperiment>()?;
    m.add_function(wrap_pyfunction!(adapdrop, m)?)?;
    m.add_function(wrap_pyfunction!(dropblock, m)?)?;
    m.add_function(wrap_pyfunction!(compute_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    Ok(())
}
