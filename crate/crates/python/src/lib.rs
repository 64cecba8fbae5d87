//! Python bindings: synthesize data, train, score, threshold and evaluate.
//!
//! Series cross the boundary as lists of rows (`list[list[float]]`) and
//! labels as `list[int]` of 0/1.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use madcluster::metrics::{self, EvalConfig, REPORT_COLUMNS};
use madcluster::single;
use madcluster::timeseries::{synth_train_test, SynthSpec, TimeSeriesDataset};
use madcluster::trainer::{self, EpochRecord};
use madcluster::{scoring, ClusterMode, EmbedderConfig, EmbedderKind, Error, ModelState, ScoreSeries, TrainConfig};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        e if e.is_numeric() => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn dataset(rows: &[Vec<f64>], labels: Option<Vec<u8>>) -> PyResult<TimeSeriesDataset> {
    TimeSeriesDataset::from_rows("python", rows, labels).map_err(py_err)
}

// `Vec<u8>` would cross as `bytes`
fn int_labels(labels: &[u8]) -> Vec<i32> {
    labels.iter().map(|&l| i32::from(l)).collect()
}

fn rows_of(ds: &TimeSeriesDataset) -> Vec<Vec<f64>> {
    (0..ds.len()).map(|t| ds.row(t).to_vec()).collect()
}

/// A trained model. Load with `Model.load(path)` or get one from `train`.
#[pyclass(module = "madcluster_py", name = "Model")]
struct PyModel {
    inner: ModelState,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: ModelState::load(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    /// Per-point anomaly scores for raw (unnormalized) rows.
    fn score(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        scoring::score(&dataset(&rows, None)?, &self.inner).map_err(py_err)
    }

    /// Per-step embeddings for raw rows.
    fn embed(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        scoring::embed_series(&self.inner, &dataset(&rows, None)?).map_err(py_err)
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode_name()
    }

    #[getter]
    fn window(&self) -> usize {
        self.inner.window
    }

    #[getter]
    fn centers(&self) -> Vec<Vec<f64>> {
        self.inner.centers()
    }

    /// Learned threshold in single mode, `None` in multi mode.
    #[getter]
    fn nu(&self) -> Option<f64> {
        match &self.inner.cluster {
            madcluster::ClusterModel::Single(s) => Some(s.nu()),
            madcluster::ClusterModel::Multi(_) => None,
        }
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(mode={:?}, window={}, centers={})",
            self.inner.mode_name(),
            self.inner.window,
            self.inner.centers().len()
        )
    }
}

type SynthPair = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<i32>);

/// Train/test pair from the seeded generator: `(train_rows, test_rows, test_labels)`.
#[pyfunction]
#[pyo3(signature = (length=2000, dim=2, anomaly_ratio=0.1, noise=0.05, seed=7))]
fn synth(length: usize, dim: usize, anomaly_ratio: f64, noise: f64, seed: u64) -> PyResult<SynthPair> {
    let spec = SynthSpec {
        length,
        dim,
        anomaly_ratio,
        noise,
        seed,
        ..Default::default()
    };
    let (train, test) = synth_train_test(&spec).map_err(py_err)?;
    let labels = int_labels(test.labels().unwrap_or_default());
    Ok((rows_of(&train), rows_of(&test), labels))
}

fn record_dict<'py>(py: Python<'py>, r: &EpochRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("epoch", r.epoch)?;
    d.set_item("nu", r.nu)?;
    d.set_item("r_sq", r.r_sq)?;
    d.set_item("mean_dist", r.mean_dist)?;
    d.set_item("l_cluster", r.l_cluster)?;
    d.set_item("l_distance", r.l_distance)?;
    d.set_item("l_total", r.l_total)?;
    d.set_item("c_norm", r.c_norm)?;
    d.set_item("wall_secs", r.wall_secs)?;
    Ok(d)
}

/// Fits a model on raw rows. Returns `(model, log)` where `log` is a list of
/// per-epoch dicts.
#[pyfunction]
#[pyo3(signature = (
    rows, *, epochs=50, window=100, lr=1e-3, rho=0.1, lambda_=1e-4, tau=0.1, nu0=0.5,
    mode="single", k=1, seed=7, embedder="dilated_rnn", hidden_dim=32, layers=2,
))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    rows: Vec<Vec<f64>>,
    epochs: usize,
    window: usize,
    lr: f64,
    rho: f64,
    lambda_: f64,
    tau: f64,
    nu0: f64,
    mode: &str,
    k: usize,
    seed: u64,
    embedder: &str,
    hidden_dim: usize,
    layers: usize,
) -> PyResult<(PyModel, Vec<Bound<'py, PyDict>>)> {
    let data = dataset(&rows, None)?;
    let mode = match mode {
        "single" => ClusterMode::Single,
        "multi" => ClusterMode::Multi,
        other => return Err(PyValueError::new_err(format!("mode {other:?}, expected single or multi"))),
    };
    let kind: EmbedderKind = embedder.parse().map_err(py_err)?;
    let mut emb = EmbedderConfig::new(kind, data.dim());
    emb.hidden_dim = hidden_dim;
    emb.layers = layers;
    emb.dilations = (0..layers).map(|i| 1 << i).collect();
    let cfg = TrainConfig {
        epochs,
        window,
        stride: window,
        lr,
        rho,
        lambda: lambda_,
        tau,
        nu0,
        mode,
        k,
        seed,
        ..Default::default()
    };
    let out = py.detach(|| trainer::fit(&data, &emb, &cfg)).map_err(py_err)?;
    let log = out.log.records.iter().map(|r| record_dict(py, r)).collect::<PyResult<_>>()?;
    Ok((PyModel { inner: out.model }, log))
}

/// `(threshold, labels)` from the nearest-rank `(1 - alpha)` percentile.
#[pyfunction]
fn threshold(scores: Vec<f64>, alpha: f64) -> PyResult<(f64, Vec<i32>)> {
    let s = ScoreSeries::new(scores, alpha).map_err(py_err)?;
    Ok((s.threshold, int_labels(&s.labels)))
}

/// The seven metrics as a dict, predictions thresholded at `alpha`.
#[pyfunction]
#[pyo3(signature = (scores, labels, alpha, window=100))]
fn evaluate<'py>(py: Python<'py>, scores: Vec<f64>, labels: Vec<u8>, alpha: f64, window: usize) -> PyResult<Bound<'py, PyDict>> {
    let r = metrics::evaluate(&scores, &labels, alpha, EvalConfig::for_window(window)).map_err(py_err)?;
    let d = PyDict::new(py);
    for (k, v) in REPORT_COLUMNS.iter().zip(r.values()) {
        d.set_item(k, v)?;
    }
    d.set_item("aff_p_undefined", r.aff_p_undefined)?;
    Ok(d)
}

/// Mean one-directed loss over paired `q`, `p` at threshold `nu`.
#[pyfunction]
fn one_directed_loss(q: Vec<f64>, p: Vec<f64>, nu: f64) -> PyResult<f64> {
    single::one_directed_loss(&q, &p, nu).map_err(py_err)
}

/// `(dL/dq, dL/dnu)` of [`one_directed_loss`].
#[pyfunction]
fn one_directed_grad(q: Vec<f64>, p: Vec<f64>, nu: f64) -> PyResult<(Vec<f64>, f64)> {
    single::grad_one_directed(&q, &p, nu).map_err(py_err)
}

#[pymodule]
fn madcluster_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(one_directed_loss, m)?)?;
    m.add_function(wrap_pyfunction!(one_directed_grad, m)?)?;
    Ok(())
}
