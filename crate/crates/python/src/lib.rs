//! Python bindings: datasets, the two trained models, sample pools, both
//! explainers and the evaluation sweeps.

use alime::dataset::{prepare, Schema, TabularDataset, DEFAULT_TEST_FRACTION};
use alime::evaluation::{
    choose_stability_instance, fidelity_sweep, stability_metrics as core_stability_metrics, stability_sweep,
    Explainer, StabilityExplainer, DEFAULT_ITERATIONS,
};
use alime::explain::{explain_alime as core_explain_alime, explain_lime as core_explain_lime, SurrogateConfig};
use alime::models::{default_latent_dim, train_autoencoder, train_blackbox, DenoisingAutoencoder};
use alime::neural::{Loss, TrainConfig};
use alime::sampling::{attach_embeddings, load_pool, sample_pool, save_pool, SamplePool, DEFAULT_POOL_SIZE};
use alime::{AlimeError, BlackBoxPredictor, Embedder, Method, Predictor};
use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

create_exception!(pyalime, ExplainError, PyException);

fn to_py(err: AlimeError) -> PyErr {
    if err.is_usage() {
        PyValueError::new_err(err.to_string())
    } else {
        ExplainError::new_err(err.to_string())
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| to_py(e.into()))
}

fn json_to_dict<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (to_json(value)?,))
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), width, rows.iter().flatten().copied()))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn train_config(loss: Loss, seed: u64, epochs: usize, lr: f64, batch_size: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size,
        learning_rate: lr,
        ..TrainConfig::new(loss, seed)
    }
}

/// Standardized dataset with its train/test split.
#[pyclass(frozen, module = "pyalime")]
struct Dataset {
    inner: TabularDataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    #[pyo3(signature = (path, schema, test_fraction = DEFAULT_TEST_FRACTION, seed = 0))]
    fn load(path: &str, schema: &str, test_fraction: f64, seed: u64) -> PyResult<Self> {
        let schema: Schema = schema.parse().map_err(to_py)?;
        Ok(Dataset {
            inner: prepare(path, schema, test_fraction, seed).map_err(to_py)?,
        })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name.name()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    #[getter]
    fn train_indices(&self) -> Vec<usize> {
        self.inner.train_idx.clone()
    }

    #[getter]
    fn test_indices(&self) -> Vec<usize> {
        self.inner.test_idx.clone()
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.inner.labels.clone()
    }

    /// Standardized feature row.
    fn row(&self, index: usize) -> PyResult<Vec<f64>> {
        if index >= self.inner.n_rows() {
            return Err(PyValueError::new_err(format!("row {index} out of range")));
        }
        Ok(self.inner.row(index))
    }

    fn destandardize(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        if z.len() != self.inner.n_features() {
            return Err(PyValueError::new_err("wrong feature count"));
        }
        Ok(self.inner.destandardize(&z))
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({}, rows={}, features={}, test={})",
            self.inner.name,
            self.inner.n_rows(),
            self.inner.n_features(),
            self.inner.test_idx.len()
        )
    }
}

/// The feed-forward classifier being explained.
#[pyclass(frozen, module = "pyalime")]
struct BlackBox {
    inner: BlackBoxPredictor,
}

#[pymethods]
impl BlackBox {
    #[staticmethod]
    #[pyo3(signature = (dataset, seed = 0, epochs = 200, lr = 0.05, batch_size = 32))]
    fn train(py: Python<'_>, dataset: &Dataset, seed: u64, epochs: usize, lr: f64, batch_size: usize) -> PyResult<Self> {
        let cfg = train_config(Loss::Bce, seed, epochs, lr, batch_size);
        let fitted = py.detach(|| train_blackbox(&dataset.inner, &cfg)).map_err(to_py)?;
        Ok(BlackBox { inner: fitted.model })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(BlackBox { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner)
    }

    /// Positive-class probability per row.
    fn predict_proba(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.predict_batch(&matrix(&rows)?).map_err(to_py)
    }

    fn test_accuracy(&self, dataset: &Dataset) -> PyResult<f64> {
        let d = &dataset.inner;
        self.inner.accuracy(&d.test_features(), &d.test_labels()).map_err(to_py)
    }
}

/// Denoising autoencoder whose encoder defines ALIME's latent space.
#[pyclass(frozen, module = "pyalime")]
struct Autoencoder {
    inner: DenoisingAutoencoder,
}

#[pymethods]
impl Autoencoder {
    #[staticmethod]
    #[pyo3(signature = (dataset, latent_dim = None, noise_sigma = 0.1, seed = 0, epochs = 200, lr = 0.05, batch_size = 32))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        dataset: &Dataset,
        latent_dim: Option<usize>,
        noise_sigma: f64,
        seed: u64,
        epochs: usize,
        lr: f64,
        batch_size: usize,
    ) -> PyResult<Self> {
        let latent = latent_dim.unwrap_or_else(|| default_latent_dim(dataset.inner.n_features()));
        let cfg = train_config(Loss::Mse, seed, epochs, lr, batch_size);
        let fitted = py
            .detach(|| train_autoencoder(&dataset.inner, latent, noise_sigma, &cfg))
            .map_err(to_py)?;
        Ok(Autoencoder { inner: fitted.model })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Autoencoder { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner)
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim
    }

    #[getter]
    fn noise_sigma(&self) -> f64 {
        self.inner.noise_sigma
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn embed(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows_of(&self.inner.embed_batch(&matrix(&rows)?).map_err(to_py)?))
    }

    /// Mean squared reconstruction error on the clean test rows.
    fn test_reconstruction_mse(&self, dataset: &Dataset) -> PyResult<f64> {
        self.inner
            .reconstruction_mse(&dataset.inner.test_features())
            .map_err(to_py)
    }
}

/// Gaussian sample pool, optionally carrying encoder embeddings.
#[pyclass(frozen, module = "pyalime")]
struct Pool {
    inner: SamplePool,
}

#[pymethods]
impl Pool {
    #[staticmethod]
    #[pyo3(signature = (n_features, m = DEFAULT_POOL_SIZE, seed = 0))]
    fn sample(n_features: usize, m: usize, seed: u64) -> PyResult<Self> {
        Ok(Pool {
            inner: sample_pool(n_features, m, seed).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Pool {
            inner: load_pool(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_pool(&self.inner, path).map_err(to_py)
    }

    /// Copy of this pool with embeddings from `ae`.
    fn embedded(&self, py: Python<'_>, ae: &Autoencoder) -> PyResult<Self> {
        let inner = py.detach(|| attach_embeddings(&self.inner, &ae.inner)).map_err(to_py)?;
        Ok(Pool { inner })
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed()
    }

    #[getter]
    fn has_embeddings(&self) -> bool {
        self.inner.embeddings().is_some()
    }

    fn point(&self, index: usize) -> PyResult<Vec<f64>> {
        if index >= self.inner.len() {
            return Err(PyValueError::new_err(format!("point {index} out of range")));
        }
        Ok(self.inner.point(index))
    }

    fn checksum(&self) -> String {
        self.inner.checksum()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(frozen, module = "pyalime")]
struct Explanation {
    inner: alime::Explanation,
}

#[pymethods]
impl Explanation {
    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.name()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.inner.n_points
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.inner.coefficients.clone()
    }

    #[getter]
    fn intercept(&self) -> f64 {
        self.inner.intercept
    }

    #[getter]
    fn local_r2(&self) -> f64 {
        self.inner.local_r2
    }

    #[getter]
    fn local_mse(&self) -> f64 {
        self.inner.local_mse
    }

    #[getter]
    fn prediction(&self) -> f64 {
        self.inner.prediction
    }

    /// `(feature, coefficient)` pairs by decreasing magnitude.
    fn ranked(&self) -> Vec<(String, f64)> {
        self.inner.ranked().into_iter().map(|(n, c)| (n.to_string(), c)).collect()
    }

    fn bar_csv(&self) -> String {
        self.inner.to_bar_csv()
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Explanation({}, n={}, r2={:.4}, mse={:.3e})",
            self.inner.method, self.inner.n_points, self.inner.local_r2, self.inner.local_mse
        )
    }
}

fn named(explanation: alime::Explanation, names: Option<Vec<String>>) -> PyResult<Explanation> {
    let inner = match names {
        Some(names) => explanation.with_feature_names(&names).map_err(to_py)?,
        None => explanation,
    };
    Ok(Explanation { inner })
}

#[pyfunction]
#[pyo3(signature = (blackbox, x, n, alpha = 1.0, seed = 0, feature_names = None))]
fn explain_lime(
    py: Python<'_>,
    blackbox: &BlackBox,
    x: Vec<f64>,
    n: usize,
    alpha: f64,
    seed: u64,
    feature_names: Option<Vec<String>>,
) -> PyResult<Explanation> {
    let cfg = SurrogateConfig::with_alpha(alpha);
    let e = py
        .detach(|| core_explain_lime(&blackbox.inner, &x, n, &cfg, seed))
        .map_err(to_py)?;
    named(e, feature_names)
}

#[pyfunction]
#[pyo3(signature = (blackbox, autoencoder, pool, x, n, alpha = 1.0, feature_names = None))]
#[allow(clippy::too_many_arguments)]
fn explain_alime(
    py: Python<'_>,
    blackbox: &BlackBox,
    autoencoder: &Autoencoder,
    pool: &Pool,
    x: Vec<f64>,
    n: usize,
    alpha: f64,
    feature_names: Option<Vec<String>>,
) -> PyResult<Explanation> {
    let cfg = SurrogateConfig::with_alpha(alpha);
    let e = py
        .detach(|| core_explain_alime(&blackbox.inner, &autoencoder.inner, &pool.inner, &x, n, &cfg))
        .map_err(to_py)?;
    named(e, feature_names)
}

/// `(mean_std, mean_cv)` of |coefficients| across iteration rows.
#[pyfunction]
fn stability_metrics(coefficients: Vec<Vec<f64>>) -> PyResult<(f64, f64)> {
    core_stability_metrics(&matrix(&coefficients)?).map_err(to_py)
}

fn parse_method(method: &str) -> PyResult<Method> {
    method.parse().map_err(to_py)
}

/// Fidelity sweep over the test set; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (blackbox, dataset, method, n_values, autoencoder = None, pool = None, alpha = 1.0, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn fidelity_report<'py>(
    py: Python<'py>,
    blackbox: &BlackBox,
    dataset: &Dataset,
    method: &str,
    n_values: Vec<usize>,
    autoencoder: Option<&Autoencoder>,
    pool: Option<&Pool>,
    alpha: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let explainer = match parse_method(method)? {
        Method::Lime => Explainer::Lime,
        Method::Alime => match (autoencoder, pool) {
            (Some(ae), Some(pool)) => Explainer::Alime {
                embedder: &ae.inner,
                pool: &pool.inner,
            },
            _ => return Err(PyValueError::new_err("alime needs an autoencoder and an embedded pool")),
        },
    };
    let cfg = SurrogateConfig::with_alpha(alpha);
    let report = py
        .detach(|| fidelity_sweep(&blackbox.inner, &explainer, &dataset.inner, &n_values, &cfg, seed))
        .map_err(to_py)?;
    json_to_dict(py, &report)
}

/// Stability sweep at one test row (drawn from `seed` unless `row` is given).
#[pyfunction]
#[pyo3(signature = (blackbox, dataset, method, n_values, autoencoder = None, pool_size = DEFAULT_POOL_SIZE, iterations = DEFAULT_ITERATIONS, row = None, alpha = 1.0, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn stability_report<'py>(
    py: Python<'py>,
    blackbox: &BlackBox,
    dataset: &Dataset,
    method: &str,
    n_values: Vec<usize>,
    autoencoder: Option<&Autoencoder>,
    pool_size: usize,
    iterations: usize,
    row: Option<usize>,
    alpha: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let explainer = match parse_method(method)? {
        Method::Lime => StabilityExplainer::Lime,
        Method::Alime => match autoencoder {
            Some(ae) => StabilityExplainer::Alime {
                embedder: &ae.inner,
                pool_size,
            },
            None => return Err(PyValueError::new_err("alime needs an autoencoder")),
        },
    };
    let row = row.unwrap_or_else(|| choose_stability_instance(&dataset.inner, seed));
    let cfg = SurrogateConfig::with_alpha(alpha);
    let report = py
        .detach(|| {
            stability_sweep(&blackbox.inner, &explainer, &dataset.inner, row, &n_values, iterations, &cfg, seed)
        })
        .map_err(to_py)?;
    json_to_dict(py, &report)
}

#[pymodule]
fn pyalime(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ExplainError", m.py().get_type::<ExplainError>())?;
    m.add_class::<Dataset>()?;
    m.add_class::<BlackBox>()?;
    m.add_class::<Autoencoder>()?;
    m.add_class::<Pool>()?;
    m.add_class::<Explanation>()?;
    m.add_function(wrap_pyfunction!(explain_lime, m)?)?;
    m.add_function(wrap_pyfunction!(explain_alime, m)?)?;
    m.add_function(wrap_pyfunction!(stability_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_report, m)?)?;
    m.add_function(wrap_pyfunction!(stability_report, m)?)?;
    Ok(())
}
