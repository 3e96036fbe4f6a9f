//! Python bindings for `privgsd`, importable as `pygsd`.

use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;

use privgsd::dataset::{self as ds, NormalizationParams};
use privgsd::{dp, evalkit, gsd, mechanisms, queries, sigmoid};

create_exception!(pygsd, PrivGsdError, PyException, "Base error raised by pygsd.");
create_exception!(pygsd, BudgetExceededError, PrivGsdError, "A privacy spend would exceed the budget.");

fn to_py(e: privgsd::Error) -> PyErr {
    match e {
        privgsd::Error::Parameter(_) | privgsd::Error::Parse { .. } | privgsd::Error::Schema(_) => {
            PyValueError::new_err(e.to_string())
        }
        privgsd::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        privgsd::Error::BudgetExceeded { .. } => BudgetExceededError::new_err(e.to_string()),
        other => PrivGsdError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for privgsd::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Attribute names, kinds and domains.
#[pyclass(frozen, skip_from_py_object, module = "pygsd")]
#[derive(Clone)]
struct Schema {
    inner: Arc<ds::DomainSchema>,
}

#[pymethods]
impl Schema {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(ds::DomainSchema::from_json(text).py_err()?),
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(ds::DomainSchema::load(path).py_err()?),
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.attributes().iter().map(|a| a.name.clone()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Schema({})", self.names().join(", "))
    }
}

/// A dataset; numeric columns are held on the [0,1] scale.
#[pyclass(frozen, skip_from_py_object, module = "pygsd")]
#[derive(Clone)]
struct Dataset {
    inner: ds::Dataset,
    /// Ranges used when loading, reapplied when saving.
    params: Option<NormalizationParams>,
}

#[pymethods]
impl Dataset {
    /// Read a headed CSV. With `normalize`, numeric columns are scaled to
    /// [0,1] using the schema range or the observed one.
    #[staticmethod]
    #[pyo3(signature = (path, schema, normalize = true))]
    fn load_csv(path: &str, schema: &Schema, normalize: bool) -> PyResult<Self> {
        let mode = if normalize {
            ds::Normalization::Observed
        } else {
            ds::Normalization::Off
        };
        let (inner, params) = ds::load_csv(path, schema.inner.clone(), mode).py_err()?;
        Ok(Self {
            inner,
            params: normalize.then_some(params),
        })
    }

    /// Rows of category indices (int) and [0,1] values (float).
    #[staticmethod]
    fn from_rows(schema: &Schema, rows: Vec<Vec<Bound<'_, PyAny>>>) -> PyResult<Self> {
        let s = &schema.inner;
        let mut values = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != s.len() {
                return Err(PyValueError::new_err(format!(
                    "row {i} has {} values, schema has {} attributes",
                    row.len(),
                    s.len()
                )));
            }
            let mut out = Vec::with_capacity(row.len());
            for (j, cell) in row.iter().enumerate() {
                out.push(if s.attribute(j).is_categorical() {
                    ds::Value::Cat(cell.extract()?)
                } else {
                    ds::Value::Num(cell.extract()?)
                });
            }
            values.push(out);
        }
        Ok(Self {
            inner: ds::Dataset::from_rows(s.clone(), &values).py_err()?,
            params: None,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (schema, n_rows, seed = 0))]
    fn random(schema: &Schema, n_rows: usize, seed: u64) -> Self {
        let mut rng = privgsd::rng::substream(seed, &[]);
        Self {
            inner: ds::Dataset::random(schema.inner.clone(), n_rows, &mut rng),
            params: None,
        }
    }

    /// Write a CSV, mapping numeric columns back to their original scale when
    /// the dataset (or `like`) was loaded with normalization.
    #[pyo3(signature = (path, like = None))]
    fn save_csv(&self, path: &str, like: Option<&Dataset>) -> PyResult<()> {
        let params = like.and_then(|d| d.params.as_ref()).or(self.params.as_ref());
        ds::save_csv(&self.inner, path, params).py_err()
    }

    fn rows(&self, py: Python<'_>) -> PyResult<Vec<Vec<Py<PyAny>>>> {
        self.inner
            .rows()
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|v| match v {
                        ds::Value::Cat(c) => Ok(c.into_pyobject(py)?.into_any().unbind()),
                        ds::Value::Num(x) => Ok(x.into_pyobject(py)?.into_any().unbind()),
                    })
                    .collect()
            })
            .collect()
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn schema(&self) -> Schema {
        Schema {
            inner: self.inner.schema().clone(),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }

    fn __eq__(&self, other: &Dataset) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n_rows={}, n_cols={})", self.inner.n_rows(), self.inner.n_cols())
    }
}

/// A named list of queries with its L2 sensitivity.
#[pyclass(frozen, skip_from_py_object, module = "pygsd")]
#[derive(Clone)]
struct Workload {
    inner: queries::Workload,
}

#[pymethods]
impl Workload {
    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn l2_sensitivity(&self) -> f64 {
        self.inner.l2_sensitivity
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Workload({:?}, {} queries)", self.inner.name, self.inner.len())
    }
}

fn wrap_all(ws: Vec<queries::Workload>) -> Vec<Workload> {
    ws.into_iter().map(|inner| Workload { inner }).collect()
}

fn unwrap_all(ws: &[PyRef<'_, Workload>]) -> Vec<queries::Workload> {
    ws.iter().map(|w| w.inner.clone()).collect()
}

#[pyfunction]
fn categorical_marginals(schema: &Schema, k: usize) -> PyResult<Vec<Workload>> {
    Ok(wrap_all(queries::gen_categorical_marginal_workloads(&schema.inner, k).py_err()?))
}

#[pyfunction]
#[pyo3(signature = (schema, k, levels = 5))]
fn binary_tree(schema: &Schema, k: usize, levels: u32) -> PyResult<Vec<Workload>> {
    Ok(wrap_all(queries::gen_binary_tree_workloads(&schema.inner, k, levels).py_err()?))
}

#[pyfunction]
#[pyo3(signature = (schema, m, seed = 0))]
fn random_prefixes(schema: &Schema, m: usize, seed: u64) -> PyResult<Workload> {
    let mut rng = privgsd::rng::substream(seed, &[]);
    Ok(Workload {
        inner: queries::gen_random_prefixes(&schema.inner, m, &mut rng).py_err()?,
    })
}

#[pyfunction]
#[pyo3(signature = (schema, m, seed = 0))]
fn random_halfspaces(schema: &Schema, m: usize, seed: u64) -> PyResult<Workload> {
    let mut rng = privgsd::rng::substream(seed, &[]);
    Ok(Workload {
        inner: queries::gen_random_halfspaces(&schema.inner, m, &mut rng).py_err()?,
    })
}

#[pyfunction]
fn eval_workloads(py: Python<'_>, workloads: Vec<PyRef<'_, Workload>>, data: &Dataset) -> PyResult<Vec<f64>> {
    let ws = unwrap_all(&workloads);
    py.detach(|| queries::eval_workloads(&ws, &data.inner)).py_err()
}

#[pyfunction]
fn max_error(py: Python<'_>, workloads: Vec<PyRef<'_, Workload>>, original: &Dataset, synthetic: &Dataset) -> PyResult<f64> {
    let ws = unwrap_all(&workloads);
    py.detach(|| evalkit::max_error(&ws, &original.inner, &synthetic.inner)).py_err()
}

#[pyfunction]
fn avg_error(py: Python<'_>, workloads: Vec<PyRef<'_, Workload>>, original: &Dataset, synthetic: &Dataset) -> PyResult<f64> {
    let ws = unwrap_all(&workloads);
    py.detach(|| evalkit::avg_error(&ws, &original.inner, &synthetic.inner)).py_err()
}

/// Optimizer settings.
#[pyclass(skip_from_py_object, module = "pygsd", get_all, set_all)]
#[derive(Clone)]
struct GsdConfig {
    synthetic_rows: usize,
    max_generations: usize,
    p_mut: usize,
    p_cross: usize,
    elite_size: usize,
    mutation_rate: usize,
    crossover_rate: usize,
    early_stop_threshold: f64,
    early_stop_window: Option<usize>,
    seed: u64,
}

#[pymethods]
impl GsdConfig {
    #[new]
    #[pyo3(signature = (
        synthetic_rows = 1000,
        max_generations = 100_000,
        p_mut = 100,
        p_cross = 100,
        elite_size = 2,
        mutation_rate = 1,
        crossover_rate = 1,
        early_stop_threshold = 1e-4,
        early_stop_window = None,
        seed = 0,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        synthetic_rows: usize,
        max_generations: usize,
        p_mut: usize,
        p_cross: usize,
        elite_size: usize,
        mutation_rate: usize,
        crossover_rate: usize,
        early_stop_threshold: f64,
        early_stop_window: Option<usize>,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = Self {
            synthetic_rows,
            max_generations,
            p_mut,
            p_cross,
            elite_size,
            mutation_rate,
            crossover_rate,
            early_stop_threshold,
            early_stop_window,
            seed,
        };
        cfg.to_core().validate().py_err()?;
        Ok(cfg)
    }

    fn __repr__(&self) -> String {
        format!(
            "GsdConfig(synthetic_rows={}, max_generations={}, p_mut={}, p_cross={}, elite_size={}, seed={})",
            self.synthetic_rows, self.max_generations, self.p_mut, self.p_cross, self.elite_size, self.seed
        )
    }
}

impl GsdConfig {
    fn to_core(&self) -> gsd::GsdConfig {
        gsd::GsdConfig {
            synthetic_rows: self.synthetic_rows,
            max_generations: self.max_generations,
            p_mut: self.p_mut,
            p_cross: self.p_cross,
            elite_size: self.elite_size,
            mutation_rate: self.mutation_rate,
            crossover_rate: self.crossover_rate,
            early_stop_threshold: self.early_stop_threshold,
            early_stop_window: self.early_stop_window,
            seed: self.seed,
            ..Default::default()
        }
    }
}

fn config_or_default(config: Option<&GsdConfig>) -> gsd::GsdConfig {
    config.map(GsdConfig::to_core).unwrap_or_default()
}

/// Project target answers onto a synthetic dataset. Returns
/// `(dataset, loss, generations)`.
#[pyfunction]
#[pyo3(signature = (schema, workloads, targets, config = None))]
fn run_gsd(
    py: Python<'_>,
    schema: &Schema,
    workloads: Vec<PyRef<'_, Workload>>,
    targets: Vec<f64>,
    config: Option<&GsdConfig>,
) -> PyResult<(Dataset, f64, usize)> {
    let ws = unwrap_all(&workloads);
    let cfg = config_or_default(config);
    let s = schema.inner.clone();
    let out = py.detach(|| gsd::run(&cfg, s, &ws, &targets)).py_err()?;
    Ok((
        Dataset {
            inner: out.dataset,
            params: None,
        },
        out.loss,
        out.generations,
    ))
}

/// Output of a private synthesis run.
#[pyclass(frozen, module = "pygsd", get_all)]
struct Synthesis {
    synthetic: Py<Dataset>,
    rho_spent: f64,
    epsilon: f64,
    delta: f64,
    /// (label, rho) per privacy spend.
    ledger: Vec<(String, f64)>,
}

fn synthesis(py: Python<'_>, out: mechanisms::MechanismOutput, params: Option<NormalizationParams>) -> PyResult<Synthesis> {
    let report = out.ledger.report();
    Ok(Synthesis {
        synthetic: Py::new(
            py,
            Dataset {
                inner: out.synthetic,
                params,
            },
        )?,
        rho_spent: report.spent_rho,
        epsilon: report.epsilon,
        delta: report.delta,
        ledger: report.entries.into_iter().map(|e| (e.label, e.rho)).collect(),
    })
}

fn options(delta: f64) -> mechanisms::MechanismOptions {
    mechanisms::MechanismOptions {
        delta,
        ..Default::default()
    }
}

/// Measure every workload once under ρ-zCDP and project.
#[pyfunction]
#[pyo3(signature = (data, workloads, rho, config = None, delta = 1e-5))]
fn one_shot(
    py: Python<'_>,
    data: &Dataset,
    workloads: Vec<PyRef<'_, Workload>>,
    rho: f64,
    config: Option<&GsdConfig>,
    delta: f64,
) -> PyResult<Synthesis> {
    let ws = unwrap_all(&workloads);
    let cfg = config_or_default(config);
    let out = py
        .detach(|| mechanisms::one_shot(&data.inner, &ws, rho, &cfg, &options(delta)))
        .py_err()?;
    synthesis(py, out, data.params.clone())
}

/// Adaptive select-measure-project over `epochs` × `samples` rounds.
#[pyfunction]
#[pyo3(signature = (data, workloads, rho, epochs, samples = 1, config = None, delta = 1e-5))]
#[allow(clippy::too_many_arguments)]
fn adaptive(
    py: Python<'_>,
    data: &Dataset,
    workloads: Vec<PyRef<'_, Workload>>,
    rho: f64,
    epochs: usize,
    samples: usize,
    config: Option<&GsdConfig>,
    delta: f64,
) -> PyResult<Synthesis> {
    let ws = unwrap_all(&workloads);
    let cfg = config_or_default(config);
    let out = py
        .detach(|| mechanisms::adaptive(&data.inner, &ws, rho, epochs, samples, &cfg, &options(delta)))
        .py_err()?;
    synthesis(py, out, data.params.clone())
}

#[pyfunction]
fn zcdp_to_dp(rho: f64, delta: f64) -> PyResult<f64> {
    dp::zcdp_to_dp(rho, delta).py_err()
}

#[pyfunction]
fn dp_to_zcdp(epsilon: f64, delta: f64) -> PyResult<f64> {
    dp::dp_to_zcdp(epsilon, delta).py_err()
}

/// Annealed descent versus the genetic optimizer on the one-dimensional
/// prefix instance. Returns a dict of the headline numbers.
#[pyfunction]
#[pyo3(signature = (n = 100, learning_rate = 0.01, temperatures = None, seed = 0))]
fn sigmoid_demo(
    py: Python<'_>,
    n: usize,
    learning_rate: f64,
    temperatures: Option<Vec<f64>>,
    seed: u64,
) -> PyResult<Py<pyo3::types::PyDict>> {
    let defaults = sigmoid::AnnealParams::default();
    let params = sigmoid::AnnealParams {
        temperatures: temperatures.unwrap_or(defaults.temperatures.clone()),
        learning_rate,
        ..defaults
    };
    let cfg = gsd::GsdConfig {
        seed,
        ..Default::default()
    };
    let report = py.detach(|| sigmoid::run_demo(n, &params, &cfg)).py_err()?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("target", report.target)?;
    d.set_item("annealed_surrogate_loss", report.annealed_surrogate_loss)?;
    d.set_item("annealed_true_error", report.annealed_true_error)?;
    d.set_item("gsd_true_error", report.gsd_true_error)?;
    d.set_item("descent_steps", report.trace.len())?;
    Ok(d.unbind())
}

#[pymodule]
pub fn pygsd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PrivGsdError", m.py().get_type::<PrivGsdError>())?;
    m.add("BudgetExceededError", m.py().get_type::<BudgetExceededError>())?;
    m.add_class::<Schema>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Workload>()?;
    m.add_class::<GsdConfig>()?;
    m.add_class::<Synthesis>()?;
    m.add_function(wrap_pyfunction!(categorical_marginals, m)?)?;
    m.add_function(wrap_pyfunction!(binary_tree, m)?)?;
    m.add_function(wrap_pyfunction!(random_prefixes, m)?)?;
    m.add_function(wrap_pyfunction!(random_halfspaces, m)?)?;
    m.add_function(wrap_pyfunction!(eval_workloads, m)?)?;
    m.add_function(wrap_pyfunction!(max_error, m)?)?;
    m.add_function(wrap_pyfunction!(avg_error, m)?)?;
    m.add_function(wrap_pyfunction!(run_gsd, m)?)?;
    m.add_function(wrap_pyfunction!(one_shot, m)?)?;
    m.add_function(wrap_pyfunction!(adaptive, m)?)?;
    m.add_function(wrap_pyfunction!(zcdp_to_dp, m)?)?;
    m.add_function(wrap_pyfunction!(dp_to_zcdp, m)?)?;
    m.add_function(wrap_pyfunction!(sigmoid_demo, m)?)?;
    Ok(())
}
