//! Python bindings: schemas, datasets, models, ground sets and full runs.
//!
//! Rows cross the boundary as lists holding a category label (or index) for
//! categorical features and a float for continuous ones. Structured results
//! (reports, rules) come back as plain dicts.

use std::path::PathBuf;
use std::time::Instant;

use pyo3::exceptions::{PyIOError, PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyList;

use recourse_core::apriori::apriori as mine;
use recourse_core::dataset::{discretize, fit_bins, load_dataset, BinningSpec, DiscretizedDataset, Value};
use recourse_core::evaluation::{v_reduce, CostTable, EvalContext, ReductionMode};
use recourse_core::fixture::write_credit;
use recourse_core::ground_set::{
    generate_original, generate_rl_reduced, generate_then, CandidateSets, GenerationLimits, GroundSet as CoreGroundSet,
};
use recourse_core::model::{affected_set, load_model, ModelOracle};
use recourse_core::pipeline::{self, Method, RunConfig as CoreRunConfig, RunError};
use recourse_core::schema::FeatureSchema;
use recourse_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn run_err(e: RunError) -> PyErr {
    match e {
        RunError::Config(inner) => py_err(inner),
        stage @ RunError::Stage { .. } => PyRuntimeError::new_err(stage.to_string()),
    }
}

fn json_to_py(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

#[pyclass(name = "FeatureSchema", module = "recourse", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySchema {
    inner: FeatureSchema,
}

#[pymethods]
impl PySchema {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PySchema {
            inner: FeatureSchema::load(path).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PySchema {
            inner: FeatureSchema::from_toml_str(text).map_err(py_err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    fn names(&self) -> Vec<String> {
        self.inner.features().iter().map(|f| f.name.clone()).collect()
    }

    fn actionable(&self) -> Vec<bool> {
        self.inner.features().iter().map(|f| f.actionable).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("FeatureSchema({})", self.names().join(", "))
    }
}

impl PySchema {
    fn row_from_py(&self, row: &Bound<'_, PyAny>) -> PyResult<Vec<Value>> {
        let items: Vec<Bound<'_, PyAny>> = row.try_iter()?.collect::<PyResult<_>>()?;
        if items.len() != self.inner.len() {
            return Err(PyValueError::new_err(format!(
                "row has {} values, schema has {} features",
                items.len(),
                self.inner.len()
            )));
        }
        items
            .iter()
            .zip(self.inner.features())
            .map(|(item, f)| {
                if f.is_continuous() {
                    Ok(Value::Number(item.extract::<f64>()?))
                } else if let Ok(label) = item.extract::<String>() {
                    f.category_index(&label)
                        .map(|c| Value::Category(c as u32))
                        .ok_or_else(|| PyValueError::new_err(format!("`{label}` is not a value of `{}`", f.name)))
                } else {
                    let c: usize = item.extract()?;
                    if c >= f.cardinality() {
                        return Err(PyValueError::new_err(format!("category {c} out of range for `{}`", f.name)));
                    }
                    Ok(Value::Category(c as u32))
                }
            })
            .collect()
    }

    fn row_to_py<'py>(&self, py: Python<'py>, row: &[Value]) -> PyResult<Bound<'py, PyList>> {
        let list = PyList::empty(py);
        for (v, f) in row.iter().zip(self.inner.features()) {
            match (*v, &f.kind) {
                (Value::Category(c), recourse_core::schema::FeatureKind::Categorical { values }) => {
                    list.append(&values[c as usize])?
                }
                (Value::Number(x), _) => list.append(x)?,
                (Value::Category(c), _) => list.append(c)?,
            }
        }
        Ok(list)
    }
}

/// A loaded CSV with its fitted bins.
#[pyclass(name = "Dataset", module = "recourse", frozen)]
struct PyDataset {
    schema: PySchema,
    binning: BinningSpec,
    data: DiscretizedDataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: PathBuf, schema: &PySchema) -> PyResult<Self> {
        let raw = load_dataset(path, &schema.inner).map_err(py_err)?;
        let binning = fit_bins(&raw, &schema.inner).map_err(py_err)?;
        let data = discretize(&raw, &binning, &schema.inner).map_err(py_err)?;
        Ok(PyDataset {
            schema: schema.clone(),
            binning,
            data,
        })
    }

    fn __len__(&self) -> usize {
        self.data.row_count()
    }

    fn row<'py>(&self, py: Python<'py>, i: usize) -> PyResult<Bound<'py, PyList>> {
        let row = self.data.raw().rows.get(i).ok_or_else(|| PyIndexError::new_err(i))?;
        self.schema.row_to_py(py, row)
    }

    /// Bin (or category) index of every cell of row `i`.
    fn bins(&self, i: usize) -> PyResult<Vec<u32>> {
        if i >= self.data.row_count() {
            return Err(PyIndexError::new_err(i));
        }
        Ok(self.data.row(i).to_vec())
    }

    /// Indices of rows the model does not predict favorably.
    fn affected(&self, model: &PyModel) -> Vec<usize> {
        affected_set(&model.inner, self.data.raw()).indices
    }

    /// Frequent itemsets as `name = value` conditions, shortest first.
    #[pyo3(signature = (threshold, max_length = 6))]
    fn apriori(&self, threshold: f64, max_length: usize) -> PyResult<Vec<String>> {
        let sets = mine(&self.data, threshold, max_length).map_err(py_err)?;
        Ok(sets.iter().map(|s| s.to_condition_string(&self.schema.inner)).collect())
    }
}

#[pyclass(name = "Model", module = "recourse", frozen)]
struct PyModel {
    schema: PySchema,
    inner: ModelOracle,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf, schema: &PySchema) -> PyResult<Self> {
        Ok(PyModel {
            schema: schema.clone(),
            inner: load_model(path, &schema.inner).map_err(py_err)?,
        })
    }

    fn predict_proba(&self, row: &Bound<'_, PyAny>) -> PyResult<Vec<f64>> {
        Ok(self.inner.predict_proba(&self.schema.row_from_py(row)?))
    }

    fn is_favorable(&self, row: &Bound<'_, PyAny>) -> PyResult<bool> {
        Ok(self.inner.is_favorable(&self.schema.row_from_py(row)?))
    }

    /// The model's input vector for a row.
    fn encode(&self, row: &Bound<'_, PyAny>) -> PyResult<Vec<f64>> {
        Ok(self.inner.encode(&self.schema.row_from_py(row)?))
    }
}

#[pyclass(name = "GroundSet", module = "recourse", frozen)]
struct PyGroundSet {
    schema: PySchema,
    inner: CoreGroundSet,
}

#[pymethods]
impl PyGroundSet {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn iteration_count(&self) -> u64 {
        self.inner.iteration_count
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.method.to_string()
    }

    /// `(outer, inner, then)` condition strings in generation order.
    fn triples(&self) -> Vec<(String, String, String)> {
        let s = &self.schema.inner;
        self.inner
            .triples
            .iter()
            .map(|t| (t.outer.to_condition_string(s), t.inner.to_condition_string(s), t.then.to_condition_string(s)))
            .collect()
    }

    fn to_json(&self) -> String {
        self.inner.to_json(&self.schema.inner, None)
    }

    /// Evaluates the first `budget` triples against `model` on `dataset`'s affected rows.
    #[pyo3(signature = (dataset, model, budget = None, acc_gain_only = false))]
    fn evaluate(
        &self,
        py: Python<'_>,
        dataset: &PyDataset,
        model: &PyModel,
        budget: Option<usize>,
        acc_gain_only: bool,
    ) -> PyResult<Py<PyAny>> {
        let affected = affected_set(&model.inner, dataset.data.raw());
        let ctx = EvalContext::new(
            &dataset.data,
            &affected,
            &dataset.binning,
            &model.inner,
            CostTable::uniform(&dataset.schema.inner),
        );
        let mode = if acc_gain_only {
            ReductionMode::AccGainOnly
        } else {
            ReductionMode::AddAll
        };
        let r = v_reduce(&self.inner, budget.unwrap_or(usize::MAX), mode, &ctx, Instant::now());
        let summary = serde_json::json!({
            "evaluated": r.evaluated,
            "kept": r.kept.len(),
            "acc": r.metrics.acc,
            "cost": r.metrics.cost,
            "corrected": r.metrics.corrected,
            "affected": r.metrics.affected,
        });
        json_to_py(py, &summary.to_string())
    }
}

/// Builds a ground set with `method` in {"original", "rl-reduction", "then-generation"}.
#[pyfunction]
#[pyo3(signature = (dataset, p, method = "original", q = None, eps2 = 7))]
fn generate(dataset: &PyDataset, p: f64, method: &str, q: Option<f64>, eps2: usize) -> PyResult<PyGroundSet> {
    let method: Method = method.parse().map_err(py_err)?;
    if eps2 < 2 {
        return Err(PyValueError::new_err("eps2 must be at least 2"));
    }
    let rl = mine(&dataset.data, p, eps2 - 1).map_err(py_err)?;
    let cands = CandidateSets::shared(rl);
    let limits = GenerationLimits::for_schema(&dataset.schema.inner, eps2);
    let inner = match method {
        Method::Original => generate_original(&cands, limits),
        Method::RlReduction => generate_rl_reduced(&cands, limits),
        Method::ThenGeneration => {
            let q = q.unwrap_or(1.0 / dataset.data.row_count() as f64);
            generate_then(&cands, &dataset.data, q, limits).map_err(py_err)?
        }
    };
    Ok(PyGroundSet {
        schema: dataset.schema.clone(),
        inner,
    })
}

#[pyclass(name = "RunConfig", module = "recourse", from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: CoreRunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (
        dataset, schema, model, out, *, p = 0.5, method = "original", q = None, r = None,
        r_prime = None, s = None, eps1 = 20, eps2 = 7, eps3 = 10, lam = 0.0, seed = 0,
        budget_seconds = 300.0, workers = None, preset = None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        dataset: PathBuf,
        schema: PathBuf,
        model: PathBuf,
        out: PathBuf,
        p: f64,
        method: &str,
        q: Option<f64>,
        r: Option<usize>,
        r_prime: Option<usize>,
        s: Option<usize>,
        eps1: usize,
        eps2: usize,
        eps3: usize,
        lam: f64,
        seed: u64,
        budget_seconds: f64,
        workers: Option<usize>,
        preset: Option<&str>,
    ) -> PyResult<Self> {
        let mut c = CoreRunConfig::new(dataset, schema, model, out);
        c.p = p;
        c.method = method.parse().map_err(py_err)?;
        c.q = q;
        if let Some(name) = preset {
            c.apply_preset(pipeline::preset(name).map_err(py_err)?);
        }
        c.r = r;
        c.r_prime = r_prime;
        c.s = s;
        c.eps1 = eps1;
        c.eps2 = eps2;
        c.eps3 = eps3;
        c.lambda = lam;
        c.seed = seed;
        c.budget_seconds = budget_seconds;
        c.workers = workers;
        c.validate().map_err(py_err)?;
        Ok(PyRunConfig { inner: c })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyRunConfig {
            inner: CoreRunConfig::from_toml_str(text).map_err(py_err)?,
        })
    }

    #[getter]
    fn out(&self) -> PathBuf {
        self.inner.out.clone()
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.method.to_string()
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p
    }
}

/// Runs the full pipeline and returns the report as a dict; artifacts go to `config.out`.
#[pyfunction]
fn run(py: Python<'_>, config: &PyRunConfig) -> PyResult<Py<PyAny>> {
    let cfg = config.inner.clone();
    let outcome = py.detach(|| pipeline::run(&cfg)).map_err(run_err)?;
    let text = serde_json::to_string(&outcome.report).expect("report serializes");
    json_to_py(py, &text)
}

/// Runs each config and returns the merged trace rows as dicts.
#[pyfunction]
fn compare(py: Python<'_>, configs: Vec<PyRunConfig>) -> PyResult<Py<PyAny>> {
    let cfgs: Vec<CoreRunConfig> = configs.into_iter().map(|c| c.inner).collect();
    let rows = py.detach(|| pipeline::compare(&cfgs)).map_err(run_err)?;
    let text = serde_json::to_string(&rows).expect("trace rows serialize");
    json_to_py(py, &text)
}

/// Writes the synthetic credit dataset, schema and model into `out`.
#[pyfunction]
#[pyo3(signature = (out, rows = 300, seed = 7))]
fn write_fixture(out: PathBuf, rows: usize, seed: u64) -> PyResult<()> {
    write_credit(out, rows, seed).map_err(py_err)
}

#[pymodule]
fn recourse(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchema>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyGroundSet>()?;
    m.add_class::<PyRunConfig>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(write_fixture, m)?)?;
    Ok(())
}
