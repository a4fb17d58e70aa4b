//! Python bindings. Structured results come back as plain dicts and lists
//! (serialized through JSON), grammars and datasets as opaque handles.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use rhm::dataset::{generate_dataset, Dataset as CoreDataset};
use rhm::error::RhmError;
use rhm::grammar::{sample_grammar, GrammarInstance};
use rhm::inference::{bp_last_token_posterior, ngram_ladder, ngram_loss, ObservationWindow};
use rhm::learner::{geometric_grid, sample_complexity_sweep, HierarchicalKeyer, HierarchicalPredictor, Mode, SweepConfig};
use rhm::params::RhmParams;
use rhm::statistics::exact_tuple_token_correlation;
use rhm::theory::{self, LossCurve, WindowPolicy};

fn err(e: RhmError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    mode.parse().map_err(|_| PyValueError::new_err(format!("unknown mode {mode:?}")))
}

#[pyclass(module = "rhm_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Params {
    inner: RhmParams,
}

#[pymethods]
impl Params {
    #[new]
    #[pyo3(signature = (v, m, s, depth, seed))]
    fn new(v: u32, m: u32, s: u32, depth: u32, seed: u64) -> PyResult<Self> {
        Ok(Params {
            inner: RhmParams::new(v, m, s, depth, seed).map_err(err)?,
        })
    }

    #[getter]
    fn v(&self) -> u32 {
        self.inner.v
    }
    #[getter]
    fn m(&self) -> u32 {
        self.inner.m
    }
    #[getter]
    fn s(&self) -> u32 {
        self.inner.s
    }
    #[getter]
    fn depth(&self) -> u32 {
        self.inner.depth
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
    #[getter]
    fn f(&self) -> f64 {
        self.inner.f()
    }
    #[getter]
    fn seq_len(&self) -> usize {
        self.inner.seq_len()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!("Params(v={}, m={}, s={}, depth={}, seed={})", p.v, p.m, p.s, p.depth, p.seed)
    }
}

#[pyclass(module = "rhm_py", frozen)]
struct Grammar {
    inner: GrammarInstance,
}

#[pymethods]
impl Grammar {
    #[staticmethod]
    fn sample(params: &Params) -> PyResult<Self> {
        Ok(Grammar {
            inner: sample_grammar(&params.inner).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Grammar {
            inner: GrammarInstance::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn params(&self) -> Params {
        Params {
            inner: *self.inner.params(),
        }
    }

    /// `n` sequences drawn with `seed`.
    fn generate(&self, n: usize, seed: u64) -> Dataset {
        Dataset {
            inner: generate_dataset(&self.inner, n, false, seed),
        }
    }

    /// `P(X_-1 | context)`, where `context` is the tokens right before the last one.
    fn posterior(&self, context: Vec<u32>) -> PyResult<Vec<f64>> {
        Ok(bp_last_token_posterior(&self.inner, &ObservationWindow::new(context))
            .map_err(err)?
            .into_vec())
    }

    /// Exact tuple–token correlation rows for context tuple `t`, keyed by tuple code.
    fn tuple_token_correlation<'py>(&self, py: Python<'py>, t: usize) -> PyResult<Bound<'py, PyAny>> {
        let c = exact_tuple_token_correlation(&self.inner, t).map_err(err)?;
        to_py(py, &c.rows)
    }
}

#[pyclass(module = "rhm_py", frozen)]
struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn from_binary(data: &[u8]) -> PyResult<Self> {
        Ok(Dataset {
            inner: CoreDataset::read_binary(data).map_err(err)?,
        })
    }

    fn to_binary<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_binary())
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn seq_len(&self) -> usize {
        self.inner.seq_len()
    }

    #[getter]
    fn params(&self) -> Params {
        Params {
            inner: self.inner.params,
        }
    }

    fn sequences(&self) -> Vec<Vec<u32>> {
        self.inner.sequences().map(<[u32]>::to_vec).collect()
    }
}

/// Exact `s^level`-gram test loss: `(loss, stderr)`.
#[pyfunction]
fn oracle_loss(grammar: &Grammar, level: u32, test: &Dataset) -> PyResult<(f64, f64)> {
    let e = ngram_loss(&grammar.inner, level, &test.inner).map_err(err)?;
    Ok((e.loss, e.stderr))
}

/// Losses of every level `0..=L` on the same test set.
#[pyfunction]
fn oracle_ladder(grammar: &Grammar, test: &Dataset) -> PyResult<Vec<f64>> {
    Ok(ngram_ladder(&grammar.inner, &test.inner)
        .map_err(err)?
        .into_iter()
        .map(|e| e.loss)
        .collect())
}

#[pyfunction]
#[pyo3(signature = (params, level, mode = "positional"))]
fn sample_complexity(params: &Params, level: u32, mode: &str) -> PyResult<f64> {
    theory::sample_complexity(&params.inner, level, parse_mode(mode)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (params, mode = "positional"))]
fn scaling_exponent(params: &Params, mode: &str) -> PyResult<f64> {
    theory::scaling_exponent(&params.inner, parse_mode(mode)?).map_err(err)
}

/// Log-log fit of `y - floor` against `x` over all points, or over
/// `x_min <= x <= x_max` when both are given.
#[pyfunction]
#[pyo3(signature = (x, y, floor, x_min = None, x_max = None))]
fn fit_power_law<'py>(
    py: Python<'py>,
    x: Vec<f64>,
    y: Vec<f64>,
    floor: f64,
    x_min: Option<f64>,
    x_max: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let curve = LossCurve::new(x, y).map_err(err)?;
    let policy = match (x_min, x_max) {
        (Some(min), Some(max)) => WindowPolicy::XRange { min, max },
        (None, None) => WindowPolicy::All,
        _ => return Err(PyValueError::new_err("give both x_min and x_max, or neither")),
    };
    to_py(py, &theory::fit_power_law(&curve, floor, policy).map_err(err)?)
}

/// Sample-complexity sweep of the clustering learner over a geometric grid.
#[pyfunction]
#[pyo3(signature = (params, grid_min, grid_max, trials = 10, theta = 0.8, workers = 1))]
fn learner_sweep<'py>(
    py: Python<'py>,
    params: &Params,
    grid_min: usize,
    grid_max: usize,
    trials: usize,
    theta: f64,
    workers: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = SweepConfig::new(&params.inner, geometric_grid(grid_min, grid_max));
    cfg.trials = trials;
    cfg.theta = theta;
    cfg.workers = workers;
    let result = py
        .detach(|| sample_complexity_sweep(&params.inner, &cfg))
        .map_err(err)?;
    to_py(py, &result.estimates)
}

/// Held-out loss of the count-based predictor keyed by the true latents.
#[pyfunction]
#[pyo3(signature = (grammar, train, test, mode = "shared"))]
fn hierarchical_loss(grammar: &Grammar, train: &Dataset, test: &Dataset, mode: &str) -> PyResult<(f64, f64)> {
    let keyer = HierarchicalKeyer::from_grammar(&grammar.inner, parse_mode(mode)?).map_err(err)?;
    let pred = HierarchicalPredictor::fit(keyer, &train.inner).map_err(err)?;
    let l = pred.evaluate(&test.inner).map_err(err)?;
    Ok((l.loss, l.stderr))
}

#[pymodule]
fn rhm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Params>()?;
    m.add_class::<Grammar>()?;
    m.add_class::<Dataset>()?;
    m.add_function(wrap_pyfunction!(oracle_loss, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_ladder, m)?)?;
    m.add_function(wrap_pyfunction!(sample_complexity, m)?)?;
    m.add_function(wrap_pyfunction!(scaling_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(fit_power_law, m)?)?;
    m.add_function(wrap_pyfunction!(learner_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(hierarchical_loss, m)?)?;
    Ok(())
}
