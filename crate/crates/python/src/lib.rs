//! Python bindings: datasets, yearly projections, metrics, Louvain,
//! counterfactual modularity series, the panel regression and the pipeline.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rewire_core::counterfactual::SimulationMode;
use rewire_core::dataset::DatasetPaths;
use rewire_core::metrics::{cosine_novelty, specialization_scores, tenure};
use rewire_core::{self as core, Error};

fn to_py(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// An event RSVP dataset.
#[pyclass(name = "Dataset", module = "rewire_kit", frozen)]
struct PyDataset {
    inner: core::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Loads the five dataset CSVs from a directory.
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        let report = core::load_dataset(&DatasetPaths::in_dir(&dir)).map_err(to_py)?;
        Ok(Self { inner: report.dataset })
    }

    /// Generates a synthetic dataset. `config` is a JSON object with any
    /// generator fields; missing fields take their defaults.
    #[staticmethod]
    #[pyo3(signature = (config = "{}"))]
    fn synthetic(config: &str) -> PyResult<Self> {
        let mut v = serde_json::to_value(core::SynthConfig::default()).expect("default config serializes");
        let overrides: serde_json::Value =
            serde_json::from_str(config).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let obj = overrides
            .as_object()
            .ok_or_else(|| PyValueError::new_err("config must be a JSON object"))?;
        for (k, val) in obj {
            v[k] = val.clone();
        }
        let cfg: core::SynthConfig = serde_json::from_value(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self {
            inner: core::generate_synthetic(&cfg).map_err(to_py)?,
        })
    }

    fn write(&self, dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        core::dataset::write_dataset(&self.inner, &dir).map_err(to_py)
    }

    /// Violated invariants; empty when the dataset is well formed.
    fn validate(&self) -> Vec<String> {
        core::validate(&self.inner)
    }

    fn year_range(&self) -> Option<(i32, i32)> {
        self.inner.year_range()
    }

    fn active_members(&self, year: i32) -> Vec<String> {
        self.inner.active_members(year).into_iter().map(|m| m.0).collect()
    }

    #[getter]
    fn n_members(&self) -> usize {
        self.inner.members().len()
    }

    #[getter]
    fn n_events(&self) -> usize {
        self.inner.events().len()
    }

    #[getter]
    fn n_rsvps(&self) -> usize {
        self.inner.rsvps().len()
    }

    fn tenure(&self, member: &str, year: i32) -> PyResult<u32> {
        tenure(&member.into(), year, &self.inner).map_err(to_py)
    }

    fn turnover(&self, year: i32) -> PyResult<f64> {
        core::metrics::member_turnover(&self.inner, year).map_err(to_py)
    }

    /// The TF-IDF cosine projection of one calendar year.
    fn network(&self, year: i32) -> PyResult<PyGraph> {
        let (_, g) = core::build_year_graph(&self.inner, year).map_err(to_py)?;
        Ok(PyGraph { inner: g })
    }

    /// `(member, year, novelty)` for every member-year with an active
    /// previous calendar year.
    fn novelty_scores(&self) -> Vec<(String, i32, f64)> {
        core::metrics::novelty_scores(&self.inner, core::netbuild::YearDefinition::Calendar)
            .into_iter()
            .map(|r| (r.member.0, r.year, r.novelty))
            .collect()
    }

    /// `(member, specialization)` for one year's projection.
    fn specialization(&self, year: i32) -> PyResult<Vec<(String, f64)>> {
        let (_, g) = core::build_year_graph(&self.inner, year).map_err(to_py)?;
        Ok(specialization_scores(&self.inner, &g, year)
            .map_err(to_py)?
            .into_iter()
            .map(|r| (r.member.0, r.specialization))
            .collect())
    }

    /// First-window attendance propensity of a member for a group.
    fn propensity(&self, member: &str, group: &str) -> f64 {
        core::estimate_propensities(&self.inner).get(&member.into(), &group.into())
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(members={}, events={}, rsvps={}, years={:?})",
            self.inner.members().len(),
            self.inner.events().len(),
            self.inner.rsvps().len(),
            self.inner.year_range()
        )
    }
}

/// A weighted member-member graph.
#[pyclass(name = "MemberGraph", module = "rewire_kit", frozen)]
struct PyGraph {
    inner: core::MemberGraph,
}

#[pymethods]
impl PyGraph {
    #[new]
    fn new(nodes: Vec<String>, edges: Vec<(u32, u32, f64)>) -> PyResult<Self> {
        let nodes = nodes.into_iter().map(core::MemberId::new).collect();
        Ok(Self {
            inner: core::MemberGraph::new(nodes, edges).map_err(to_py)?,
        })
    }

    #[getter]
    fn nodes(&self) -> Vec<String> {
        self.inner.nodes().iter().map(|m| m.0.clone()).collect()
    }

    /// `(u, v, weight)` with `u < v` as node positions.
    #[getter]
    fn edges(&self) -> Vec<(u32, u32, f64)> {
        self.inner.edges().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.n_nodes()
    }

    fn __repr__(&self) -> String {
        format!(
            "MemberGraph(nodes={}, edges={})",
            self.inner.n_nodes(),
            self.inner.n_edges()
        )
    }
}

/// `1 - cos(current, previous)` for attendance counts keyed by group.
#[pyfunction]
fn novelty(current: BTreeMap<String, f64>, previous: BTreeMap<String, f64>) -> PyResult<f64> {
    let groups: Vec<&String> = current.keys().chain(previous.keys()).collect();
    let dense =
        |v: &BTreeMap<String, f64>| -> Vec<f64> { groups.iter().map(|g| v.get(*g).copied().unwrap_or(0.0)).collect() };
    cosine_novelty(&dense(&current), &dense(&previous)).ok_or_else(|| PyValueError::new_err("zero attendance vector"))
}

#[pyfunction]
#[pyo3(signature = (graph, labels, weighted = true))]
fn modularity(graph: &PyGraph, labels: Vec<usize>, weighted: bool) -> PyResult<f64> {
    core::modularity(&graph.inner, &core::Partition::new(&labels), weighted).map_err(to_py)
}

/// Returns `(labels, q)`.
#[pyfunction]
#[pyo3(signature = (graph, seed, weighted = true))]
fn louvain(graph: &PyGraph, seed: u64, weighted: bool) -> PyResult<(Vec<usize>, f64)> {
    let (p, rep) = core::louvain(&graph.inner, seed, weighted).map_err(to_py)?;
    Ok((p.labels().to_vec(), rep.q))
}

/// One dict per year with observed and expected modularity. `mode` is
/// "undiff" or "static".
#[pyfunction]
#[pyo3(signature = (dataset, mode, replicates, seed, weighted = true))]
fn modularity_series<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    mode: &str,
    replicates: usize,
    seed: u64,
    weighted: bool,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mode: SimulationMode = mode.parse().map_err(to_py)?;
    let s = core::modularity_series(&dataset.inner, mode, replicates, seed, weighted).map_err(to_py)?;
    s.points
        .iter()
        .map(|p| {
            let d = PyDict::new(py);
            d.set_item("year", p.year)?;
            d.set_item("observed_q", p.observed_q)?;
            d.set_item("expected_q_mean", p.expected_q_mean)?;
            d.set_item("expected_q_std", p.expected_q_std)?;
            d.set_item("gap", p.gap)?;
            Ok(d)
        })
        .collect()
}

/// Member-year panel rows as dicts.
#[pyfunction]
fn build_panel<'py>(py: Python<'py>, dataset: &PyDataset) -> PyResult<Vec<Bound<'py, PyDict>>> {
    core::build_panel(&dataset.inner)
        .map_err(to_py)?
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("member_id", r.member.0)?;
            d.set_item("year", r.year)?;
            d.set_item("specialization", r.specialization)?;
            d.set_item("novelty", r.novelty)?;
            d.set_item("log_events", r.log_events)?;
            d.set_item("log_connections", r.log_connections)?;
            Ok(d)
        })
        .collect()
}

/// Fits the fixed-effects regression on panel dicts as returned by
/// `build_panel`.
#[pyfunction]
fn fit_fe_panel<'py>(py: Python<'py>, rows: Vec<Bound<'py, PyDict>>) -> PyResult<Bound<'py, PyDict>> {
    let get = |d: &Bound<'py, PyDict>, k: &str| -> PyResult<Bound<'py, PyAny>> {
        d.get_item(k)?
            .ok_or_else(|| PyValueError::new_err(format!("panel row is missing `{k}`")))
    };
    let panel = rows
        .iter()
        .map(|d| {
            Ok(core::PanelRow {
                member: core::MemberId::new(get(d, "member_id")?.extract::<String>()?),
                year: get(d, "year")?.extract()?,
                specialization: get(d, "specialization")?.extract()?,
                novelty: get(d, "novelty")?.extract()?,
                log_events: get(d, "log_events")?.extract()?,
                log_connections: get(d, "log_connections")?.extract()?,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let r = core::fit_fe_panel(&panel).map_err(to_py)?;
    let out = PyDict::new(py);
    let coefs = PyDict::new(py);
    for c in &r.coefficients {
        let d = PyDict::new(py);
        d.set_item("coef", c.coef)?;
        d.set_item("robust_se", c.robust_se)?;
        d.set_item("p", c.p)?;
        d.set_item("stars", c.stars())?;
        d.set_item("standardized", c.standardized)?;
        coefs.set_item(&c.regressor, d)?;
    }
    out.set_item("coefficients", coefs)?;
    out.set_item("n_obs", r.n_obs)?;
    out.set_item("n_members", r.n_members)?;
    out.set_item("r_squared_within", r.r_squared_within)?;
    Ok(out)
}

/// Runs the full pipeline from a JSON config; returns the manifest as JSON.
#[pyfunction]
fn run_pipeline(config: &str) -> PyResult<String> {
    let cfg = core::PipelineConfig::from_json(config).map_err(to_py)?;
    let manifest = core::run_pipeline(&cfg).map_err(|e| {
        let msg = e.to_string();
        if e.source.is_validation() {
            PyValueError::new_err(msg)
        } else {
            PyRuntimeError::new_err(msg)
        }
    })?;
    Ok(serde_json::to_string(&manifest).expect("manifest serializes"))
}

#[pymodule]
fn rewire_kit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(novelty, m)?)?;
    m.add_function(wrap_pyfunction!(modularity, m)?)?;
    m.add_function(wrap_pyfunction!(louvain, m)?)?;
    m.add_function(wrap_pyfunction!(modularity_series, m)?)?;
    m.add_function(wrap_pyfunction!(build_panel, m)?)?;
    m.add_function(wrap_pyfunction!(fit_fe_panel, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
