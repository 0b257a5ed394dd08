use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use onesim::agent::AgentId;
use onesim::analysis;
use onesim::behavior_graph::{build_graph, parse_scenario, validate, Relationship};
use onesim::distributed::{self, MsgType, WireFrame};
use onesim::experiment::{self, ExecutionMode, RunOptions};
use onesim::kernel::{BackendKind, LocalExecutor, ScenarioRuntime, Simulation, SimulationResult, Topology};
use onesim::scenarios;
use onesim::vr2t::{self, DpoInputs};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn backend(name: &str) -> PyResult<BackendKind> {
    match name {
        "rule" => Ok(BackendKind::Rule),
        "stochastic" => Ok(BackendKind::Stochastic),
        "remote" => onesim::agent::RemoteConfig::from_env()
            .map(BackendKind::Remote)
            .ok_or_else(|| PyRuntimeError::new_err("remote backend requires ONESIM_ENDPOINT")),
        other => Err(PyValueError::new_err(format!("unknown backend `{other}`"))),
    }
}

/// Check a scenario document; returns `(valid, findings)`.
#[pyfunction]
fn validate_scenario(text: &str) -> PyResult<(bool, Vec<String>)> {
    let spec = parse_scenario(text).map_err(err)?;
    let report = validate(&build_graph(&spec));
    Ok((report.is_valid(), report.render().lines().map(str::to_string).collect()))
}

#[pyfunction]
fn bundled_scenarios() -> Vec<&'static str> {
    scenarios::SCENARIOS.iter().map(|(name, _)| *name).collect()
}

/// A parsed, validated scenario bound to a decision backend.
#[pyclass(frozen)]
struct Scenario {
    runtime: Arc<ScenarioRuntime>,
}

#[pymethods]
impl Scenario {
    #[new]
    #[pyo3(signature = (text, backend = "rule"))]
    fn new(text: &str, backend: &str) -> PyResult<Self> {
        let runtime = scenarios::load(text, self::backend(backend)?).map_err(err)?;
        Ok(Scenario { runtime })
    }

    #[staticmethod]
    #[pyo3(signature = (name, backend = "rule"))]
    fn bundled(name: &str, backend: &str) -> PyResult<Self> {
        let text = scenarios::bundled(name).ok_or_else(|| PyKeyError::new_err(name.to_string()))?;
        Self::new(text, backend)
    }

    #[getter]
    fn name(&self) -> String {
        self.runtime.spec.name.clone()
    }

    #[getter]
    fn actions(&self) -> Vec<String> {
        self.runtime.graph.nodes().iter().map(|n| n.action_name.clone()).collect()
    }

    #[getter]
    fn population(&self) -> u64 {
        self.runtime.spec.total_population()
    }

    /// Run one replicate; `workers > 0` runs on loopback workers.
    #[pyo3(signature = (seed = 0, rounds = None, workers = 0))]
    fn run(&self, py: Python<'_>, seed: u64, rounds: Option<u32>, workers: usize) -> PyResult<RunResult> {
        let runtime = self.runtime.clone();
        let result = py.detach(move || -> Result<SimulationResult, String> {
            let mut sim = Simulation::populate(runtime, experiment::population_seed(seed, 0), seed)
                .map_err(|e| e.to_string())?;
            if let Some(r) = rounds {
                sim.set_max_rounds(r);
            }
            if workers == 0 {
                sim.run(&mut LocalExecutor::default()).map_err(|e| e.to_string())
            } else {
                distributed::run_simulation_distributed(sim, &distributed::DistributedConfig::with_workers(workers))
                    .map_err(|e| e.to_string())
            }
        });
        result.map(|inner| RunResult { inner }).map_err(PyRuntimeError::new_err)
    }
}

#[pyclass(frozen)]
struct RunResult {
    inner: SimulationResult,
}

#[pymethods]
impl RunResult {
    #[getter]
    fn rounds(&self) -> usize {
        self.inner.rounds.len()
    }

    #[getter]
    fn stopped_by(&self) -> String {
        format!("{:?}", self.inner.stopped_by)
    }

    #[getter]
    fn events(&self) -> usize {
        self.inner.events.len()
    }

    fn metric_names(&self) -> Vec<String> {
        self.inner.initial.keys().cloned().collect()
    }

    /// Values of `name` from round 0 onwards.
    fn metric(&self, name: &str) -> PyResult<Vec<f64>> {
        if !self.inner.initial.contains_key(name) {
            return Err(PyKeyError::new_err(name.to_string()));
        }
        Ok(self.inner.metric(name))
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!("RunResult(scenario={:?}, rounds={}, stopped_by={:?})", self.inner.scenario, self.rounds(), self.inner.stopped_by)
    }
}

/// Run an experiment plan; writes the results tree when `out` is given.
/// Returns `(group, replicate, seed, rounds)` per completed run.
#[pyfunction]
#[pyo3(signature = (plan, scenario, out = None))]
fn run_experiment(
    py: Python<'_>,
    plan: &str,
    scenario: &Scenario,
    out: Option<PathBuf>,
) -> PyResult<Vec<(String, u32, u64, usize)>> {
    let plan = experiment::parse_plan(plan).map_err(err)?;
    let runtime = scenario.runtime.clone();
    let set = py
        .detach(|| {
            let options = RunOptions { mode: ExecutionMode::Local, ..RunOptions::default() };
            experiment::run_experiment(&plan, runtime, &options)
        })
        .map_err(err)?;
    if let Some(dir) = out {
        experiment::write_result_set(&dir, &set).map_err(err)?;
    }
    if let Some(f) = set.failures.first() {
        return Err(PyRuntimeError::new_err(format!("run {}/{} failed: {}", f.group, f.replicate, f.error)));
    }
    Ok(set.runs.iter().map(|r| (r.group.clone(), r.replicate, r.seed, r.result.rounds.len())).collect())
}

#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    analysis::spearman(&x, &y).map(|r| r.estimate).map_err(err)
}

#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    analysis::pearson(&x, &y).map(|r| r.estimate).map_err(err)
}

/// Welch's t statistic, degrees of freedom and two-sided p-value.
#[pyfunction]
fn welch_t(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, Option<f64>, Option<f64>)> {
    analysis::welch_t(&x, &y).map(|r| (r.estimate, r.df, r.p_value)).map_err(err)
}

/// `(slope, intercept, beta_standardized, r_squared)`.
#[pyfunction]
fn ols_simple(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64, f64, f64)> {
    analysis::ols_simple(&x, &y).map(|r| (r.slope, r.intercept, r.beta_standardized, r.r_squared)).map_err(err)
}

#[pyfunction]
fn sft_loss(sequences: Vec<Vec<f64>>) -> PyResult<f64> {
    vr2t::sft_loss(&sequences).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (policy_preferred, reference_preferred, policy_dispreferred, reference_dispreferred, beta = 0.1))]
fn dpo_loss(
    policy_preferred: f64,
    reference_preferred: f64,
    policy_dispreferred: f64,
    reference_dispreferred: f64,
    beta: f64,
) -> PyResult<f64> {
    vr2t::dpo_loss(&DpoInputs { policy_preferred, reference_preferred, policy_dispreferred, reference_dispreferred, beta })
        .map_err(err)
}

#[pyfunction]
fn encode_frame<'py>(py: Python<'py>, msg_type: u8, payload: &str) -> PyResult<Bound<'py, PyBytes>> {
    let msg_type = MsgType::from_byte(msg_type).ok_or_else(|| PyValueError::new_err(format!("unknown message type {msg_type:#04x}")))?;
    let bytes = distributed::encode_frame(&WireFrame { msg_type, payload: payload.to_string() });
    Ok(PyBytes::new(py, &bytes))
}

/// Decode one frame; returns `(msg_type, payload, consumed)`.
#[pyfunction]
fn decode_frame(bytes: &[u8]) -> PyResult<(u8, String, usize)> {
    let (frame, used) = distributed::decode_frame(bytes).map_err(err)?;
    Ok((frame.msg_type as u8, frame.payload, used))
}

/// Partition agents `0..n` over `workers` given weighted edges `(a, b, w)`.
/// Returns the worker of each agent and the weighted edge cut.
#[pyfunction]
#[pyo3(signature = (n, edges, workers, slack = distributed::DEFAULT_SLACK))]
fn partition(n: u64, edges: Vec<(u64, u64, f64)>, workers: usize, slack: f64) -> PyResult<(Vec<usize>, f64)> {
    let rels: Vec<Relationship> = edges.into_iter().map(|(a, b, weight)| Relationship { a, b, weight }).collect();
    let topology = Topology::from_relationships((0..n).map(AgentId), &rels);
    let plan = distributed::partition(&topology, workers, slack).map_err(err)?;
    let assignment: BTreeMap<AgentId, usize> = plan.assignment.clone();
    Ok((assignment.values().copied().collect(), plan.edge_cut(&topology)))
}

#[pymodule]
fn pyonesim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(validate_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(bundled_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(welch_t, m)?)?;
    m.add_function(wrap_pyfunction!(ols_simple, m)?)?;
    m.add_function(wrap_pyfunction!(sft_loss, m)?)?;
    m.add_function(wrap_pyfunction!(dpo_loss, m)?)?;
    m.add_function(wrap_pyfunction!(encode_frame, m)?)?;
    m.add_function(wrap_pyfunction!(decode_frame, m)?)?;
    m.add_function(wrap_pyfunction!(partition, m)?)?;
    Ok(())
}
