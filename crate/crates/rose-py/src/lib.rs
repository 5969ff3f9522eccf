//! Python bindings for the `rose` engine.
//!
//! Designs are wrapped in a `Design` class; results come back as plain
//! Python dicts built from the same JSON the CLI and HTTP service emit.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use rose::conduct::{Analysis, Stage, TrialStore as Store};
use rose::design::Arm;
use rose::fixtures::{reproduce as run_table, ReproduceOptions, TableId, DEFAULT_SEED};
use rose::service::{self, DesignRequest, DesignSource, Stages};
use rose::{DesignGoal, Method, RoseError};
use serde::Serialize;

create_exception!(rose_py, EngineError, PyException);
create_exception!(rose_py, InfeasibleError, EngineError);
create_exception!(rose_py, ConflictError, EngineError);
create_exception!(rose_py, NotFoundError, EngineError);

fn to_py(e: RoseError) -> PyErr {
    let msg = e.to_string();
    match e {
        RoseError::Validation(_) | RoseError::Domain(_) | RoseError::Unsupported(_) => {
            PyValueError::new_err(msg)
        }
        RoseError::Infeasible(_) => InfeasibleError::new_err(msg),
        RoseError::Conflict(_) => ConflictError::new_err(msg),
        RoseError::NotFound(_) => NotFoundError::new_err(msg),
        _ => EngineError::new_err(msg),
    }
}

/// Serializes through JSON and parses with Python's `json` module.
fn to_dict<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?
        .call_method1("loads", (service::to_json(v),))
}

fn parse_method(m: &str) -> PyResult<Method> {
    match m {
        "normal" | "normal_approx" => Ok(Method::NormalApprox),
        "exact" => Ok(Method::Exact),
        "exact_global_min" => Ok(Method::ExactGlobalMin),
        _ => Err(PyValueError::new_err(format!("unknown method '{m}'"))),
    }
}

#[pyclass(module = "rose_py", frozen)]
struct Design {
    inner: rose::Design,
}

#[pymethods]
impl Design {
    /// Rebuilds a design from its JSON form (as returned by `to_json`).
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: rose::Design =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(to_py)?;
        Ok(Design { inner })
    }

    fn to_json(&self) -> String {
        service::to_json(&self.inner)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.inner)
    }

    #[getter]
    fn stages(&self) -> u8 {
        match self.inner {
            rose::Design::One(_) => 1,
            rose::Design::Two(_) => 2,
        }
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method().as_str()
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda()
    }

    #[getter]
    fn lambda1(&self) -> Option<f64> {
        match &self.inner {
            rose::Design::Two(d) => Some(d.lambda1),
            rose::Design::One(_) => None,
        }
    }

    #[getter]
    fn n1_low(&self) -> Option<u32> {
        match &self.inner {
            rose::Design::Two(d) => Some(d.n1_low),
            rose::Design::One(_) => None,
        }
    }

    #[getter]
    fn n1_high(&self) -> Option<u32> {
        match &self.inner {
            rose::Design::Two(d) => Some(d.n1_high),
            rose::Design::One(_) => None,
        }
    }

    #[getter]
    fn n_low(&self) -> u32 {
        self.inner.n_low()
    }

    #[getter]
    fn n_high(&self) -> u32 {
        self.inner.n_high()
    }

    /// Exact operating characteristics at both anchors (equal allocation only).
    fn exact_oc<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let d = self.inner.clone();
        let oc = py
            .detach(move || rose::rose_exact::exact_oc_pair(&d))
            .map_err(to_py)?;
        to_dict(py, &oc)
    }

    /// Monte Carlo characteristics; anchors around the design's `p_high`
    /// unless both true rates are given.
    #[pyo3(signature = (seed, n_reps = 10_000, true_p_low = None, true_p_high = None))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        seed: u64,
        n_reps: u32,
        true_p_low: Option<f64>,
        true_p_high: Option<f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let req = service::SimulateRequest {
            source: DesignSource {
                design: Some(self.inner.clone()),
                design_request: None,
            },
            seed,
            n_reps,
            true_p_low,
            true_p_high,
            enrolled_n_low: None,
            enrolled_n_high: None,
            umet: None,
        };
        let env = py
            .detach(move || service::run_simulate(&req))
            .map_err(to_py)?;
        to_dict(py, &env.result.scenarios)
    }

    fn __repr__(&self) -> String {
        match &self.inner {
            rose::Design::One(d) => format!(
                "Design(one-stage, lambda={:.4}, n_low={}, n_high={})",
                d.lambda, d.n_low, d.n_high
            ),
            rose::Design::Two(d) => format!(
                "Design(two-stage, lambda1={:.4}, n1_low={}, lambda={:.4}, n_low={})",
                d.lambda1, d.n1_low, d.lambda, d.n_low
            ),
        }
    }
}

/// Computes the minimal design for the given targets.
#[pyfunction]
#[pyo3(signature = (p_high, delta, alpha_low, alpha_high, *, omega = None, ratio = 1.0, method = "normal_approx", lambda_step = None, lambda1_step = None, n_cap = None))]
#[allow(clippy::too_many_arguments)]
fn design(
    py: Python<'_>,
    p_high: f64,
    delta: f64,
    alpha_low: f64,
    alpha_high: f64,
    omega: Option<f64>,
    ratio: f64,
    method: &str,
    lambda_step: Option<f64>,
    lambda1_step: Option<f64>,
    n_cap: Option<u32>,
) -> PyResult<Design> {
    let mut goal = DesignGoal::new(p_high, delta, alpha_low, alpha_high).with_ratio(ratio);
    goal.omega = omega;
    let mut req = DesignRequest::new(goal);
    req.method = parse_method(method)?;
    req.stages = omega.map(|_| Stages::Two);
    req.lambda_step = lambda_step;
    req.lambda1_step = lambda1_step;
    req.n_cap = n_cap;
    let inner = py.detach(move || req.compute()).map_err(to_py)?;
    Ok(Design { inner })
}

/// Runs a service operation on a JSON request and returns the JSON envelope,
/// byte-identical to the CLI and HTTP output.
#[pyfunction]
fn call(py: Python<'_>, operation: &str, request: &str) -> PyResult<String> {
    fn parse<T: serde::de::DeserializeOwned>(s: &str) -> PyResult<T> {
        serde_json::from_str(s).map_err(|e| PyValueError::new_err(format!("request: {e}")))
    }
    let out = match operation {
        "design" => {
            let r: DesignRequest = parse(request)?;
            py.detach(move || service::run_design(&r).map(|e| service::to_json(&e)))
        }
        "oc_exact" => {
            let r: service::OcRequest = parse(request)?;
            py.detach(move || service::run_exact_oc(&r).map(|e| service::to_json(&e)))
        }
        "simulate" => {
            let r: service::SimulateRequest = parse(request)?;
            py.detach(move || service::run_simulate(&r).map(|e| service::to_json(&e)))
        }
        "sensitivity" => {
            let r: service::SensitivityRequest = parse(request)?;
            py.detach(move || service::run_sensitivity(&r).map(|e| service::to_json(&e)))
        }
        _ => {
            return Err(PyValueError::new_err(format!(
                "unknown operation '{operation}'"
            )))
        }
    };
    out.map_err(to_py)
}

/// Recomputes a published table; returns counts and the failing cells.
#[pyfunction]
#[pyo3(signature = (table, n_reps = 10_000, seed = DEFAULT_SEED))]
fn reproduce<'py>(
    py: Python<'py>,
    table: &str,
    n_reps: u32,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let t: TableId = table.parse().map_err(to_py)?;
    let opts = ReproduceOptions {
        n_reps,
        seed,
        ..Default::default()
    };
    let report = py.detach(move || run_table(t, &opts)).map_err(to_py)?;
    to_dict(py, &report)
}

/// Directory-backed trial store.
#[pyclass(module = "rose_py", frozen)]
struct TrialStore {
    store: Store,
}

fn parse_stage(s: &str) -> PyResult<Stage> {
    match s {
        "stage1" => Ok(Stage::Stage1),
        "stage2" => Ok(Stage::Stage2),
        _ => Err(PyValueError::new_err(format!(
            "stage must be 'stage1' or 'stage2', got '{s}'"
        ))),
    }
}

fn parse_arm(s: &str) -> PyResult<Arm> {
    match s {
        "low" => Ok(Arm::Low),
        "high" => Ok(Arm::High),
        _ => Err(PyValueError::new_err(format!(
            "arm must be 'low' or 'high', got '{s}'"
        ))),
    }
}

#[pymethods]
impl TrialStore {
    #[new]
    fn new(path: &str) -> PyResult<Self> {
        Ok(TrialStore {
            store: Store::open(path).map_err(to_py)?,
        })
    }

    #[pyo3(signature = (design, trial_id = None))]
    fn create<'py>(
        &self,
        py: Python<'py>,
        design: &Design,
        trial_id: Option<String>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let req = service::CreateTrialRequest {
            trial_id,
            source: DesignSource {
                design: Some(design.inner.clone()),
                design_request: None,
            },
        };
        to_dict(
            py,
            &service::create_trial(&self.store, &req)
                .map_err(to_py)?
                .result,
        )
    }

    #[pyo3(signature = (trial_id, stage, arm, enrolled, responses, expected_version = None))]
    #[allow(clippy::too_many_arguments)]
    fn record<'py>(
        &self,
        py: Python<'py>,
        trial_id: &str,
        stage: &str,
        arm: &str,
        enrolled: u32,
        responses: u32,
        expected_version: Option<u64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let entry = service::RecordEntry {
            stage: parse_stage(stage)?,
            arm: parse_arm(arm)?,
            enrolled,
            responses,
        };
        let req = service::RecordRequest {
            expected_version,
            records: vec![entry],
        };
        to_dict(
            py,
            &service::record(&self.store, trial_id, &req)
                .map_err(to_py)?
                .result,
        )
    }

    /// Runs the interim or final analysis; the default follows the trial status.
    #[pyo3(signature = (trial_id, analysis = None, expected_version = None))]
    fn decide<'py>(
        &self,
        py: Python<'py>,
        trial_id: &str,
        analysis: Option<&str>,
        expected_version: Option<u64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let analysis = match analysis {
            None => None,
            Some("interim") => Some(Analysis::Interim),
            Some("final") => Some(Analysis::Final),
            Some(a) => {
                return Err(PyValueError::new_err(format!(
                    "analysis must be 'interim' or 'final', got '{a}'"
                )))
            }
        };
        let req = service::DecisionRequest {
            expected_version,
            analysis,
        };
        to_dict(
            py,
            &service::decide(&self.store, trial_id, &req)
                .map_err(to_py)?
                .result,
        )
    }

    fn show<'py>(&self, py: Python<'py>, trial_id: &str) -> PyResult<Bound<'py, PyAny>> {
        to_dict(
            py,
            &service::show_trial(&self.store, trial_id)
                .map_err(to_py)?
                .result,
        )
    }
}

#[pymodule]
fn rose_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", service::ENGINE_VERSION)?;
    m.add("EngineError", m.py().get_type::<EngineError>())?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add("ConflictError", m.py().get_type::<ConflictError>())?;
    m.add("NotFoundError", m.py().get_type::<NotFoundError>())?;
    m.add_class::<Design>()?;
    m.add_class::<TrialStore>()?;
    m.add_function(wrap_pyfunction!(design, m)?)?;
    m.add_function(wrap_pyfunction!(call, m)?)?;
    m.add_function(wrap_pyfunction!(reproduce, m)?)?;
    Ok(())
}
