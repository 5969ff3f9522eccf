//! Request and response types shared by the CLI and the HTTP API, so both
//! surfaces serialize identical JSON for identical requests.

use crate::conduct::{Analysis, Decision, Stage, TrialState, TrialStatus, TrialStore};
use crate::design::{Arm, Design, DesignGoal, Method};
use crate::error::{Result, RoseError};
use crate::oc_sim::{
    sensitivity_n_deviation, sensitivity_p_high, simulate, simulate_umet, DeviationPoint,
    DeviationType, PHighPoint, SimConfig, SimResult, UmetConfig, UmetSimResult,
};
use crate::rose_exact::{
    design_exact_global_min, design_exact_one_stage, design_exact_two_stage, exact_oc,
    exact_oc_pair, ExactOC, ExactSearchConfig, ScenarioOC,
};
use crate::rose_normal::{design_one_stage, design_two_stage};
use serde::{Deserialize, Serialize};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stages {
    One,
    Two,
}

fn default_method() -> Method {
    Method::NormalApprox
}

/// Inputs of a design calculation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRequest {
    #[serde(flatten)]
    pub goal: DesignGoal,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Defaults to two stages when `omega` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<Stages>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_cap: Option<u32>,
}

impl DesignRequest {
    pub fn new(goal: DesignGoal) -> Self {
        DesignRequest {
            goal,
            method: Method::NormalApprox,
            stages: None,
            lambda_step: None,
            lambda1_step: None,
            n_cap: None,
        }
    }

    /// Fills defaults so the echoed request states what was computed.
    pub fn resolved(&self) -> Result<DesignRequest> {
        let mut r = self.clone();
        let stages = r.stages.unwrap_or(if r.goal.omega.is_some() {
            Stages::Two
        } else {
            Stages::One
        });
        r.stages = Some(stages);
        if r.method == Method::ExactGlobalMin && stages != Stages::Two {
            return Err(RoseError::invalid(
                "method exact_global_min requires a two-stage design",
            ));
        }
        if stages == Stages::One {
            r.goal.omega = None;
        }
        if r.method != Method::NormalApprox {
            let d = ExactSearchConfig::default();
            r.lambda_step.get_or_insert(d.lambda_step);
            r.n_cap.get_or_insert(d.n_cap);
            if stages == Stages::Two {
                r.lambda1_step.get_or_insert(d.lambda1_step);
            }
        }
        Ok(r)
    }

    fn search_config(&self) -> ExactSearchConfig {
        let d = ExactSearchConfig::default();
        ExactSearchConfig {
            lambda_step: self.lambda_step.unwrap_or(d.lambda_step),
            lambda1_step: self.lambda1_step.unwrap_or(d.lambda1_step),
            n_cap: self.n_cap.unwrap_or(d.n_cap),
        }
    }

    pub fn compute(&self) -> Result<Design> {
        let r = self.resolved()?;
        let cfg = r.search_config();
        let two = r.stages == Some(Stages::Two);
        if two {
            r.goal.require_omega()?;
        }
        Ok(match (r.method, two) {
            (Method::NormalApprox, false) => Design::One(design_one_stage(&r.goal)?),
            (Method::NormalApprox, true) => Design::Two(design_two_stage(&r.goal)?),
            (Method::Exact, false) => Design::One(design_exact_one_stage(&r.goal, &cfg)?),
            (Method::Exact, true) => Design::Two(design_exact_two_stage(&r.goal, &cfg)?),
            (Method::ExactGlobalMin, _) => Design::Two(design_exact_global_min(&r.goal, &cfg)?),
        })
    }
}

/// Every response: the resolved request, the engine version and the result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<Q, R> {
    pub engine_version: String,
    pub request: Q,
    pub result: R,
}

impl<Q, R> Envelope<Q, R> {
    pub fn new(request: Q, result: R) -> Self {
        Envelope {
            engine_version: ENGINE_VERSION.to_string(),
            request,
            result,
        }
    }
}

/// Compact JSON used by both the CLI and the HTTP API.
pub fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("response types serialize")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub design: Design,
    /// Exact characteristics at both anchors, when the design allows it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_oc: Option<ExactOC>,
}

pub fn run_design(req: &DesignRequest) -> Result<Envelope<DesignRequest, DesignResult>> {
    let resolved = req.resolved()?;
    let design = resolved.compute()?;
    let exact_oc = exact_oc_pair(&design).ok();
    Ok(Envelope::new(resolved, DesignResult { design, exact_oc }))
}

/// A design given either directly or as a calculation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<Design>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_request: Option<DesignRequest>,
}

impl DesignSource {
    fn resolve(&self) -> Result<(DesignSource, Design)> {
        match (&self.design, &self.design_request) {
            (Some(d), None) => {
                d.validate()?;
                Ok((self.clone(), d.clone()))
            }
            (None, Some(r)) => {
                let r = r.resolved()?;
                let d = r.compute()?;
                Ok((
                    DesignSource {
                        design: None,
                        design_request: Some(r),
                    },
                    d,
                ))
            }
            _ => Err(RoseError::invalid(
                "give exactly one of 'design' or 'design_request'",
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub p_low: f64,
    pub p_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcRequest {
    #[serde(flatten)]
    pub source: DesignSource,
    /// Extra truths to evaluate besides the two anchors.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scenarios: Vec<Scenario>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcResult {
    pub design: Design,
    pub anchors: ExactOC,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scenarios: Vec<ScenarioOC>,
}

pub fn run_exact_oc(req: &OcRequest) -> Result<Envelope<OcRequest, OcResult>> {
    let (source, design) = req.source.resolve()?;
    let anchors = exact_oc_pair(&design)?;
    let scenarios = req
        .scenarios
        .iter()
        .map(|s| exact_oc(&design, s.p_low, s.p_high))
        .collect::<Result<_>>()?;
    let echo = OcRequest {
        source,
        scenarios: req.scenarios.clone(),
    };
    Ok(Envelope::new(
        echo,
        OcResult {
            design,
            anchors,
            scenarios,
        },
    ))
}

fn default_reps() -> u32 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRequest {
    #[serde(flatten)]
    pub source: DesignSource,
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub n_reps: u32,
    /// Both anchors around the design's `p_high` when the truth is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_p_low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_p_high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enrolled_n_low: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enrolled_n_high: Option<u32>,
    /// Also run the utility-based comparator at the final arm sizes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub umet: Option<UmetConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub label: String,
    pub true_p_low: f64,
    pub true_p_high: f64,
    pub result: SimResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub umet: Option<UmetSimResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResult {
    pub design: Design,
    pub scenarios: Vec<SimScenario>,
}

pub fn run_simulate(req: &SimulateRequest) -> Result<Envelope<SimulateRequest, SimulateResult>> {
    let (source, design) = req.source.resolve()?;
    let g = *design.goal();
    let truths = match (req.true_p_low, req.true_p_high) {
        (Some(l), Some(h)) => vec![("custom".to_string(), l, h)],
        (None, None) => vec![
            ("s_low".to_string(), g.p_high, g.p_high),
            ("s_high".to_string(), g.p_low_alt(), g.p_high),
        ],
        _ => {
            return Err(RoseError::invalid(
                "give both true_p_low and true_p_high, or neither",
            ))
        }
    };
    let mut scenarios = Vec::new();
    for (label, l, h) in truths {
        let cfg = SimConfig {
            enrolled_n_low: req.enrolled_n_low,
            enrolled_n_high: req.enrolled_n_high,
            ..SimConfig::new(req.seed, l, h).with_reps(req.n_reps)
        };
        let result = simulate(&design, &cfg)?;
        let umet = match &req.umet {
            Some(u) => Some(simulate_umet(&design, &cfg, u)?),
            None => None,
        };
        scenarios.push(SimScenario {
            label,
            true_p_low: l,
            true_p_high: h,
            result,
            umet,
        });
    }
    let echo = SimulateRequest {
        source,
        ..req.clone()
    };
    Ok(Envelope::new(echo, SimulateResult { design, scenarios }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "analysis", rename_all = "snake_case")]
pub enum SensitivityKind {
    PHigh {
        true_p_high_grid: Vec<f64>,
    },
    NDeviation {
        deviation_type: DeviationType,
        offsets: Vec<i64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRequest {
    #[serde(flatten)]
    pub source: DesignSource,
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub n_reps: u32,
    #[serde(flatten)]
    pub kind: SensitivityKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SensitivityPoints {
    PHigh(Vec<PHighPoint>),
    NDeviation(Vec<DeviationPoint>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub design: Design,
    pub points: SensitivityPoints,
}

pub fn run_sensitivity(
    req: &SensitivityRequest,
) -> Result<Envelope<SensitivityRequest, SensitivityResult>> {
    let (source, design) = req.source.resolve()?;
    let points = match &req.kind {
        SensitivityKind::PHigh { true_p_high_grid } => SensitivityPoints::PHigh(
            sensitivity_p_high(&design, true_p_high_grid, req.n_reps, req.seed)?,
        ),
        SensitivityKind::NDeviation {
            deviation_type,
            offsets,
        } => SensitivityPoints::NDeviation(sensitivity_n_deviation(
            &design,
            *deviation_type,
            offsets,
            req.n_reps,
            req.seed,
        )?),
    };
    let echo = SensitivityRequest {
        source,
        ..req.clone()
    };
    Ok(Envelope::new(echo, SensitivityResult { design, points }))
}

// Conduct

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateTrialRequest {
    /// Generated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial_id: Option<String>,
    #[serde(flatten)]
    pub source: DesignSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub stage: Stage,
    pub arm: Arm,
    pub enrolled: u32,
    pub responses: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_version: Option<u64>,
    pub records: Vec<RecordEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_version: Option<u64>,
    /// Interim for a two-stage trial still in stage 1, final otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<Analysis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionResult {
    pub decision: Decision,
    pub trial: TrialState,
}

pub fn create_trial(
    store: &TrialStore,
    req: &CreateTrialRequest,
) -> Result<Envelope<CreateTrialRequest, TrialState>> {
    let (source, design) = req.source.resolve()?;
    let id = req
        .trial_id
        .clone()
        .unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string());
    let state = store.create(&id, design)?;
    Ok(Envelope::new(
        CreateTrialRequest {
            trial_id: Some(id),
            source,
        },
        state,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialQuery {
    pub trial_id: String,
}

pub fn show_trial(store: &TrialStore, id: &str) -> Result<Envelope<TrialQuery, TrialState>> {
    let s = store.load(id)?;
    Ok(Envelope::new(
        TrialQuery {
            trial_id: id.to_string(),
        },
        s,
    ))
}

pub fn record(
    store: &TrialStore,
    id: &str,
    req: &RecordRequest,
) -> Result<Envelope<RecordRequest, TrialState>> {
    if req.records.is_empty() {
        return Err(RoseError::invalid("records must not be empty"));
    }
    let (state, ()) = store.update(id, req.expected_version, |s| {
        let mut cur = s.clone();
        for r in &req.records {
            cur = cur.record_responses(r.stage, r.arm, r.enrolled, r.responses)?;
        }
        Ok((cur, ()))
    })?;
    Ok(Envelope::new(req.clone(), state))
}

fn default_analysis(s: &TrialState) -> Analysis {
    match (&s.design, s.status) {
        (Design::Two(_), TrialStatus::Enrolling) => Analysis::Interim,
        _ => Analysis::Final,
    }
}

pub fn decide(
    store: &TrialStore,
    id: &str,
    req: &DecisionRequest,
) -> Result<Envelope<DecisionRequest, DecisionResult>> {
    let mut echo = req.clone();
    let (trial, decision) = store.update(id, req.expected_version, |s| {
        let a = req.analysis.unwrap_or_else(|| default_analysis(s));
        echo.analysis = Some(a);
        s.apply_analysis(a)
    })?;
    Ok(Envelope::new(echo, DecisionResult { decision, trial }))
}

// Tabular output

/// Column order of CSV and table output.
pub const CSV_COLUMNS: [&str; 19] = [
    "p_high",
    "delta",
    "alpha_low",
    "alpha_high",
    "omega",
    "ratio",
    "method",
    "lambda1",
    "n1_low",
    "n1_high",
    "lambda",
    "n_low",
    "n_high",
    "pcs_low",
    "pcs_high",
    "pet_low",
    "pet_high",
    "en_low",
    "en_high",
];

/// Operating characteristics attached to one output row.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RowOc {
    pub pcs_low: Option<f64>,
    pub pcs_high: Option<f64>,
    pub pet_low: Option<f64>,
    pub pet_high: Option<f64>,
    pub en_low: Option<f64>,
    pub en_high: Option<f64>,
}

impl From<&ExactOC> for RowOc {
    fn from(o: &ExactOC) -> Self {
        RowOc {
            pcs_low: Some(o.pcs_low),
            pcs_high: Some(o.pcs_high),
            pet_low: Some(o.pet_low),
            pet_high: Some(o.pet_high),
            en_low: Some(o.en_low),
            en_high: Some(o.en_high),
        }
    }
}

impl RowOc {
    /// Achieved PCS of the design, plus PET and EN when exact values exist.
    pub fn for_design(d: &Design, exact: Option<&ExactOC>) -> Self {
        let (pl, ph) = match d {
            Design::One(o) => (o.achieved_pcs_low, o.achieved_pcs_high),
            Design::Two(t) => (t.achieved_pcs_low, t.achieved_pcs_high),
        };
        let mut r = exact.map(RowOc::from).unwrap_or_default();
        r.pcs_low = Some(pl);
        r.pcs_high = Some(ph);
        r
    }

    pub fn from_sim(s_low: &SimResult, s_high: &SimResult) -> Self {
        RowOc {
            pcs_low: Some(s_low.pcs),
            pcs_high: Some(s_high.pcs),
            pet_low: Some(s_low.pet),
            pet_high: Some(s_high.pet),
            en_low: Some(s_low.en),
            en_high: Some(s_high.en),
        }
    }
}

/// Fixed six decimals with trailing zeros dropped.
pub fn num(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn csv_fields(d: &Design, oc: &RowOc) -> Vec<String> {
    let g = d.goal();
    let (omega, l1, n1l, n1h) = match d {
        Design::One(_) => (String::new(), String::new(), String::new(), String::new()),
        Design::Two(t) => (
            num(t.omega),
            num(t.lambda1),
            t.n1_low.to_string(),
            t.n1_high.to_string(),
        ),
    };
    vec![
        num(g.p_high),
        num(g.delta),
        num(g.alpha_low),
        num(g.alpha_high),
        omega,
        num(g.ratio),
        d.method().as_str().to_string(),
        l1,
        n1l,
        n1h,
        num(d.lambda()),
        d.n_low().to_string(),
        d.n_high().to_string(),
        opt(oc.pcs_low),
        opt(oc.pcs_high),
        opt(oc.pet_low),
        opt(oc.pet_high),
        opt(oc.en_low),
        opt(oc.en_high),
    ]
}

pub fn to_csv(rows: &[(Design, RowOc)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| RoseError::Storage(e.to_string());
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for (d, oc) in rows {
        w.write_record(csv_fields(d, oc)).map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| RoseError::Storage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Aligned two-column listing of one design row.
pub fn to_table(d: &Design, oc: &RowOc) -> String {
    let fields = csv_fields(d, oc);
    let width = CSV_COLUMNS.iter().map(|c| c.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in CSV_COLUMNS.iter().zip(fields) {
        if !v.is_empty() {
            out.push_str(&format!("{k:<width$}  {v}\n"));
        }
    }
    out
}
