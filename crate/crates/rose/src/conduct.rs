//! Trial conduct: accumulating per-arm counts, interim and final decisions,
//! and a directory-backed JSON store with optimistic versioning.

use crate::design::{Arm, Design};
use crate::error::{Result, RoseError};
use crate::statfn::floor_mul;
use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

/// Version of the persisted document layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub enrolled: u32,
    pub responses: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmCounts {
    pub low: Counts,
    pub high: Counts,
}

impl ArmCounts {
    fn arm_mut(&mut self, arm: Arm) -> &mut Counts {
        match arm {
            Arm::Low => &mut self.low,
            Arm::High => &mut self.high,
        }
    }

    fn plus(&self, o: &ArmCounts) -> ArmCounts {
        let add = |a: Counts, b: Counts| Counts {
            enrolled: a.enrolled + b.enrolled,
            responses: a.responses + b.responses,
        };
        ArmCounts {
            low: add(self.low, o.low),
            high: add(self.high, o.high),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1,
    Stage2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Enrolling,
    InterimDone,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Interim,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    SelectLow,
    SelectHigh,
    ContinueToStageTwo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub kind: DecisionKind,
    pub analysis: Analysis,
    /// `p̂_H - p̂_L` on the counts analysed.
    pub observed_diff: f64,
    pub boundary: f64,
    pub counts: ArmCounts,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub timestamp: String,
    pub decision: Decision,
    pub stage1: ArmCounts,
    pub stage2: Option<ArmCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Responses {
        timestamp: String,
        stage: Stage,
        arm: Arm,
        enrolled_delta: u32,
        responses_delta: u32,
    },
    Analysis {
        timestamp: String,
        analysis: Analysis,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialState {
    pub schema_version: u32,
    pub trial_id: String,
    /// Incremented by the store on every successful write.
    pub version: u64,
    pub created_at: String,
    pub updated_at: String,
    pub design: Design,
    pub stage1: ArmCounts,
    pub stage2: Option<ArmCounts>,
    pub status: TrialStatus,
    pub decision_log: Vec<LogEntry>,
    pub events: Vec<Event>,
}

pub fn now_utc() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn rate_diff(c: &ArmCounts) -> f64 {
    f64::from(c.high.responses) / f64::from(c.high.enrolled)
        - f64::from(c.low.responses) / f64::from(c.low.enrolled)
}

/// `r_H/n_H - r_L/n_L > λ`, decided in integers.
fn exceeds(c: &ArmCounts, lambda: f64) -> bool {
    let (nl, nh) = (c.low.enrolled, c.high.enrolled);
    let lhs =
        i64::from(c.high.responses) * i64::from(nl) - i64::from(c.low.responses) * i64::from(nh);
    lhs > floor_mul(lambda, u64::from(nl) * u64::from(nh))
}

fn require_data(c: &ArmCounts) -> Result<()> {
    if c.low.enrolled == 0 || c.high.enrolled == 0 {
        return Err(RoseError::InsufficientData(
            "each arm needs at least one evaluated patient".into(),
        ));
    }
    Ok(())
}

fn size_warnings(c: &ArmCounts, plan_low: u32, plan_high: u32, what: &str) -> Vec<String> {
    let mut w = Vec::new();
    if c.low.enrolled != plan_low {
        w.push(format!(
            "{what}: low arm has {} evaluated, planned {plan_low}",
            c.low.enrolled
        ));
    }
    if c.high.enrolled != plan_high {
        w.push(format!(
            "{what}: high arm has {} evaluated, planned {plan_high}",
            c.high.enrolled
        ));
    }
    w
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl TrialState {
    pub fn new(trial_id: &str, design: Design) -> Result<Self> {
        Self::new_at(trial_id, design, now_utc())
    }

    fn new_at(trial_id: &str, design: Design, ts: String) -> Result<Self> {
        if !valid_id(trial_id) {
            return Err(RoseError::invalid(
                "trial_id must be 1-64 characters of [A-Za-z0-9_-]",
            ));
        }
        design.validate()?;
        Ok(TrialState {
            schema_version: SCHEMA_VERSION,
            trial_id: trial_id.to_string(),
            version: 0,
            created_at: ts.clone(),
            updated_at: ts,
            design,
            stage1: ArmCounts::default(),
            stage2: None,
            status: TrialStatus::Enrolling,
            decision_log: Vec::new(),
            events: Vec::new(),
        })
    }

    fn is_two_stage(&self) -> bool {
        matches!(self.design, Design::Two(_))
    }

    /// Counts pooled over both stages.
    pub fn pooled(&self) -> ArmCounts {
        match &self.stage2 {
            Some(s2) => self.stage1.plus(s2),
            None => self.stage1,
        }
    }

    pub fn record_responses(
        &self,
        stage: Stage,
        arm: Arm,
        enrolled_delta: u32,
        responses_delta: u32,
    ) -> Result<TrialState> {
        self.record_at(stage, arm, enrolled_delta, responses_delta, now_utc())
    }

    fn record_at(
        &self,
        stage: Stage,
        arm: Arm,
        enrolled_delta: u32,
        responses_delta: u32,
        ts: String,
    ) -> Result<TrialState> {
        if self.status == TrialStatus::Closed {
            return Err(RoseError::NotApplicable("trial is closed".into()));
        }
        match stage {
            Stage::Stage1 if self.status != TrialStatus::Enrolling => {
                return Err(RoseError::NotApplicable("stage 1 is complete".into()))
            }
            Stage::Stage2 if !self.is_two_stage() => {
                return Err(RoseError::NotApplicable(
                    "one-stage design has no second stage".into(),
                ))
            }
            Stage::Stage2 if self.status != TrialStatus::InterimDone => {
                return Err(RoseError::NotApplicable(
                    "stage 2 opens after the interim analysis".into(),
                ))
            }
            _ => {}
        }
        let mut next = self.clone();
        let block = match stage {
            Stage::Stage1 => &mut next.stage1,
            Stage::Stage2 => next.stage2.get_or_insert_with(ArmCounts::default),
        };
        let c = block.arm_mut(arm);
        let enrolled = c.enrolled.checked_add(enrolled_delta);
        let responses = c.responses.checked_add(responses_delta);
        match (enrolled, responses) {
            (Some(e), Some(r)) if r <= e => {
                c.enrolled = e;
                c.responses = r;
            }
            _ => {
                return Err(RoseError::invalid(
                    "responses cannot exceed enrolled patients",
                ))
            }
        }
        if enrolled_delta == 0 && responses_delta == 0 {
            return Ok(self.clone());
        }
        next.events.push(Event::Responses {
            timestamp: ts.clone(),
            stage,
            arm,
            enrolled_delta,
            responses_delta,
        });
        next.updated_at = ts;
        Ok(next)
    }

    /// Interim rule: select the high dose iff the stage-1 difference exceeds
    /// `λ1`; otherwise continue. The low dose is never selected early.
    pub fn decide_interim(&self) -> Result<Decision> {
        let Design::Two(d) = &self.design else {
            return Err(RoseError::NotApplicable(
                "interim analysis needs a two-stage design".into(),
            ));
        };
        if self.status != TrialStatus::Enrolling {
            return Err(RoseError::NotApplicable(
                "interim analysis already performed".into(),
            ));
        }
        let c = self.stage1;
        require_data(&c)?;
        let kind = if exceeds(&c, d.lambda1) {
            DecisionKind::SelectHigh
        } else {
            DecisionKind::ContinueToStageTwo
        };
        Ok(Decision {
            kind,
            analysis: Analysis::Interim,
            observed_diff: rate_diff(&c),
            boundary: d.lambda1,
            counts: c,
            warnings: size_warnings(&c, d.n1_low, d.n1_high, "interim"),
        })
    }

    /// Final rule on pooled counts: select the low dose iff the difference is
    /// at most `λ`.
    pub fn decide_final(&self) -> Result<Decision> {
        match self.status {
            TrialStatus::Closed => return Err(RoseError::NotApplicable("trial is closed".into())),
            TrialStatus::Enrolling if self.is_two_stage() => {
                return Err(RoseError::NotApplicable(
                    "final analysis follows the interim analysis".into(),
                ))
            }
            _ => {}
        }
        let c = self.pooled();
        require_data(&c)?;
        let lambda = self.design.lambda();
        let kind = if exceeds(&c, lambda) {
            DecisionKind::SelectHigh
        } else {
            DecisionKind::SelectLow
        };
        Ok(Decision {
            kind,
            analysis: Analysis::Final,
            observed_diff: rate_diff(&c),
            boundary: lambda,
            counts: c,
            warnings: size_warnings(&c, self.design.n_low(), self.design.n_high(), "final"),
        })
    }

    /// Runs an analysis, logs the decision and advances the status.
    pub fn apply_analysis(&self, analysis: Analysis) -> Result<(TrialState, Decision)> {
        self.apply_at(analysis, now_utc())
    }

    fn apply_at(&self, analysis: Analysis, ts: String) -> Result<(TrialState, Decision)> {
        let decision = match analysis {
            Analysis::Interim => self.decide_interim()?,
            Analysis::Final => self.decide_final()?,
        };
        let mut next = self.clone();
        next.status = match decision.kind {
            DecisionKind::ContinueToStageTwo => TrialStatus::InterimDone,
            _ => TrialStatus::Closed,
        };
        next.decision_log.push(LogEntry {
            timestamp: ts.clone(),
            decision: decision.clone(),
            stage1: self.stage1,
            stage2: self.stage2,
        });
        next.events.push(Event::Analysis {
            timestamp: ts.clone(),
            analysis,
        });
        next.updated_at = ts;
        Ok((next, decision))
    }

    /// Rebuilds a state from its design and event history.
    pub fn replay(
        trial_id: &str,
        design: Design,
        created_at: &str,
        events: &[Event],
    ) -> Result<TrialState> {
        let mut s = TrialState::new_at(trial_id, design, created_at.to_string())?;
        for e in events {
            s = match e {
                Event::Responses {
                    timestamp,
                    stage,
                    arm,
                    enrolled_delta,
                    responses_delta,
                } => s.record_at(
                    *stage,
                    *arm,
                    *enrolled_delta,
                    *responses_delta,
                    timestamp.clone(),
                )?,
                Event::Analysis {
                    timestamp,
                    analysis,
                } => s.apply_at(*analysis, timestamp.clone())?.0,
            };
        }
        Ok(s)
    }
}

/// One JSON document per trial in a directory.
#[derive(Debug)]
pub struct TrialStore {
    dir: PathBuf,
    lock: Mutex<()>,
}

fn io_err(e: impl std::fmt::Display) -> RoseError {
    RoseError::Storage(e.to_string())
}

impl TrialStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(io_err)?;
        Ok(TrialStore {
            dir,
            lock: Mutex::new(()),
        })
    }

    fn path(&self, id: &str) -> Result<PathBuf> {
        if !valid_id(id) {
            return Err(RoseError::invalid(
                "trial_id must be 1-64 characters of [A-Za-z0-9_-]",
            ));
        }
        Ok(self.dir.join(format!("{id}.json")))
    }

    fn read(&self, id: &str) -> Result<TrialState> {
        let p = self.path(id)?;
        let text = match fs::read_to_string(&p) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(RoseError::NotFound(id.to_string()))
            }
            Err(e) => return Err(io_err(e)),
        };
        let s: TrialState = serde_json::from_str(&text).map_err(io_err)?;
        if s.schema_version != SCHEMA_VERSION {
            return Err(RoseError::Storage(format!(
                "unsupported schema version {}",
                s.schema_version
            )));
        }
        Ok(s)
    }

    fn write(&self, s: &TrialState) -> Result<()> {
        let p = self.path(&s.trial_id)?;
        let tmp = p.with_extension("json.tmp");
        let body = serde_json::to_string_pretty(s).map_err(io_err)?;
        fs::write(&tmp, body).map_err(io_err)?;
        fs::rename(&tmp, &p).map_err(io_err)
    }

    pub fn create(&self, trial_id: &str, design: Design) -> Result<TrialState> {
        let _g = self.lock.lock().unwrap();
        if self.path(trial_id)?.exists() {
            return Err(RoseError::Conflict(format!(
                "trial {trial_id} already exists"
            )));
        }
        let mut s = TrialState::new(trial_id, design)?;
        s.version = 1;
        self.write(&s)?;
        Ok(s)
    }

    pub fn load(&self, trial_id: &str) -> Result<TrialState> {
        let _g = self.lock.lock().unwrap();
        self.read(trial_id)
    }

    /// Applies `f` to the stored state. With `expected_version`, the write is
    /// rejected unless the stored version still matches.
    pub fn update<T>(
        &self,
        trial_id: &str,
        expected_version: Option<u64>,
        f: impl FnOnce(&TrialState) -> Result<(TrialState, T)>,
    ) -> Result<(TrialState, T)> {
        let _g = self.lock.lock().unwrap();
        let cur = self.read(trial_id)?;
        if let Some(v) = expected_version {
            if v != cur.version {
                return Err(RoseError::Conflict(format!(
                    "expected version {v}, stored version is {}",
                    cur.version
                )));
            }
        }
        let (mut next, out) = f(&cur)?;
        next.version = cur.version + 1;
        self.write(&next)?;
        Ok((next, out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{DesignGoal, Method, OneStageDesign, TwoStageDesign};

    fn one_stage() -> Design {
        Design::One(OneStageDesign {
            goal: DesignGoal::new(0.3, 0.1, 0.6, 0.6),
            lambda: 0.052,
            n_low: 11,
            n_high: 11,
            lambda_interval: (0.0, 0.1),
            achieved_pcs_low: 0.6,
            achieved_pcs_high: 0.6,
            method: Method::NormalApprox,
            n_unrounded: None,
        })
    }

    fn two_stage() -> Design {
        Design::Two(TwoStageDesign {
            goal: DesignGoal::new(0.3, 0.1, 0.6, 0.6).with_omega(0.5),
            lambda1: 0.178,
            lambda: 0.074,
            n1_low: 7,
            n1_high: 7,
            n_low: 13,
            n_high: 13,
            lambda1_star: None,
            lambda_star: None,
            omega: 0.5,
            achieved_pcs_low: 0.6,
            achieved_pcs_high: 0.6,
            method: Method::NormalApprox,
        })
    }

    fn with(design: Design, stage: Stage, nl: u32, rl: u32, nh: u32, rh: u32) -> TrialState {
        TrialState::new("t1", design)
            .unwrap()
            .record_responses(stage, Arm::Low, nl, rl)
            .unwrap()
            .record_responses(stage, Arm::High, nh, rh)
            .unwrap()
    }

    #[test]
    fn final_examples() {
        let d = with(one_stage(), Stage::Stage1, 11, 3, 11, 5)
            .decide_final()
            .unwrap();
        assert_eq!(d.kind, DecisionKind::SelectHigh);
        assert!((d.observed_diff - 2.0 / 11.0).abs() < 1e-12);
        let d = with(one_stage(), Stage::Stage1, 11, 4, 11, 4)
            .decide_final()
            .unwrap();
        assert_eq!(d.kind, DecisionKind::SelectLow);
    }

    #[test]
    fn ties_at_the_boundary() {
        // 52/1000 exactly equals λ = 0.052: select low
        let d = with(one_stage(), Stage::Stage1, 1000, 100, 1000, 152)
            .decide_final()
            .unwrap();
        assert_eq!(d.kind, DecisionKind::SelectLow);
        assert_eq!(d.warnings.len(), 2);
        let d = with(one_stage(), Stage::Stage1, 1000, 100, 1000, 153)
            .decide_final()
            .unwrap();
        assert_eq!(d.kind, DecisionKind::SelectHigh);
        // interim: difference equal to λ1 continues
        let mut s = with(two_stage(), Stage::Stage1, 1000, 100, 1000, 278);
        s.design = two_stage();
        assert_eq!(
            s.decide_interim().unwrap().kind,
            DecisionKind::ContinueToStageTwo
        );
    }

    #[test]
    fn interim_examples() {
        let s = with(two_stage(), Stage::Stage1, 7, 1, 7, 4);
        assert_eq!(s.decide_interim().unwrap().kind, DecisionKind::SelectHigh);
        let s = with(two_stage(), Stage::Stage1, 7, 2, 7, 3);
        assert_eq!(
            s.decide_interim().unwrap().kind,
            DecisionKind::ContinueToStageTwo
        );
        let s = with(two_stage(), Stage::Stage1, 7, 3, 7, 3);
        assert_eq!(
            s.decide_interim().unwrap().kind,
            DecisionKind::ContinueToStageTwo
        );
        let s = with(one_stage(), Stage::Stage1, 7, 3, 7, 3);
        assert!(matches!(
            s.decide_interim(),
            Err(RoseError::NotApplicable(_))
        ));
    }

    #[test]
    fn record_rules() {
        let s = TrialState::new("t1", one_stage()).unwrap();
        assert_eq!(
            s.record_responses(Stage::Stage1, Arm::Low, 0, 0).unwrap(),
            s
        );
        assert!(s.record_responses(Stage::Stage1, Arm::Low, 2, 3).is_err());
        assert!(s.record_responses(Stage::Stage2, Arm::Low, 2, 1).is_err());
        assert!(TrialState::new("../x", one_stage()).is_err());
        let empty = TrialState::new("t1", one_stage()).unwrap();
        assert!(matches!(
            empty.decide_final(),
            Err(RoseError::InsufficientData(_))
        ));
    }

    #[test]
    fn two_stage_flow_and_replay() {
        let s = with(two_stage(), Stage::Stage1, 7, 2, 7, 3);
        assert!(s.decide_final().is_err());
        let (s, d) = s.apply_analysis(Analysis::Interim).unwrap();
        assert_eq!(d.kind, DecisionKind::ContinueToStageTwo);
        assert_eq!(s.status, TrialStatus::InterimDone);
        assert!(s.record_responses(Stage::Stage1, Arm::Low, 1, 0).is_err());
        let s = s.record_responses(Stage::Stage2, Arm::Low, 6, 1).unwrap();
        let s = s.record_responses(Stage::Stage2, Arm::High, 6, 3).unwrap();
        let (s, d) = s.apply_analysis(Analysis::Final).unwrap();
        // pooled 3/13 vs 6/13: diff 0.2308 > 0.074
        assert_eq!(d.kind, DecisionKind::SelectHigh);
        assert_eq!(s.status, TrialStatus::Closed);
        assert_eq!(s.decision_log.len(), 2);
        assert!(s.record_responses(Stage::Stage2, Arm::Low, 1, 0).is_err());
        let r =
            TrialState::replay(&s.trial_id, s.design.clone(), &s.created_at, &s.events).unwrap();
        assert_eq!(r, s);
    }

    #[test]
    fn store_versions() {
        let dir = tempfile::tempdir().unwrap();
        let store = TrialStore::open(dir.path()).unwrap();
        let s = store.create("abc", one_stage()).unwrap();
        assert_eq!(s.version, 1);
        assert!(matches!(
            store.create("abc", one_stage()),
            Err(RoseError::Conflict(_))
        ));
        let (s2, _) = store
            .update("abc", Some(1), |s| {
                Ok((s.record_responses(Stage::Stage1, Arm::Low, 3, 1)?, ()))
            })
            .unwrap();
        assert_eq!(s2.version, 2);
        let stale = store.update("abc", Some(1), |s| Ok((s.clone(), ())));
        assert!(matches!(stale, Err(RoseError::Conflict(_))));
        assert_eq!(store.load("abc").unwrap(), s2);
        assert!(matches!(store.load("nope"), Err(RoseError::NotFound(_))));
    }
}
