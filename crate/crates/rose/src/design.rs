//! Design goal and design result types shared by the engines.

use crate::error::{Result, RoseError};
use serde::{Deserialize, Serialize};

fn one() -> f64 {
    1.0
}

/// Designer inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignGoal {
    /// Anticipated response rate at the high dose.
    pub p_high: f64,
    /// Margin by which the high dose must beat the low dose to be preferred.
    pub delta: f64,
    /// Target probability of selecting the low dose when rates are equal.
    pub alpha_low: f64,
    /// Target probability of selecting the high dose when the gap is `delta`.
    pub alpha_high: f64,
    /// Allocation ratio high:low.
    #[serde(default = "one")]
    pub ratio: f64,
    /// Interim information fraction (two-stage designs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

impl DesignGoal {
    pub fn new(p_high: f64, delta: f64, alpha_low: f64, alpha_high: f64) -> Self {
        DesignGoal {
            p_high,
            delta,
            alpha_low,
            alpha_high,
            ratio: 1.0,
            omega: None,
        }
    }

    pub fn with_ratio(mut self, ratio: f64) -> Self {
        self.ratio = ratio;
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = Some(omega);
        self
    }

    /// Response rate of the low dose under the high-dose-better anchor.
    pub fn p_low_alt(&self) -> f64 {
        self.p_high - self.delta
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let finite = [
            self.p_high,
            self.delta,
            self.alpha_low,
            self.alpha_high,
            self.ratio,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            bad.push("all inputs must be finite".to_string());
        }
        if !(self.p_high > 0.0 && self.p_high < 1.0) {
            bad.push(format!("p_high must lie in (0,1), got {}", self.p_high));
        }
        if !(self.delta > 0.0 && self.delta < self.p_high) {
            bad.push(format!(
                "delta must satisfy 0 < delta < p_high, got {}",
                self.delta
            ));
        }
        if !(self.alpha_low > 0.5 && self.alpha_low < 1.0) {
            bad.push(format!(
                "alpha_low must lie in (0.5,1), got {}",
                self.alpha_low
            ));
        }
        if !(self.alpha_high > 0.5 && self.alpha_high < 1.0) {
            bad.push(format!(
                "alpha_high must lie in (0.5,1), got {}",
                self.alpha_high
            ));
        }
        if !(self.ratio > 0.0) {
            bad.push(format!("ratio must be positive, got {}", self.ratio));
        }
        if let Some(w) = self.omega {
            if !(w > 0.0 && w < 1.0) {
                bad.push(format!("omega must lie in (0,1), got {w}"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(RoseError::Validation(bad))
        }
    }

    pub fn require_omega(&self) -> Result<f64> {
        self.omega
            .ok_or_else(|| RoseError::invalid("two-stage design requires omega"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NormalApprox,
    Exact,
    ExactGlobalMin,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::NormalApprox => "normal_approx",
            Method::Exact => "exact",
            Method::ExactGlobalMin => "exact_global_min",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneStageDesign {
    pub goal: DesignGoal,
    pub lambda: f64,
    pub n_low: u32,
    pub n_high: u32,
    /// Feasible boundary interval at the chosen sample size.
    pub lambda_interval: (f64, f64),
    pub achieved_pcs_low: f64,
    pub achieved_pcs_high: f64,
    pub method: Method,
    /// Real-valued sample size before rounding (normal approximation only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_unrounded: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageDesign {
    pub goal: DesignGoal,
    pub lambda1: f64,
    pub lambda: f64,
    pub n1_low: u32,
    pub n1_high: u32,
    pub n_low: u32,
    pub n_high: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_star: Option<f64>,
    pub omega: f64,
    pub achieved_pcs_low: f64,
    pub achieved_pcs_high: f64,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stages", rename_all = "snake_case")]
pub enum Design {
    One(OneStageDesign),
    Two(TwoStageDesign),
}

impl Design {
    pub fn goal(&self) -> &DesignGoal {
        match self {
            Design::One(d) => &d.goal,
            Design::Two(d) => &d.goal,
        }
    }

    pub fn method(&self) -> Method {
        match self {
            Design::One(d) => d.method,
            Design::Two(d) => d.method,
        }
    }

    pub fn n_low(&self) -> u32 {
        match self {
            Design::One(d) => d.n_low,
            Design::Two(d) => d.n_low,
        }
    }

    pub fn n_high(&self) -> u32 {
        match self {
            Design::One(d) => d.n_high,
            Design::Two(d) => d.n_high,
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            Design::One(d) => d.lambda,
            Design::Two(d) => d.lambda,
        }
    }

    /// Structural checks for designs supplied from outside the engines.
    pub fn validate(&self) -> Result<()> {
        self.goal().validate()?;
        let mut bad = Vec::new();
        match self {
            Design::One(d) => {
                if d.n_low == 0 || d.n_high == 0 {
                    bad.push("arm sizes must be positive".to_string());
                }
                if !d.lambda.is_finite() {
                    bad.push("lambda must be finite".to_string());
                }
            }
            Design::Two(d) => {
                if d.n1_low == 0 || d.n1_high == 0 {
                    bad.push("stage-1 arm sizes must be positive".to_string());
                }
                if d.n1_low > d.n_low || d.n1_high > d.n_high {
                    bad.push("stage-1 sizes cannot exceed totals".to_string());
                }
                if !(d.lambda.is_finite() && d.lambda1.is_finite()) {
                    bad.push("boundaries must be finite".to_string());
                }
                if d.lambda < 0.0 || d.lambda1 < 0.0 {
                    bad.push("boundaries must be nonnegative".to_string());
                }
                if !(d.omega > 0.0 && d.omega < 1.0) {
                    bad.push("omega must lie in (0,1)".to_string());
                }
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(RoseError::Validation(bad))
        }
    }
}

/// Ceiling that ignores floating noise just above an integer, so that
/// `0.3 * 10.0` rounds up to 3 rather than 4.
pub fn ceil_guard(x: f64) -> u32 {
    let r = x.round();
    let v = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    v.max(0.0) as u32
}

/// Round to 3 decimals, the precision of published boundaries.
pub fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Dose arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Low,
    High,
}
