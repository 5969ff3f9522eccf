// Frequentist utility comparator. Each patient falls in one of four cells:
// (response, no toxicity), (no response, no toxicity), (response, toxicity),
// (no response, toxicity), scored u1..u4 on a 0-100 scale.

use super::{binomial, ground_truth, replicate_rng, SimConfig};
use crate::design::{Arm, Design};
use crate::error::{Result, RoseError};
use crate::statfn::norm_quantile;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

fn default_consider() -> Arm {
    Arm::High
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UmetConfig {
    pub utilities: [f64; 4],
    pub gamma_high: f64,
    pub gamma_low: f64,
    /// Toxicity rate of the low dose.
    pub tox_low: f64,
    /// Toxicity rate of the high dose.
    pub tox_high: f64,
    /// Arm credited when the rule returns "consider high dose".
    #[serde(default = "default_consider")]
    pub consider_as: Arm,
}

impl Default for UmetConfig {
    fn default() -> Self {
        UmetConfig {
            utilities: [100.0, 35.0, 65.0, 0.0],
            gamma_high: 0.2,
            gamma_low: 0.34,
            tox_low: 0.3,
            tox_high: 0.25,
            consider_as: Arm::High,
        }
    }
}

impl UmetConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let [u1, u2, u3, u4] = self.utilities;
        if self.utilities.iter().any(|u| !(0.0..=100.0).contains(u)) {
            bad.push("utilities must lie in [0,100]".to_string());
        }
        if !(u1 >= u3 && u1 >= u2 && u2 >= u4) {
            bad.push("utilities must satisfy u1 >= u3 and u1 >= u2 >= u4".to_string());
        }
        for (name, g) in [
            ("gamma_high", self.gamma_high),
            ("gamma_low", self.gamma_low),
        ] {
            if !(g > 0.0 && g < 1.0) {
                bad.push(format!("{name} must lie in (0,1), got {g}"));
            }
        }
        if !(self.gamma_low > self.gamma_high) {
            bad.push("gamma_low must exceed gamma_high".to_string());
        }
        for (name, t) in [("tox_low", self.tox_low), ("tox_high", self.tox_high)] {
            if !(0.0..=1.0).contains(&t) {
                bad.push(format!("{name} must lie in [0,1], got {t}"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(RoseError::Validation(bad))
        }
    }

    /// Standardized utilities `u_k / 100`.
    pub fn scaled(&self) -> [f64; 4] {
        self.utilities.map(|u| u / 100.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UmetDecision {
    SelectLow,
    SelectHigh,
    ConsiderHigh,
}

/// Lower confidence bound `û_Δ - z_{1-γ}·sqrt(τ_L² + τ_H²)`,
/// with `τ_j² = û_j(1 - û_j)/n_j`.
fn lower_bound(diff: f64, se: f64, gamma: f64) -> Result<f64> {
    Ok(diff - norm_quantile(1.0 - gamma)? * se)
}

pub fn umet_decide(
    n_low: u32,
    n_high: u32,
    x_low: f64,
    x_high: f64,
    cfg: &UmetConfig,
) -> Result<UmetDecision> {
    cfg.validate()?;
    if n_low == 0 || n_high == 0 {
        return Err(RoseError::invalid("arm sizes must be positive"));
    }
    let ok = |x: f64, n: u32| x.is_finite() && x >= 0.0 && x <= f64::from(n) + 1e-9;
    if !ok(x_low, n_low) || !ok(x_high, n_high) {
        return Err(RoseError::invalid(
            "quasi-events must lie in [0, n] per arm",
        ));
    }
    let (ul, uh) = (x_low / f64::from(n_low), x_high / f64::from(n_high));
    let diff = uh - ul;
    let var = ul * (1.0 - ul) / f64::from(n_low) + uh * (1.0 - uh) / f64::from(n_high);
    let se = var.max(0.0).sqrt();
    if se == 0.0 && diff == 0.0 {
        return Ok(UmetDecision::SelectLow);
    }
    if lower_bound(diff, se, cfg.gamma_high)? > 0.0 {
        Ok(UmetDecision::SelectHigh)
    } else if lower_bound(diff, se, cfg.gamma_low)? < 0.0 {
        Ok(UmetDecision::SelectLow)
    } else {
        Ok(UmetDecision::ConsiderHigh)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UmetSimResult {
    /// Correct-selection rate with "consider high dose" credited per config.
    pub pcs: f64,
    pub mc_se: f64,
    pub select_low: f64,
    pub select_high: f64,
    pub consider_high: f64,
    pub correct: Option<Arm>,
    pub anchored: bool,
    pub n_reps: u32,
}

/// Quasi-events `Σ u*_k X_k` for one arm of `n` patients, with response and
/// toxicity drawn independently.
fn quasi_events<R: rand::Rng>(rng: &mut R, n: u32, p: f64, tox: f64, u: &[f64; 4]) -> Result<f64> {
    let resp = binomial(n, p)?.sample(rng) as u32;
    let tox_resp = binomial(resp, tox)?.sample(rng) as u32;
    let tox_non = binomial(n - resp, tox)?.sample(rng) as u32;
    let counts = [resp - tox_resp, n - resp - tox_non, tox_resp, tox_non];
    Ok(counts.iter().zip(u).map(|(&c, w)| f64::from(c) * w).sum())
}

/// Simulates the comparator at the design's final per-arm sizes (or the
/// enrolled sizes in `cfg`).
pub fn simulate_umet(design: &Design, cfg: &SimConfig, ucfg: &UmetConfig) -> Result<UmetSimResult> {
    cfg.validate()?;
    ucfg.validate()?;
    let n_low = cfg.enrolled_n_low.unwrap_or(design.n_low());
    let n_high = cfg.enrolled_n_high.unwrap_or(design.n_high());
    let u = ucfg.scaled();
    let tally = (0..u64::from(cfg.n_reps))
        .into_par_iter()
        .map(|r| -> Result<[u64; 3]> {
            let mut rng = replicate_rng(cfg.seed, r);
            let xl = quasi_events(&mut rng, n_low, cfg.true_p_low, ucfg.tox_low, &u)?;
            let xh = quasi_events(&mut rng, n_high, cfg.true_p_high, ucfg.tox_high, &u)?;
            Ok(match umet_decide(n_low, n_high, xl, xh, ucfg)? {
                UmetDecision::SelectLow => [1, 0, 0],
                UmetDecision::SelectHigh => [0, 1, 0],
                UmetDecision::ConsiderHigh => [0, 0, 1],
            })
        })
        .try_reduce(
            || [0; 3],
            |a, b| Ok([a[0] + b[0], a[1] + b[1], a[2] + b[2]]),
        )?;
    let r = f64::from(cfg.n_reps);
    let [lo, hi, co] = tally.map(|c| c as f64 / r);
    let credited_high = match ucfg.consider_as {
        Arm::High => hi + co,
        Arm::Low => hi,
    };
    let (correct, anchored) = ground_truth(cfg.true_p_low, cfg.true_p_high, design.goal().delta);
    let pcs = match correct {
        Some(Arm::Low) => 1.0 - credited_high,
        _ => credited_high,
    };
    Ok(UmetSimResult {
        pcs,
        mc_se: (pcs * (1.0 - pcs) / r).sqrt(),
        select_low: lo,
        select_high: hi,
        consider_high: co,
        correct,
        anchored,
        n_reps: cfg.n_reps,
    })
}
