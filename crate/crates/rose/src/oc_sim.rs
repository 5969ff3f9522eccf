//! Monte Carlo operating characteristics, sensitivity sweeps, and the
//! utility-based comparator.
//!
//! Replicate `r` draws from a ChaCha8 stream selected by `(seed, r)`, and
//! aggregates are integer counters, so results do not depend on how the
//! replicates are split across threads.

mod umet;

pub use umet::{simulate_umet, umet_decide, UmetConfig, UmetDecision, UmetSimResult};

use crate::design::{Arm, Design, OneStageDesign, TwoStageDesign};
use crate::error::{Result, RoseError};
use crate::statfn::floor_mul;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

fn default_reps() -> u32 {
    10_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default = "default_reps")]
    pub n_reps: u32,
    pub seed: u64,
    pub true_p_low: f64,
    pub true_p_high: f64,
    /// Enrolled sizes; the design's planned sizes when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enrolled_n_low: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enrolled_n_high: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enrolled_n1_low: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enrolled_n1_high: Option<u32>,
}

impl SimConfig {
    pub fn new(seed: u64, true_p_low: f64, true_p_high: f64) -> Self {
        SimConfig {
            n_reps: default_reps(),
            seed,
            true_p_low,
            true_p_high,
            enrolled_n_low: None,
            enrolled_n_high: None,
            enrolled_n1_low: None,
            enrolled_n1_high: None,
        }
    }

    pub fn with_reps(mut self, n_reps: u32) -> Self {
        self.n_reps = n_reps;
        self
    }

    fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.n_reps == 0 {
            bad.push("n_reps must be at least 1".to_string());
        }
        for (name, p) in [
            ("true_p_low", self.true_p_low),
            ("true_p_high", self.true_p_high),
        ] {
            if !(0.0..=1.0).contains(&p) {
                bad.push(format!("{name} must lie in [0,1], got {p}"));
            }
        }
        let sizes = [
            self.enrolled_n_low,
            self.enrolled_n_high,
            self.enrolled_n1_low,
            self.enrolled_n1_high,
        ];
        if sizes.contains(&Some(0)) {
            bad.push("enrolled sizes must be at least 1".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(RoseError::Validation(bad))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Probability of correct selection, or the probability of selecting the
    /// high dose when the truth is not one of the two anchors.
    pub pcs: f64,
    pub pet: f64,
    /// Expected enrollment per arm (total over both arms, halved).
    pub en: f64,
    /// Expected enrollment over both arms.
    pub en_total: f64,
    pub mc_se: f64,
    pub prob_select_high: f64,
    /// Arm treated as correct; absent when `0 < gap < delta`.
    pub correct: Option<Arm>,
    /// Whether the truth is one of the anchors (equal rates, or gap >= delta).
    pub anchored: bool,
    pub n_reps: u32,
}

/// Correct arm for the true rates: `(correct, anchored)`.
pub fn ground_truth(p_low: f64, p_high: f64, delta: f64) -> (Option<Arm>, bool) {
    let gap = p_high - p_low;
    if gap.abs() < 1e-12 {
        (Some(Arm::Low), true)
    } else if gap >= delta - 1e-12 {
        (Some(Arm::High), true)
    } else if gap < 0.0 {
        (Some(Arm::Low), false)
    } else {
        (None, false)
    }
}

/// RNG for replicate `r`.
pub fn replicate_rng(seed: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    rng
}

fn binomial(n: u32, p: f64) -> Result<Binomial> {
    Binomial::new(u64::from(n), p)
        .map_err(|e| RoseError::invalid(format!("binomial({n}, {p}): {e}")))
}

/// `x_h/n_h - x_l/n_l > λ` in integers: `x_h·n_l - x_l·n_h > ⌊λ·n_h·n_l⌋`.
#[derive(Debug, Clone, Copy)]
struct Rule {
    n_low: u32,
    n_high: u32,
    cut: i64,
}

impl Rule {
    fn new(lambda: f64, n_low: u32, n_high: u32) -> Self {
        Rule {
            n_low,
            n_high,
            cut: floor_mul(lambda, u64::from(n_low) * u64::from(n_high)),
        }
    }

    fn high(&self, x_low: u64, x_high: u64) -> bool {
        let lhs = x_high as i64 * i64::from(self.n_low) - x_low as i64 * i64::from(self.n_high);
        lhs > self.cut
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    select_high: u64,
    early: u64,
    patients: u64,
}

impl Tally {
    fn add(self, o: Tally) -> Tally {
        Tally {
            select_high: self.select_high + o.select_high,
            early: self.early + o.early,
            patients: self.patients + o.patients,
        }
    }
}

fn summarize(t: Tally, cfg: &SimConfig, delta: f64) -> SimResult {
    let r = f64::from(cfg.n_reps);
    let p_high = t.select_high as f64 / r;
    let (correct, anchored) = ground_truth(cfg.true_p_low, cfg.true_p_high, delta);
    let pcs = match correct {
        Some(Arm::Low) => 1.0 - p_high,
        Some(Arm::High) | None => p_high,
    };
    let en_total = t.patients as f64 / r;
    SimResult {
        pcs,
        pet: t.early as f64 / r,
        en: en_total / 2.0,
        en_total,
        mc_se: (pcs * (1.0 - pcs) / r).sqrt(),
        prob_select_high: p_high,
        correct,
        anchored,
        n_reps: cfg.n_reps,
    }
}

fn run<F>(cfg: &SimConfig, f: F) -> Tally
where
    F: Fn(&mut ChaCha8Rng) -> Tally + Sync,
{
    (0..u64::from(cfg.n_reps))
        .into_par_iter()
        .map(|r| f(&mut replicate_rng(cfg.seed, r)))
        .reduce(Tally::default, Tally::add)
}

pub fn simulate_one_stage(design: &OneStageDesign, cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    Design::One(design.clone()).validate()?;
    let n_low = cfg.enrolled_n_low.unwrap_or(design.n_low);
    let n_high = cfg.enrolled_n_high.unwrap_or(design.n_high);
    let (bl, bh) = (
        binomial(n_low, cfg.true_p_low)?,
        binomial(n_high, cfg.true_p_high)?,
    );
    let rule = Rule::new(design.lambda, n_low, n_high);
    let patients = u64::from(n_low + n_high);
    let t = run(cfg, |rng| {
        let xl = bl.sample(rng);
        let xh = bh.sample(rng);
        Tally {
            select_high: u64::from(rule.high(xl, xh)),
            early: 0,
            patients,
        }
    });
    Ok(summarize(t, cfg, design.goal.delta))
}

pub fn simulate_two_stage(design: &TwoStageDesign, cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    Design::Two(design.clone()).validate()?;
    let n_low = cfg.enrolled_n_low.unwrap_or(design.n_low);
    let n_high = cfg.enrolled_n_high.unwrap_or(design.n_high);
    let n1_low = cfg.enrolled_n1_low.unwrap_or(design.n1_low).min(n_low);
    let n1_high = cfg.enrolled_n1_high.unwrap_or(design.n1_high).min(n_high);
    let b1l = binomial(n1_low, cfg.true_p_low)?;
    let b1h = binomial(n1_high, cfg.true_p_high)?;
    let b2l = binomial(n_low - n1_low, cfg.true_p_low)?;
    let b2h = binomial(n_high - n1_high, cfg.true_p_high)?;
    let interim = Rule::new(design.lambda1, n1_low, n1_high);
    let fin = Rule::new(design.lambda, n_low, n_high);
    let (stage1, full) = (u64::from(n1_low + n1_high), u64::from(n_low + n_high));
    let t = run(cfg, |rng| {
        let x1l = b1l.sample(rng);
        let x1h = b1h.sample(rng);
        if interim.high(x1l, x1h) {
            return Tally {
                select_high: 1,
                early: 1,
                patients: stage1,
            };
        }
        let xl = x1l + b2l.sample(rng);
        let xh = x1h + b2h.sample(rng);
        Tally {
            select_high: u64::from(fin.high(xl, xh)),
            early: 0,
            patients: full,
        }
    });
    Ok(summarize(t, cfg, design.goal.delta))
}

pub fn simulate(design: &Design, cfg: &SimConfig) -> Result<SimResult> {
    match design {
        Design::One(d) => simulate_one_stage(d, cfg),
        Design::Two(d) => simulate_two_stage(d, cfg),
    }
}

/// Simulated characteristics at both anchors around `p_high`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorPair {
    pub s_low: SimResult,
    pub s_high: SimResult,
}

pub fn simulate_anchors(
    design: &Design,
    p_high: f64,
    n_reps: u32,
    seed: u64,
) -> Result<AnchorPair> {
    let delta = design.goal().delta;
    let p_alt = p_high - delta;
    if p_alt < 0.0 {
        return Err(RoseError::invalid(format!(
            "p_high - delta is negative at p_high = {p_high}"
        )));
    }
    let s_low = simulate(
        design,
        &SimConfig::new(seed, p_high, p_high).with_reps(n_reps),
    )?;
    let s_high = simulate(
        design,
        &SimConfig::new(seed, p_alt, p_high).with_reps(n_reps),
    )?;
    Ok(AnchorPair { s_low, s_high })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PHighPoint {
    pub true_p_high: f64,
    pub s_low: SimResult,
    pub s_high: SimResult,
}

/// Design held fixed while the true high-dose rate varies.
pub fn sensitivity_p_high(
    design: &Design,
    true_p_high_grid: &[f64],
    n_reps: u32,
    seed: u64,
) -> Result<Vec<PHighPoint>> {
    design.validate()?;
    true_p_high_grid
        .iter()
        .map(|&p| {
            let a = simulate_anchors(design, p, n_reps, seed)?;
            Ok(PHighPoint {
                true_p_high: p,
                s_low: a.s_low,
                s_high: a.s_high,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationType {
    /// `n_L` as planned, `n_H` shifted.
    HighOnly,
    /// `n_H` as planned, `n_L` shifted.
    LowOnly,
    /// Both arms shifted by the same offset.
    SameDirection,
    /// `n_H` up and `n_L` down by the same offset; the total is unchanged.
    OppositeDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationPoint {
    pub offset: i64,
    pub n_low: u32,
    pub n_high: u32,
    pub s_low: SimResult,
    pub s_high: SimResult,
}

fn shifted(n: u32, by: i64) -> Result<u32> {
    let v = i64::from(n) + by;
    if v < 1 {
        return Err(RoseError::invalid(format!(
            "offset {by} leaves an arm of size {v}"
        )));
    }
    Ok(v as u32)
}

/// Enrolled sizes deviate from plan; the design's boundaries are unchanged.
/// For two-stage designs the totals move and stage-1 sizes stay as planned.
pub fn sensitivity_n_deviation(
    design: &Design,
    deviation: DeviationType,
    offsets: &[i64],
    n_reps: u32,
    seed: u64,
) -> Result<Vec<DeviationPoint>> {
    design.validate()?;
    let g = *design.goal();
    offsets
        .iter()
        .map(|&o| {
            let (dl, dh) = match deviation {
                DeviationType::HighOnly => (0, o),
                DeviationType::LowOnly => (o, 0),
                DeviationType::SameDirection => (o, o),
                DeviationType::OppositeDirection => (-o, o),
            };
            let n_low = shifted(design.n_low(), dl)?;
            let n_high = shifted(design.n_high(), dh)?;
            let cfg = |p_low: f64| SimConfig {
                enrolled_n_low: Some(n_low),
                enrolled_n_high: Some(n_high),
                ..SimConfig::new(seed, p_low, g.p_high).with_reps(n_reps)
            };
            let s_low = simulate(design, &cfg(g.p_high))?;
            let s_high = simulate(design, &cfg(g.p_low_alt()))?;
            Ok(DeviationPoint {
                offset: o,
                n_low,
                n_high,
                s_low,
                s_high,
            })
        })
        .collect()
}
