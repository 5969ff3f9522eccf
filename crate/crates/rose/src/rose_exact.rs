//! Exact-binomial design engine: enumeration-based boundary and sample-size
//! searches and exact operating characteristics.
//!
//! Boundaries live on an integer grid `λ = k·step`, with `step` held in
//! millionths, so every comparison `d/n > λ` is integer arithmetic.

use crate::design::{ceil_guard, Design, DesignGoal, Method, OneStageDesign, TwoStageDesign};
use crate::error::{Result, RoseError};
use crate::statfn::{binom_diff_dist, floor_mul, norm_cdf, norm_quantile, LatticeDist};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

const MICRO: i64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactSearchConfig {
    pub lambda_step: f64,
    pub lambda1_step: f64,
    pub n_cap: u32,
}

impl Default for ExactSearchConfig {
    fn default() -> Self {
        ExactSearchConfig {
            lambda_step: 0.002,
            lambda1_step: 0.002,
            n_cap: 500,
        }
    }
}

impl ExactSearchConfig {
    fn micro(step: f64, name: &str) -> Result<i64> {
        if !(step > 0.0 && step <= 0.01) {
            return Err(RoseError::invalid(format!(
                "{name} must lie in (0, 0.01], got {step}"
            )));
        }
        let m = (step * 1e6).round();
        if m < 1.0 || (step * 1e6 - m).abs() > 1e-6 {
            return Err(RoseError::invalid(format!(
                "{name} must be a multiple of 1e-6, got {step}"
            )));
        }
        Ok(m as i64)
    }

    fn steps(&self) -> Result<(i64, i64)> {
        let s = Self::micro(self.lambda_step, "lambda_step")?;
        let s1 = Self::micro(self.lambda1_step, "lambda1_step")?;
        if self.n_cap < 1 {
            return Err(RoseError::invalid("n_cap must be at least 1"));
        }
        Ok((s, s1))
    }
}

/// Exact operating characteristics under both anchors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactOC {
    pub pcs_low: f64,
    pub pcs_high: f64,
    pub pet_low: f64,
    pub pet_high: f64,
    pub en_low: f64,
    pub en_high: f64,
}

/// Exact characteristics at one pair of true rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOC {
    pub p_low: f64,
    pub p_high: f64,
    pub prob_select_high: f64,
    pub pet: f64,
    /// Expected enrollment per arm.
    pub en: f64,
}

type CacheKey = (u32, u64, u32, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<LatticeDist>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<LatticeDist>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Difference distribution `Bin(n, p_high) - Bin(n, p_low)`, memoized.
fn diff(n: u32, p_high: f64, p_low: f64) -> Result<Arc<LatticeDist>> {
    let key = (n, p_high.to_bits(), n, p_low.to_bits());
    if let Some(d) = cache().lock().unwrap().get(&key) {
        return Ok(d.clone());
    }
    let d = Arc::new(binom_diff_dist(n, p_high, n, p_low)?);
    let mut c = cache().lock().unwrap();
    if c.len() > 50_000 {
        c.clear();
    }
    c.insert(key, d.clone());
    Ok(d)
}

/// Largest `d` with `d <= k·step·n`, i.e. the selection threshold.
fn grid_threshold(k: i64, step: i64, n: u32) -> i64 {
    (k * step * i64::from(n)).div_euclid(MICRO)
}

fn check_equal_allocation(goal: &DesignGoal) -> Result<()> {
    if goal.ratio != 1.0 {
        return Err(RoseError::Unsupported(
            "exact engine supports equal allocation only".into(),
        ));
    }
    Ok(())
}

fn check_p(p: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(RoseError::invalid(format!(
            "{what} must lie in [0,1], got {p}"
        )));
    }
    Ok(())
}

/// Probability the one-stage rule selects the high dose, `P(D > λ·n)`.
pub fn exact_pi_high_one_stage(p_low: f64, p_high: f64, n: u32, lambda: f64) -> Result<f64> {
    check_p(p_low, "p_low")?;
    check_p(p_high, "p_high")?;
    if n == 0 {
        return Err(RoseError::invalid("n must be at least 1"));
    }
    let d = diff(n, p_high, p_low)?;
    Ok(d.sf(floor_mul(lambda, u64::from(n))))
}

/// `Σ_{d1 <= t1} P(D1 = d1)·P(D2 <= t - d1)`.
fn pi_low_thresholds(d1: &LatticeDist, f2: &[f64], n2: u32, t1: i64, t: i64) -> f64 {
    let n2 = i64::from(n2);
    let top = t1.min(d1.max());
    let mut s = 0.0;
    for x in d1.min()..=top {
        let y = t - x;
        if y < -n2 {
            continue;
        }
        let c = f2[(y.min(n2) + n2) as usize];
        s += d1.prob(x) * c;
    }
    s
}

/// Probability the two-stage rule selects the low dose.
pub fn exact_pi_low_two_stage(
    p_low: f64,
    p_high: f64,
    n1: u32,
    n2: u32,
    lambda1: f64,
    lambda: f64,
) -> Result<f64> {
    check_p(p_low, "p_low")?;
    check_p(p_high, "p_high")?;
    if n1 == 0 || n2 == 0 {
        return Err(RoseError::invalid("stage sizes must be at least 1"));
    }
    let d1 = diff(n1, p_high, p_low)?;
    let f2 = diff(n2, p_high, p_low)?.cumulative();
    let t1 = floor_mul(lambda1, u64::from(n1));
    let t = floor_mul(lambda, u64::from(n1 + n2));
    Ok(pi_low_thresholds(&d1, &f2, n2, t1, t))
}

/// Probability of stopping at the interim, `P(D1 > λ1·n1)`.
pub fn exact_pet(p_low: f64, p_high: f64, n1: u32, lambda1: f64) -> Result<f64> {
    exact_pi_high_one_stage(p_low, p_high, n1, lambda1)
}

/// `2Φ(Φ⁻¹((1 - α_L)/2)/√ω)`: interim share of the incorrect-selection budget.
pub fn pet_spending_cap(alpha_low: f64, omega: f64) -> Result<f64> {
    Ok(2.0 * norm_cdf(norm_quantile((1.0 - alpha_low) / 2.0)? / omega.sqrt()))
}

struct OneStageTables {
    sl: Arc<LatticeDist>,
    sh: Arc<LatticeDist>,
}

impl OneStageTables {
    fn new(goal: &DesignGoal, n: u32) -> Result<Self> {
        Ok(OneStageTables {
            sl: diff(n, goal.p_high, goal.p_high)?,
            sh: diff(n, goal.p_high, goal.p_low_alt())?,
        })
    }

    fn pcs(&self, t: i64) -> (f64, f64) {
        (self.sl.cdf(t), self.sh.sf(t))
    }
}

/// Minimal `n` with a feasible grid boundary; the smallest such boundary.
pub fn design_exact_one_stage(
    goal: &DesignGoal,
    cfg: &ExactSearchConfig,
) -> Result<OneStageDesign> {
    goal.validate()?;
    check_equal_allocation(goal)?;
    let (step, _) = cfg.steps()?;
    let kmax = (goal.delta * 1e6 / step as f64 + 1e-9).floor() as i64;
    for n in 1..=cfg.n_cap {
        let tab = OneStageTables::new(goal, n)?;
        let feasible: Vec<(i64, f64, f64)> = (0..=kmax)
            .filter_map(|k| {
                let (bl, bh) = tab.pcs(grid_threshold(k, step, n));
                (bl >= goal.alpha_low && bh >= goal.alpha_high).then_some((k, bl, bh))
            })
            .collect();
        if let (Some(first), Some(last)) = (feasible.first(), feasible.last()) {
            let lam = |k: i64| (k * step) as f64 / 1e6;
            return Ok(OneStageDesign {
                goal: *goal,
                lambda: lam(first.0),
                n_low: n,
                n_high: n,
                lambda_interval: (lam(first.0), lam(last.0)),
                achieved_pcs_low: first.1,
                achieved_pcs_high: first.2,
                method: Method::Exact,
                n_unrounded: None,
            });
        }
    }
    Err(RoseError::Infeasible(format!(
        "no n <= {} admits a feasible boundary",
        cfg.n_cap
    )))
}

/// Stage distributions for a two-stage split at both anchors.
struct TwoStageTables {
    n2: u32,
    d1_sl: Arc<LatticeDist>,
    d1_sh: Arc<LatticeDist>,
    f2_sl: Vec<f64>,
    f2_sh: Vec<f64>,
}

impl TwoStageTables {
    fn new(goal: &DesignGoal, n1: u32, n2: u32) -> Result<Self> {
        let (p, q) = (goal.p_high, goal.p_low_alt());
        Ok(TwoStageTables {
            n2,
            d1_sl: diff(n1, p, p)?,
            d1_sh: diff(n1, p, q)?,
            f2_sl: diff(n2, p, p)?.cumulative(),
            f2_sh: diff(n2, p, q)?.cumulative(),
        })
    }

    fn pcs(&self, t1: i64, t: i64) -> (f64, f64) {
        let bl = pi_low_thresholds(&self.d1_sl, &self.f2_sl, self.n2, t1, t);
        let bh = 1.0 - pi_low_thresholds(&self.d1_sh, &self.f2_sh, self.n2, t1, t);
        (bl, bh)
    }

    /// Prefix sums over `t1` at fixed `t`: `out[t1 + n1] = π_L(t1, t)`.
    fn prefix(&self, d1: &LatticeDist, f2: &[f64], t: i64) -> Vec<f64> {
        let n2 = i64::from(self.n2);
        let mut acc = 0.0;
        (d1.min()..=d1.max())
            .map(|x| {
                let y = t - x;
                if y >= -n2 {
                    acc += d1.prob(x) * f2[(y.min(n2) + n2) as usize];
                }
                acc
            })
            .collect()
    }
}

fn split(goal: &DesignGoal, n: u32) -> Result<Option<(u32, u32)>> {
    let omega = goal.require_omega()?;
    let n1 = ceil_guard(omega * f64::from(n)).max(1);
    if n1 >= n {
        return Ok(None);
    }
    Ok(Some((n1, n - n1)))
}

#[allow(clippy::too_many_arguments)]
fn two_stage_result(
    goal: &DesignGoal,
    omega: f64,
    n1: u32,
    n: u32,
    lambda1: f64,
    lambda: f64,
    pcs: (f64, f64),
    method: Method,
) -> TwoStageDesign {
    TwoStageDesign {
        goal: *goal,
        lambda1,
        lambda,
        n1_low: n1,
        n1_high: n1,
        n_low: n,
        n_high: n,
        lambda1_star: None,
        lambda_star: None,
        omega,
        achieved_pcs_low: pcs.0,
        achieved_pcs_high: pcs.1,
        method,
    }
}

/// Two-stage search with the interim boundary fixed by the PET spending cap.
pub fn design_exact_two_stage(
    goal: &DesignGoal,
    cfg: &ExactSearchConfig,
) -> Result<TwoStageDesign> {
    goal.validate()?;
    check_equal_allocation(goal)?;
    let omega = goal.require_omega()?;
    let (step, step1) = cfg.steps()?;
    let kmax = (goal.delta * 1e6 / step as f64 + 1e-9).floor() as i64;
    let k1max = MICRO / step1;
    let cap = pet_spending_cap(goal.alpha_low, omega)?;
    for n in 2..=cfg.n_cap {
        let Some((n1, n2)) = split(goal, n)? else {
            continue;
        };
        let tab = TwoStageTables::new(goal, n1, n2)?;
        let Some(k1) = (0..=k1max).find(|&k1| {
            tab.d1_sl
                .sf(grid_threshold(k1, step1, n1).min(i64::from(n1)))
                <= cap
        }) else {
            continue;
        };
        let t1 = grid_threshold(k1, step1, n1).min(i64::from(n1));
        for k in 0..=kmax {
            if k * step > k1 * step1 {
                break;
            }
            let pcs = tab.pcs(t1, grid_threshold(k, step, n));
            if pcs.0 >= goal.alpha_low && pcs.1 >= goal.alpha_high {
                let l1 = (k1 * step1) as f64 / 1e6;
                let l = (k * step) as f64 / 1e6;
                return Ok(two_stage_result(
                    goal,
                    omega,
                    n1,
                    n,
                    l1,
                    l,
                    pcs,
                    Method::Exact,
                ));
            }
        }
    }
    Err(RoseError::Infeasible(format!(
        "no n <= {} admits a feasible two-stage design",
        cfg.n_cap
    )))
}

/// One feasible grid point of the global-minimum search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasiblePair {
    pub lambda1: f64,
    pub lambda: f64,
    pub pcs_low: f64,
    pub pcs_high: f64,
}

/// Every grid pair `(λ1, λ)` with `λ <= λ1` meeting both targets at total
/// per-arm size `n`, ordered by `λ` then `λ1`.
pub fn feasible_pairs(
    goal: &DesignGoal,
    cfg: &ExactSearchConfig,
    n: u32,
) -> Result<Vec<FeasiblePair>> {
    goal.validate()?;
    check_equal_allocation(goal)?;
    let (step, step1) = cfg.steps()?;
    let Some((n1, n2)) = split(goal, n)? else {
        return Ok(Vec::new());
    };
    let tab = TwoStageTables::new(goal, n1, n2)?;
    let kmax = (goal.delta * 1e6 / step as f64 + 1e-9).floor() as i64;
    let k1max = MICRO / step1;
    let mut out = Vec::new();
    for k in 0..=kmax {
        let t = grid_threshold(k, step, n);
        let pl = tab.prefix(&tab.d1_sl, &tab.f2_sl, t);
        let ph = tab.prefix(&tab.d1_sh, &tab.f2_sh, t);
        let k1_start = (k * step + step1 - 1) / step1;
        for k1 in k1_start..=k1max {
            let t1 = grid_threshold(k1, step1, n1).min(i64::from(n1));
            let idx = (t1 + i64::from(n1)) as usize;
            let (bl, bh) = (pl[idx], 1.0 - ph[idx]);
            if bl >= goal.alpha_low && bh >= goal.alpha_high {
                out.push(FeasiblePair {
                    lambda1: (k1 * step1) as f64 / 1e6,
                    lambda: (k * step) as f64 / 1e6,
                    pcs_low: bl,
                    pcs_high: bh,
                });
            }
        }
    }
    Ok(out)
}

/// Joint search over `(λ1, λ)` subject only to `λ <= λ1`; ties at the minimal
/// `n` go to the smallest `λ`, then the smallest `λ1`.
pub fn design_exact_global_min(
    goal: &DesignGoal,
    cfg: &ExactSearchConfig,
) -> Result<TwoStageDesign> {
    goal.validate()?;
    check_equal_allocation(goal)?;
    let omega = goal.require_omega()?;
    let (step, step1) = cfg.steps()?;
    let kmax = (goal.delta * 1e6 / step as f64 + 1e-9).floor() as i64;
    let k1max = MICRO / step1;
    for n in 2..=cfg.n_cap {
        let Some((n1, n2)) = split(goal, n)? else {
            continue;
        };
        let tab = TwoStageTables::new(goal, n1, n2)?;
        for k in 0..=kmax {
            let t = grid_threshold(k, step, n);
            let pl = tab.prefix(&tab.d1_sl, &tab.f2_sl, t);
            let ph = tab.prefix(&tab.d1_sh, &tab.f2_sh, t);
            let k1_start = (k * step + step1 - 1) / step1;
            for k1 in k1_start..=k1max {
                let t1 = grid_threshold(k1, step1, n1).min(i64::from(n1));
                let idx = (t1 + i64::from(n1)) as usize;
                let pcs = (pl[idx], 1.0 - ph[idx]);
                if pcs.0 >= goal.alpha_low && pcs.1 >= goal.alpha_high {
                    let l1 = (k1 * step1) as f64 / 1e6;
                    let l = (k * step) as f64 / 1e6;
                    return Ok(two_stage_result(
                        goal,
                        omega,
                        n1,
                        n,
                        l1,
                        l,
                        pcs,
                        Method::ExactGlobalMin,
                    ));
                }
            }
        }
    }
    Err(RoseError::Infeasible(format!(
        "no n <= {} admits a feasible two-stage design",
        cfg.n_cap
    )))
}

/// Exact characteristics of any design at the given true rates.
pub fn exact_oc(design: &Design, p_low: f64, p_high: f64) -> Result<ScenarioOC> {
    check_p(p_low, "p_low")?;
    check_p(p_high, "p_high")?;
    design.validate()?;
    match design {
        Design::One(d) => {
            if d.n_low != d.n_high {
                return Err(RoseError::Unsupported(
                    "exact evaluation needs equal arm sizes".into(),
                ));
            }
            let ph = exact_pi_high_one_stage(p_low, p_high, d.n_low, d.lambda)?;
            Ok(ScenarioOC {
                p_low,
                p_high,
                prob_select_high: ph,
                pet: 0.0,
                en: f64::from(d.n_low),
            })
        }
        Design::Two(d) => {
            if d.n_low != d.n_high || d.n1_low != d.n1_high {
                return Err(RoseError::Unsupported(
                    "exact evaluation needs equal arm sizes".into(),
                ));
            }
            let (n1, n) = (d.n1_low, d.n_low);
            let pet = exact_pet(p_low, p_high, n1, d.lambda1)?;
            let pi_low = if n1 == n {
                1.0 - pet
            } else {
                exact_pi_low_two_stage(p_low, p_high, n1, n - n1, d.lambda1, d.lambda)?
            };
            let en = f64::from(n1) + (1.0 - pet) * f64::from(n - n1);
            Ok(ScenarioOC {
                p_low,
                p_high,
                prob_select_high: 1.0 - pi_low,
                pet,
                en,
            })
        }
    }
}

/// Exact characteristics at the design's own anchors: equal rates at `p_H`,
/// and `p_L = p_H - δ`.
pub fn exact_oc_pair(design: &Design) -> Result<ExactOC> {
    let g = design.goal();
    let sl = exact_oc(design, g.p_high, g.p_high)?;
    let sh = exact_oc(design, g.p_low_alt(), g.p_high)?;
    Ok(ExactOC {
        pcs_low: 1.0 - sl.prob_select_high,
        pcs_high: sh.prob_select_high,
        pet_low: sl.pet,
        pet_high: sh.pet,
        en_low: sl.en,
        en_high: sh.en,
    })
}
