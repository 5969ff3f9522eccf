//! Normal-approximation design engine for one- and two-stage designs with
//! allocation ratio C:1 (high:low).

use crate::design::{ceil_guard, DesignGoal, Method, OneStageDesign, TwoStageDesign};
use crate::error::{Result, RoseError};
use crate::statfn::{bvn_upper, norm_cdf, norm_quantile, norm_sf};
use serde::{Deserialize, Serialize};

/// Upper bound on the sample-size scan.
pub const N_SCAN_CAP: u32 = 1_000_000;

/// Standard deviations of the scaled difference in response rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalApproxContext {
    /// Under equal rates.
    pub sigma_low: f64,
    /// Under `p_L = p_H - delta`.
    pub sigma_high: f64,
}

impl NormalApproxContext {
    pub fn new(goal: &DesignGoal) -> Result<Self> {
        goal.validate()?;
        let (p, d, c) = (goal.p_high, goal.delta, goal.ratio);
        let sigma_low = (p * (1.0 - p) * (1.0 + 1.0 / c)).sqrt();
        let sigma_high = ((p - d) * (1.0 - p + d) + p * (1.0 - p) / c).sqrt();
        Ok(NormalApproxContext {
            sigma_low,
            sigma_high,
        })
    }
}

/// Approximate PCS of the one-stage rule under both anchors, `(β_L, β_H)`.
/// `n_low` may be fractional.
pub fn pcs_one_stage(goal: &DesignGoal, lambda: f64, n_low: f64) -> Result<(f64, f64)> {
    let ctx = NormalApproxContext::new(goal)?;
    if !(n_low >= 1.0) {
        return Err(RoseError::invalid(format!(
            "n_low must be at least 1, got {n_low}"
        )));
    }
    if !(lambda >= 0.0) {
        return Err(RoseError::invalid(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    let rn = n_low.sqrt();
    let beta_low = norm_cdf(rn * lambda / ctx.sigma_low);
    let beta_high = norm_sf(rn * (lambda - goal.delta) / ctx.sigma_high);
    Ok((beta_low, beta_high))
}

/// Feasible boundary interval `(λ_L, λ_H)` at per-arm size `n_low`.
pub fn lambda_interval(goal: &DesignGoal, n_low: f64) -> Result<(f64, f64)> {
    let ctx = NormalApproxContext::new(goal)?;
    let rn = n_low.sqrt();
    let lo = ctx.sigma_low * norm_quantile(goal.alpha_low)? / rn;
    let hi = ctx.sigma_high * norm_quantile(1.0 - goal.alpha_high)? / rn + goal.delta;
    Ok((lo, hi))
}

/// Unrounded minimal size and the boundary at which the interval collapses.
pub fn one_stage_solution(goal: &DesignGoal) -> Result<(f64, f64)> {
    let ctx = NormalApproxContext::new(goal)?;
    let a = ctx.sigma_low * norm_quantile(goal.alpha_low)?;
    let b = ctx.sigma_high * norm_quantile(1.0 - goal.alpha_high)?;
    let n = ((a - b) / goal.delta).powi(2);
    let lambda = goal.delta * a / (a - b);
    Ok((n, lambda))
}

pub fn design_one_stage(goal: &DesignGoal) -> Result<OneStageDesign> {
    let (n, lambda) = one_stage_solution(goal)?;
    let n_low = ceil_guard(n).max(1);
    let n_high = ceil_guard(goal.ratio * n).max(1);
    let interval = lambda_interval(goal, f64::from(n_low))?;
    let (pl, ph) = pcs_one_stage(goal, lambda, f64::from(n_low))?;
    Ok(OneStageDesign {
        goal: *goal,
        lambda,
        n_low,
        n_high,
        lambda_interval: interval,
        achieved_pcs_low: pl,
        achieved_pcs_high: ph,
        method: Method::NormalApprox,
        n_unrounded: Some(n),
    })
}

fn check_alpha_omega(alpha_low: f64, omega: f64) -> Result<()> {
    let mut bad = Vec::new();
    if !(alpha_low > 0.5 && alpha_low < 1.0) {
        bad.push(format!("alpha_low must lie in (0.5,1), got {alpha_low}"));
    }
    if !(omega > 0.0 && omega < 1.0) {
        bad.push(format!("omega must lie in (0,1), got {omega}"));
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(RoseError::Validation(bad))
    }
}

/// Standardized interim boundary from O'Brien-Fleming spending of `1 - α_L`.
pub fn interim_boundary_star(alpha_low: f64, omega: f64) -> Result<f64> {
    check_alpha_omega(alpha_low, omega)?;
    let spent = 2.0 * norm_cdf(norm_quantile((1.0 - alpha_low) / 2.0)? / omega.sqrt());
    if spent <= 0.0 {
        return Ok(f64::INFINITY);
    }
    norm_quantile(1.0 - spent)
}

/// Probability of selecting the high dose when the standardized statistics
/// at the interim and final looks have correlation `rho`.
fn select_high_prob(a: f64, b: f64, rho: f64) -> Result<f64> {
    Ok(norm_sf(a) + norm_sf(b) - bvn_upper(a, b, rho)?)
}

/// Standardized final boundary: the root of
/// `P(Z1 > λ1*) + P(Z1 <= λ1*, Z > λ*) = 1 - α_L`.
pub fn final_boundary_star(alpha_low: f64, omega: f64, lambda1_star: f64) -> Result<f64> {
    check_alpha_omega(alpha_low, omega)?;
    let rho = omega.sqrt();
    let target = 1.0 - alpha_low;
    let f = |ls: f64| -> Result<f64> { Ok(select_high_prob(lambda1_star, ls, rho)? - target) };
    let (mut lo, mut hi) = (0.0f64, 10.0f64);
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if !(flo > 0.0 && fhi < 0.0) {
        return Err(RoseError::Numeric(format!(
            "final boundary not bracketed in [0, 10] (f(0) = {flo}, f(10) = {fhi})"
        )));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Approximate PCS under the high-dose anchor for the standardized boundaries,
/// with the interim at the real-valued size `ω·n_low`.
pub fn pcs_high_two_stage(
    goal: &DesignGoal,
    lambda1_star: f64,
    lambda_star: f64,
    n_low: f64,
) -> Result<f64> {
    let ctx = NormalApproxContext::new(goal)?;
    let omega = goal.require_omega()?;
    if !(n_low >= 1.0) {
        return Err(RoseError::invalid(format!(
            "n_low must be at least 1, got {n_low}"
        )));
    }
    let n1 = omega * n_low;
    let a = (lambda1_star * ctx.sigma_low / n1.sqrt() - goal.delta) / (ctx.sigma_high / n1.sqrt());
    let b =
        (lambda_star * ctx.sigma_low / n_low.sqrt() - goal.delta) / (ctx.sigma_high / n_low.sqrt());
    if a.is_nan() || b.is_nan() {
        return Ok(1.0);
    }
    select_high_prob(a, b, omega.sqrt())
}

/// Approximate `(β_L, β_H)` of a two-stage rule on the raw boundary scale at
/// integer stage sizes (low arm sizes; the ratio enters through σ).
pub fn pcs_two_stage(
    goal: &DesignGoal,
    lambda1: f64,
    lambda: f64,
    n1_low: u32,
    n_low: u32,
) -> Result<(f64, f64)> {
    let ctx = NormalApproxContext::new(goal)?;
    if n1_low == 0 || n1_low > n_low {
        return Err(RoseError::invalid("need 1 <= n1_low <= n_low"));
    }
    let (n1, n) = (f64::from(n1_low), f64::from(n_low));
    let rho = (n1 / n).sqrt();
    let high_under = |mu: f64, s: f64| -> Result<f64> {
        let a = (lambda1 - mu) * n1.sqrt() / s;
        let b = (lambda - mu) * n.sqrt() / s;
        select_high_prob(a, b, rho)
    };
    let beta_low = 1.0 - high_under(0.0, ctx.sigma_low)?;
    let beta_high = high_under(goal.delta, ctx.sigma_high)?;
    Ok((beta_low, beta_high))
}

pub fn design_two_stage(goal: &DesignGoal) -> Result<TwoStageDesign> {
    let ctx = NormalApproxContext::new(goal)?;
    let omega = goal.require_omega()?;
    let l1s = interim_boundary_star(goal.alpha_low, omega)?;
    let ls = final_boundary_star(goal.alpha_low, omega, l1s)?;
    let mut best = 0.0f64;
    let mut found = None;
    for n in 1..=N_SCAN_CAP {
        let bh = pcs_high_two_stage(goal, l1s, ls, f64::from(n))?;
        if bh >= goal.alpha_high {
            found = Some(n);
            break;
        }
        best = best.max(bh);
    }
    let n_low = found.ok_or_else(|| {
        RoseError::Infeasible(format!(
            "no n <= {N_SCAN_CAP} reaches alpha_high; best beta_high = {best:.6}"
        ))
    })?;
    let n1_low = ceil_guard(omega * f64::from(n_low)).max(1);
    let n_high = ceil_guard(goal.ratio * f64::from(n_low)).max(1);
    let n1_high = ceil_guard(omega * f64::from(n_high)).max(1);
    let lambda1 = l1s * ctx.sigma_low / f64::from(n1_low).sqrt();
    let lambda = ls * ctx.sigma_low / f64::from(n_low).sqrt();
    let (pl, ph) = pcs_two_stage(goal, lambda1, lambda, n1_low, n_low)?;
    Ok(TwoStageDesign {
        goal: *goal,
        lambda1,
        lambda,
        n1_low,
        n1_high,
        n_low,
        n_high,
        lambda1_star: Some(l1s),
        lambda_star: Some(ls),
        omega,
        achieved_pcs_low: pl,
        achieved_pcs_high: ph,
        method: Method::NormalApprox,
    })
}
