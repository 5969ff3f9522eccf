//! Statistical kernels: normal CDF and quantile, the standardized bivariate
//! normal upper orthant, binomial pmf, and lattice distributions of
//! differences of independent binomials.

mod bvn;
mod lattice;

pub use bvn::bvn_upper;
pub use lattice::{binom_diff_dist, lattice_convolve, LatticeDist};

use crate::error::{Result, RoseError};
use libm::erfc;
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::SQRT_2;

/// Standard normal CDF. Infinite arguments map to 0 or 1; NaN propagates.
pub fn norm_cdf(z: f64) -> f64 {
    if z == f64::INFINITY {
        return 1.0;
    }
    if z == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * erfc(-z / SQRT_2)
}

/// Upper tail `1 - Φ(z)`, computed without cancellation.
pub fn norm_sf(z: f64) -> f64 {
    norm_cdf(-z)
}

/// Checked variant of [`norm_cdf`] that rejects non-finite input.
pub fn try_norm_cdf(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(RoseError::Domain(format!(
            "norm_cdf argument must be finite, got {z}"
        )));
    }
    Ok(norm_cdf(z))
}

/// Standard normal quantile for `0 < p < 1`.
pub fn norm_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(RoseError::Domain(format!(
            "quantile requires 0 < p < 1, got {p}"
        )));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let mut z = -SQRT_2 * erfc_inv(2.0 * p);
    // one Halley step against the erfc-based CDF tightens the round trip
    let e = norm_cdf(z) - p;
    let dens = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if dens > 0.0 && e != 0.0 {
        let u = e / dens;
        z -= u / (1.0 + 0.5 * z * u);
    }
    Ok(z)
}

fn check_prob(p: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(RoseError::Domain(format!(
            "{what} must lie in [0,1], got {p}"
        )));
    }
    Ok(())
}

/// Binomial pmf `P(X = k)` for `X ~ Bin(n, p)`.
///
/// Uses direct multiplication for `n <= 30` and log-gamma otherwise.
pub fn binom_pmf(k: u32, n: u32, p: f64) -> Result<f64> {
    check_prob(p, "p")?;
    if k > n {
        return Err(RoseError::Domain(format!("k = {k} exceeds n = {n}")));
    }
    Ok(pmf_unchecked(k, n, p))
}

fn pmf_unchecked(k: u32, n: u32, p: f64) -> f64 {
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let q = 1.0 - p;
    if n <= 30 {
        let kk = k.min(n - k);
        let mut c = 1.0f64;
        for i in 0..kk {
            c = c * f64::from(n - i) / f64::from(i + 1);
        }
        c * p.powi(k as i32) * q.powi((n - k) as i32)
    } else {
        let (nf, kf) = (f64::from(n), f64::from(k));
        let lc = ln_gamma(nf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0);
        (lc + kf * p.ln() + (nf - kf) * q.ln()).exp()
    }
}

/// Full pmf vector `[P(X=0), ..., P(X=n)]`.
pub fn binom_pmf_vec(n: u32, p: f64) -> Result<Vec<f64>> {
    check_prob(p, "p")?;
    Ok((0..=n).map(|k| pmf_unchecked(k, n, p)).collect())
}

/// Binomial CDF `P(X <= k)`.
pub fn binom_cdf(k: i64, n: u32, p: f64) -> Result<f64> {
    check_prob(p, "p")?;
    if k < 0 {
        return Ok(0.0);
    }
    if k >= i64::from(n) {
        return Ok(1.0);
    }
    Ok((0..=k as u32)
        .map(|j| pmf_unchecked(j, n, p))
        .sum::<f64>()
        .min(1.0))
}

/// `floor(lambda * m)` computed exactly.
///
/// A `lambda` within 1e-12 of a multiple of 1e-6 is snapped to that decimal
/// so a reported boundary such as 0.052 compares as exactly 52/1000. Any
/// other value is decomposed into its exact binary fraction.
pub fn floor_mul(lambda: f64, m: u64) -> i64 {
    assert!(lambda.is_finite(), "boundary must be finite");
    let scaled = lambda * 1e6;
    let micro = scaled.round();
    if (scaled - micro).abs() < 1e-6 {
        let num = micro as i128 * m as i128;
        return num.div_euclid(1_000_000) as i64;
    }
    if lambda == 0.0 {
        return 0;
    }
    let bits = lambda.to_bits();
    let neg = bits >> 63 == 1;
    let exp_bits = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, exp) = if exp_bits == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp_bits - 1075)
    };
    let prod = mant as i128 * m as i128;
    let mag_floor = |v: i128, shift: i32| -> (i128, bool) {
        if shift <= 0 {
            (v << (-shift) as u32, false)
        } else if shift >= 127 {
            (0, v != 0)
        } else {
            let q = v >> shift as u32;
            (q, (q << shift as u32) != v)
        }
    };
    let (q, inexact) = mag_floor(prod, -exp);
    let out = if neg {
        if inexact {
            -q - 1
        } else {
            -q
        }
    } else {
        q
    };
    out as i64
}
