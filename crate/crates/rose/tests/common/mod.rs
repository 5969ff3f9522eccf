//! Independent reference computations shared by the integration tests and
//! the acceptance runner. Nothing here calls the engine's kernels.

#![allow(dead_code)]

use libm::erfc;

/// `C(n, k)·p^k·(1-p)^(n-k)` by direct products; fine for small `n`.
pub fn pmf(k: u32, n: u32, p: f64) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * f64::from(n - i) / f64::from(i + 1);
    }
    c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// `a/b > λ` with `λ = micro/1e6`, decided in integers.
fn above(a: i64, b: i64, micro: i64) -> bool {
    a * 1_000_000 > micro * b
}

/// One-stage `P(select high)` by summing over both arms' outcomes.
pub fn one_stage_select_high(p_low: f64, p_high: f64, n: u32, micro: i64) -> f64 {
    let mut s = 0.0;
    for xh in 0..=n {
        for xl in 0..=n {
            if above(i64::from(xh) - i64::from(xl), i64::from(n), micro) {
                s += pmf(xh, n, p_high) * pmf(xl, n, p_low);
            }
        }
    }
    s
}

/// Two-stage `P(select low)` by summing over all four stage-arm outcomes.
pub fn two_stage_select_low(
    p_low: f64,
    p_high: f64,
    n1: u32,
    n2: u32,
    micro1: i64,
    micro: i64,
) -> f64 {
    let mut s = 0.0;
    for ah in 0..=n1 {
        for al in 0..=n1 {
            let d1 = i64::from(ah) - i64::from(al);
            if above(d1, i64::from(n1), micro1) {
                continue;
            }
            let w1 = pmf(ah, n1, p_high) * pmf(al, n1, p_low);
            for bh in 0..=n2 {
                for bl in 0..=n2 {
                    let d = d1 + i64::from(bh) - i64::from(bl);
                    if !above(d, i64::from(n1 + n2), micro) {
                        s += w1 * pmf(bh, n2, p_high) * pmf(bl, n2, p_low);
                    }
                }
            }
        }
    }
    s
}

pub fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `P(X > h, Y > k)` as `∫_h^∞ φ(x)·Φ((ρx - k)/√(1-ρ²)) dx` by composite
/// Simpson on `[h, 12]`, `|ρ| < 1`.
pub fn bvn_upper_quadrature(h: f64, k: f64, rho: f64) -> f64 {
    let s = (1.0 - rho * rho).sqrt();
    let f = |x: f64| density(x) * phi((rho * x - k) / s);
    let (a, b) = (h.max(-12.0), 12.0);
    let m = 20_000;
    let w = (b - a) / m as f64;
    let mut acc = f(a) + f(b);
    for i in 1..m {
        let x = a + w * i as f64;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    acc * w / 3.0
}
