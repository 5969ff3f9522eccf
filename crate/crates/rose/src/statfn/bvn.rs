// Drezner-Wesolowsky bivariate normal integral with Genz's double precision
// refinements (the bvnd routine of tvpack).
#![allow(clippy::excessive_precision)]

use super::norm_cdf;
use crate::error::{Result, RoseError};
use std::f64::consts::PI;

// (weight, abscissa) pairs on [-1, 0]; mirrored to [0, 1] at evaluation time
const GL6: [(f64, f64); 3] = [
    (0.1713244923791705e+00, -0.9324695142031522e+00),
    (0.3607615730481384e+00, -0.6612093864662647e+00),
    (0.4679139345726904e+00, -0.2386191860831970e+00),
];

const GL12: [(f64, f64); 6] = [
    (0.4717533638651177e-01, -0.9815606342467191e+00),
    (0.1069393259953183e+00, -0.9041172563704750e+00),
    (0.1600783285433464e+00, -0.7699026741943050e+00),
    (0.2031674267230659e+00, -0.5873179542866171e+00),
    (0.2334925365383547e+00, -0.3678314989981802e+00),
    (0.2491470458134029e+00, -0.1252334085114692e+00),
];

const GL20: [(f64, f64); 10] = [
    (0.1761400713915212e-01, -0.9931285991850949e+00),
    (0.4060142980038694e-01, -0.9639719272779138e+00),
    (0.6267204833410906e-01, -0.9122344282513259e+00),
    (0.8327674157670475e-01, -0.8391169718222188e+00),
    (0.1019301198172404e+00, -0.7463319064601508e+00),
    (0.1181945319615184e+00, -0.6360536807265150e+00),
    (0.1316886384491766e+00, -0.5108670019508271e+00),
    (0.1420961093183821e+00, -0.3737060887154196e+00),
    (0.1491729864726037e+00, -0.2277858511416451e+00),
    (0.1527533871307259e+00, -0.7652652113349733e-01),
];

const TWO_PI: f64 = 2.0 * PI;

/// `P(Z1 > h, Z2 > k)` for a standardized bivariate normal with correlation
/// `rho`. Either limit may be `±∞`.
pub fn bvn_upper(h: f64, k: f64, rho: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(RoseError::Domain(format!(
            "correlation must lie in [-1,1], got {rho}"
        )));
    }
    if h.is_nan() || k.is_nan() {
        return Err(RoseError::Domain("bivariate normal limit is NaN".into()));
    }
    if h == f64::INFINITY || k == f64::INFINITY {
        return Ok(0.0);
    }
    if h == f64::NEG_INFINITY {
        return Ok(norm_cdf(-k));
    }
    if k == f64::NEG_INFINITY {
        return Ok(norm_cdf(-h));
    }
    Ok(bvnd(h, k, rho).clamp(0.0, 1.0))
}

fn bvnd(dh: f64, dk: f64, r: f64) -> f64 {
    let h = dh;
    let mut k = dk;
    let mut hk = h * k;
    let ar = r.abs();
    let quad: &[(f64, f64)] = if ar < 0.3 {
        &GL6
    } else if ar < 0.75 {
        &GL12
    } else {
        &GL20
    };

    if ar < 0.925 {
        let mut bvn = 0.0;
        if ar > 0.0 {
            let hs = (h * h + k * k) / 2.0;
            let asr = r.asin();
            for &(w, x) in quad {
                for s in [-1.0, 1.0] {
                    let sn = (asr * (s * x + 1.0) / 2.0).sin();
                    bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn *= asr / (2.0 * TWO_PI);
        }
        return bvn + norm_cdf(-h) * norm_cdf(-k);
    }

    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    let mut bvn = 0.0;
    if ar < 1.0 {
        let a_s = (1.0 - r) * (1.0 + r);
        let mut a = a_s.sqrt();
        let b_s = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        let asr = -(b_s / a_s + hk) / 2.0;
        if asr > -100.0 {
            bvn = a
                * asr.exp()
                * (1.0 - c * (b_s - a_s) * (1.0 - d * b_s / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
        }
        if -hk < 100.0 {
            let b = b_s.sqrt();
            bvn -= (-hk / 2.0).exp()
                * TWO_PI.sqrt()
                * norm_cdf(-b / a)
                * b
                * (1.0 - c * b_s * (1.0 - d * b_s / 5.0) / 3.0);
        }
        a /= 2.0;
        for &(w, x) in quad {
            for s in [-1.0, 1.0] {
                let xs = (a * (s * x + 1.0)).powi(2);
                let rs = (1.0 - xs).sqrt();
                let asr = -(b_s / xs + hk) / 2.0;
                if asr > -100.0 {
                    bvn += a
                        * w
                        * asr.exp()
                        * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                            - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
        }
        bvn = -bvn / TWO_PI;
    }
    if r > 0.0 {
        bvn + norm_cdf(-h.max(k))
    } else {
        let mut out = -bvn;
        if k > h {
            if h < 0.0 {
                out += norm_cdf(k) - norm_cdf(h);
            } else {
                out += norm_cdf(-h) - norm_cdf(-k);
            }
        }
        out
    }
}
