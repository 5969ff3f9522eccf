use super::binom_pmf_vec;
use crate::error::{Result, RoseError};
use serde::{Deserialize, Serialize};

/// Distribution on consecutive integers `offset, offset+1, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeDist {
    pub offset: i64,
    pub mass: Vec<f64>,
}

impl LatticeDist {
    pub fn new(offset: i64, mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(RoseError::invalid(
                "lattice distribution needs at least one point",
            ));
        }
        if mass.iter().any(|&w| !(w >= 0.0)) {
            return Err(RoseError::invalid("lattice weights must be nonnegative"));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(RoseError::invalid(format!(
                "lattice weights sum to {total}, not 1"
            )));
        }
        Ok(LatticeDist { offset, mass })
    }

    pub fn point(at: i64) -> Self {
        LatticeDist {
            offset: at,
            mass: vec![1.0],
        }
    }

    pub fn min(&self) -> i64 {
        self.offset
    }

    pub fn max(&self) -> i64 {
        self.offset + self.mass.len() as i64 - 1
    }

    pub fn prob(&self, d: i64) -> f64 {
        if d < self.min() || d > self.max() {
            0.0
        } else {
            self.mass[(d - self.offset) as usize]
        }
    }

    /// `P(D <= x)`.
    pub fn cdf(&self, x: i64) -> f64 {
        if x < self.min() {
            return 0.0;
        }
        if x >= self.max() {
            return 1.0;
        }
        self.mass[..=(x - self.offset) as usize].iter().sum()
    }

    /// `P(D > x)`, summed from the upper end to keep small tails accurate.
    pub fn sf(&self, x: i64) -> f64 {
        if x >= self.max() {
            return 0.0;
        }
        if x < self.min() {
            return 1.0;
        }
        self.mass[(x - self.offset + 1) as usize..]
            .iter()
            .rev()
            .sum()
    }

    /// Cumulative masses, `out[i] = P(D <= offset + i)`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.mass
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .map(|(i, w)| (self.offset + i as i64) as f64 * w)
            .sum()
    }
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Distribution of `A - B` with `A ~ Bin(n_a, p_a)` and `B ~ Bin(n_b, p_b)`
/// independent. Support is `[-n_b, n_a]`.
pub fn binom_diff_dist(n_a: u32, p_a: f64, n_b: u32, p_b: f64) -> Result<LatticeDist> {
    let a = binom_pmf_vec(n_a, p_a)?;
    let mut b = binom_pmf_vec(n_b, p_b)?;
    b.reverse();
    Ok(LatticeDist {
        offset: -i64::from(n_b),
        mass: convolve(&a, &b),
    })
}

/// Distribution of the sum of independent draws from `a` and `b`.
pub fn lattice_convolve(a: &LatticeDist, b: &LatticeDist) -> LatticeDist {
    LatticeDist {
        offset: a.offset + b.offset,
        mass: convolve(&a.mass, &b.mass),
    }
}
