//! Linear functionals on the `M × M` estimation block of a box.
//!
//! `μ` carries weight `1/(4M)` on every entry of the `2M` estimation blocks;
//! `ν` carries `±1/2` on the entries where the BC error term
//! `a ⊕ b ⊕ I{x=M-1}I{y=0}` equals 1. The signs of `ν` are the unique choice
//! (up to the relabeling symmetry) for which `(μ + ν)·P = P(A=0|X=0)` on every
//! no-signaling box: `+` on the first row of blocks, `-` on the remaining
//! diagonal blocks, `+` on the remaining off-diagonal blocks, and the
//! diagonal pattern `diag(+, -)` on the wrapped block `(M-1, 0)`.

use super::{bc_offset, check_settings, in_estimation_set, ConditionalBox, NBox};
use crate::error::{Error, Result};

/// A real vector indexed by `(a, b, x, y)` with `y < M`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualVector {
    m: usize,
    entries: Vec<f64>,
}

impl DualVector {
    fn from_fn(m: usize, f: impl Fn(u8, u8, usize, usize) -> f64) -> Self {
        let mut entries = Vec::with_capacity(4 * m * m);
        for a in 0..2u8 {
            for b in 0..2u8 {
                for x in 0..m {
                    for y in 0..m {
                        entries.push(f(a, b, x, y));
                    }
                }
            }
        }
        Self { m, entries }
    }

    pub fn settings(&self) -> usize {
        self.m
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, a: u8, b: u8, x: usize, y: usize) -> f64 {
        self.entries[((usize::from(a) * 2 + usize::from(b)) * self.m + x) * self.m + y]
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.m, other.m, "dual vectors of different shapes");
        Self {
            m: self.m,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&u, &v)| f(u, v))
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |u, v| u + v)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |u, v| u - v)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            m: self.m,
            entries: self.entries.iter().map(|v| v * factor).collect(),
        }
    }

    /// Component-wise absolute value.
    pub fn abs(&self) -> Self {
        Self {
            m: self.m,
            entries: self.entries.iter().map(|v| v.abs()).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Contraction with the estimation block of `p` (Bob's raw-key column is
    /// ignored).
    pub fn dot(&self, p: &ConditionalBox) -> Result<f64> {
        if p.settings() != self.m {
            return Err(Error::Shape(format!(
                "dual vector for M = {} applied to box with M = {}",
                self.m,
                p.settings()
            )));
        }
        let m = self.m;
        let mut total = 0.0;
        for a in 0..2u8 {
            for b in 0..2u8 {
                for x in 0..m {
                    for y in 0..m {
                        total += self.get(a, b, x, y) * p.get(a, b, x, y);
                    }
                }
            }
        }
        Ok(total)
    }
}

pub fn mu(m: usize) -> Result<DualVector> {
    check_settings(m)?;
    let w = 1.0 / (4 * m) as f64;
    Ok(DualVector::from_fn(m, |_, _, x, y| {
        if in_estimation_set(x, y, m) {
            w
        } else {
            0.0
        }
    }))
}

pub fn nu(m: usize) -> Result<DualVector> {
    check_settings(m)?;
    Ok(DualVector::from_fn(m, |a, b, x, y| {
        if !in_estimation_set(x, y, m) {
            return 0.0;
        }
        if bc_offset(x, y, m) == 1 {
            return match (a, b) {
                (0, 0) => 0.5,
                (1, 1) => -0.5,
                _ => 0.0,
            };
        }
        let sign = if y == x && x > 0 { -1.0 } else { 1.0 };
        match (a, b) {
            (0, 1) => 0.5 * sign,
            (1, 0) => -0.5 * sign,
            _ => 0.0,
        }
    }))
}

/// `β_a = μ + (-1)^a ν`.
pub fn beta_a(m: usize, a: u8) -> Result<DualVector> {
    let nu = nu(m)?;
    let signed = if a == 0 { nu } else { nu.scale(-1.0) };
    Ok(mu(m)?.add(&signed))
}

/// `β = μ + |ν|`.
pub fn beta(m: usize) -> Result<DualVector> {
    Ok(mu(m)?.add(&nu(m)?.abs()))
}

/// N-fold tensor product of dual vectors, laid out like an [`NBox`]
/// restricted to `y_n < M`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualTensor {
    n: usize,
    m: usize,
    entries: Vec<f64>,
}

impl DualTensor {
    pub fn product(factors: &[&DualVector]) -> Result<Self> {
        let n = factors.len();
        let Some(first) = factors.first() else {
            return Err(Error::Shape("empty tensor product".into()));
        };
        let m = first.m;
        if factors.iter().any(|f| f.m != m) {
            return Err(Error::Shape("tensor factors of different M".into()));
        }
        let len = (4 * m * m)
            .checked_pow(n as u32)
            .filter(|&l| l <= 1 << 26)
            .ok_or_else(|| Error::TooLarge(format!("tensor of {n} factors with M = {m}")))?;
        let ms = m.pow(n as u32);
        let mut entries = Vec::with_capacity(len);
        for idx in 0..len {
            let y_idx = idx % ms;
            let x_idx = (idx / ms) % ms;
            let o = idx / (ms * ms);
            let (a_idx, b_idx) = (o >> n, o & ((1 << n) - 1));
            let mut v = 1.0;
            for (k, f) in factors.iter().enumerate() {
                let shift = n - 1 - k;
                let a = ((a_idx >> shift) & 1) as u8;
                let b = ((b_idx >> shift) & 1) as u8;
                let p = m.pow(shift as u32);
                v *= f.get(a, b, (x_idx / p) % m, (y_idx / p) % m);
            }
            entries.push(v);
        }
        Ok(Self { n, m, entries })
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Largest component of `self - other`.
    pub fn max_excess_over(&self, other: &Self) -> f64 {
        assert_eq!((self.n, self.m), (other.n, other.m));
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(u, v)| u - v)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Contraction with the estimation block of an N-pair box.
    pub fn dot(&self, p: &NBox) -> Result<f64> {
        if p.pairs() != self.n || p.settings() != self.m {
            return Err(Error::Shape(format!(
                "tensor (N = {}, M = {}) applied to box (N = {}, M = {})",
                self.n,
                self.m,
                p.pairs(),
                p.settings()
            )));
        }
        let (n, m, ny) = (self.n, self.m, p.bob_settings());
        let ms = m.pow(n as u32);
        let remap = base_remap(n, m, ny);
        let layout = p.layout();
        let mut total = 0.0;
        for o in 0..(1usize << (2 * n)) {
            for x_idx in 0..ms {
                for (y_idx, &y_full) in remap.iter().enumerate() {
                    let t = (o * ms + x_idx) * ms + y_idx;
                    let s = x_idx * ny.pow(n as u32) + y_full;
                    total += self.entries[t] * p.entries()[layout.index(o, s)];
                }
            }
        }
        Ok(total)
    }
}

/// Maps base-`m` digit strings of length `n` to the same digits read in
/// base `ny`.
pub(crate) fn base_remap(n: usize, m: usize, ny: usize) -> Vec<usize> {
    (0..m.pow(n as u32))
        .map(|v| {
            let mut out = 0;
            for k in (0..n).rev() {
                out = out * ny + (v / m.pow(k as u32)) % m;
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_is_mu_plus_abs_nu() {
        for m in 2..=6 {
            let d = beta(m).unwrap().sub(&mu(m).unwrap()).sub(&nu(m).unwrap().abs());
            assert!(d.max_abs() < 1e-15);
        }
    }

    #[test]
    fn beta_a_sum_is_twice_mu() {
        for m in 2..=6 {
            let s = beta_a(m, 0).unwrap().add(&beta_a(m, 1).unwrap());
            assert!(s.sub(&mu(m).unwrap().scale(2.0)).max_abs() < 1e-16);
        }
    }

    #[test]
    fn abs_nu_marks_bc_errors() {
        let m = 4;
        let n = nu(m).unwrap().abs();
        for a in 0..2u8 {
            for b in 0..2u8 {
                for x in 0..m {
                    for y in 0..m {
                        let err = a ^ b ^ bc_offset(x, y, m) == 1;
                        let expect = if in_estimation_set(x, y, m) && err { 0.5 } else { 0.0 };
                        assert_eq!(n.get(a, b, x, y), expect);
                    }
                }
            }
        }
    }

    #[test]
    fn base_remap_reads_digits() {
        // base 3 "12" = 5 -> base 4 "12" = 6
        assert_eq!(base_remap(2, 3, 4)[5], 6);
        assert_eq!(base_remap(1, 3, 3), vec![0, 1, 2]);
    }

    #[test]
    fn single_factor_tensor_matches_vector() {
        let b = beta(3).unwrap();
        let t = DualTensor::product(&[&b]).unwrap();
        assert_eq!(t.entries(), b.entries());
    }
}
