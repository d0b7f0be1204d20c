//! Key-rate formulas and finite-size security bounds.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::protocol::{composable_length_real, output_length_with, KeyLengthRule};
use crate::quantum::{expected_bc, raw_error_rate};
use crate::stats;

/// Bisection tolerance for [`p_min`].
pub const P_MIN_TOL: f64 = 1e-4;

/// `h(w) = -w log2 w - (1-w) log2 (1-w)`, with `h(0) = h(1) = 0`.
pub fn binary_entropy(w: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidParameter(format!("error rate {w} outside [0, 1]")));
    }
    if w == 0.0 || w == 1.0 {
        return Ok(0.0);
    }
    Ok(-w * w.log2() - (1.0 - w) * (1.0 - w).log2())
}

/// `2 log2(1/(√2 B)) - h(w)`; negative values are returned as is.
pub fn asymptotic_rate(b: f64, w: f64) -> Result<f64> {
    if b.is_nan() || b <= 0.0 {
        return Err(Error::InvalidParameter(format!("BC value {b} must be > 0")));
    }
    Ok(2.0 * (FRAC_1_SQRT_2 / b).log2() - binary_entropy(w)?)
}

/// Rate of the noisy-EPR implementation with `M` settings.
pub fn epr_rate(p: f64, m: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || m < 2 {
        return Err(Error::InvalidParameter(format!(
            "need p in [0, 1] and M >= 2, got p = {p}, M = {m}"
        )));
    }
    asymptotic_rate(expected_bc(p, m), raw_error_rate(p))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub p: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "B")]
    pub b: f64,
    pub w: f64,
    pub rate_raw: f64,
    pub rate_clamped: f64,
}

pub const RATE_CSV_HEADER: &str = "p,M,B,w,rate_raw,rate_clamped";

impl RateRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.p, self.m, self.b, self.w, self.rate_raw, self.rate_clamped
        )
    }
}

pub fn rate_curve(m: usize, p_grid: &[f64]) -> Result<Vec<RateRow>> {
    p_grid
        .iter()
        .map(|&p| {
            let rate = epr_rate(p, m)?;
            Ok(RateRow {
                p,
                m,
                b: expected_bc(p, m),
                w: raw_error_rate(p),
                rate_raw: rate,
                rate_clamped: rate.max(0.0),
            })
        })
        .collect()
}

pub fn rates_csv(rows: &[RateRow]) -> String {
    let mut out = String::from(RATE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// `start, start + step, ..., end` computed by index so the endpoint is hit
/// exactly.
pub fn linear_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || end < start || !start.is_finite() || !end.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "grid {start}:{end}:{step} is not increasing"
        )));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize;
    if count > 10_000_000 {
        return Err(Error::TooLarge(format!("{count} grid points")));
    }
    Ok((0..=count)
        .map(|i| {
            let v = start + i as f64 * step;
            if i == count && (end - v).abs() < step * 1e-6 {
                end
            } else {
                v
            }
        })
        .collect())
}

/// The `M ∈ {2..m_max}` maximizing the rate at purity `p`, ties toward the
/// smaller `M`.
pub fn optimal_m(p: f64, m_max: usize) -> Result<(usize, f64)> {
    if m_max < 2 {
        return Err(Error::InvalidParameter(format!("m_max = {m_max} must be >= 2")));
    }
    let mut best = (2, epr_rate(p, 2)?);
    for m in 3..=m_max {
        let r = epr_rate(p, m)?;
        if r > best.1 {
            best = (m, r);
        }
    }
    Ok(best)
}

/// Smallest purity with a positive rate, by bisection to [`P_MIN_TOL`].
/// Returns the upper end of the final bracket, or `None` when even `p = 1`
/// gives no key.
pub fn p_min(m: usize) -> Result<Option<f64>> {
    if epr_rate(1.0, m)? <= 0.0 {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    if epr_rate(lo, m)? > 0.0 {
        return Ok(Some(0.0));
    }
    while hi - lo > P_MIN_TOL {
        let mid = 0.5 * (lo + hi);
        if epr_rate(mid, m)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// `log2` of [`pa_bound`].
pub fn log2_pa_bound(n: f64, n_s: f64, n_c: f64, bc_product: f64) -> f64 {
    0.5 * (n + n_s + n_c + 1.0) + bc_product.log2()
}

/// `√2^{N + N_s + N_c + 1} ⟨𝓑_1 ⋯ 𝓑_N⟩`, evaluated in the log domain.
pub fn pa_bound(n: f64, n_s: f64, n_c: f64, bc_product: f64) -> f64 {
    if bc_product == 0.0 {
        return 0.0;
    }
    log2_pa_bound(n, n_s, n_c, bc_product).exp2()
}

/// `√2^{-√N_e}`.
pub fn security_epsilon(n_e: u64) -> f64 {
    (-(n_e as f64).sqrt() * 0.5).exp2()
}

/// `3N exp(-√N_e (3M)^{-2})`, clamped to `[0, 1]`.
pub fn estimation_failure(n: u64, n_e: u64, m: usize) -> f64 {
    let mm = (3 * m) as f64;
    let ln = (3.0 * n as f64).ln() - (n_e as f64).sqrt() / (mm * mm);
    ln.exp().clamp(0.0, 1.0)
}

/// The tighter estimate `2 (N + 1) exp(-√N_e / (2M + 1)²)` for the
/// two-valued BC variable (`v_+ = M + 1/2`), clamped to `[0, 1]`.
pub fn estimation_failure_tight(n_r: u64, n_e: u64, m: usize) -> Result<f64> {
    Ok(stats::estimation_confidence(n_r.max(1), n_e, m as f64 + 0.5, 2)?.clamp(0.0, 1.0))
}

/// Smallest `N_e` with [`estimation_failure`]`(n, N_e, M) < target`.
pub fn min_estimation_pairs(n: u64, m: usize, target: f64) -> Result<u64> {
    if !(target > 0.0 && target < 1.0) || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "need N >= 1 and target in (0, 1), got {n}, {target}"
        )));
    }
    let mm = (3 * m) as f64;
    let root = mm * mm * (3.0 * n as f64 / target).ln();
    let mut n_e = (root * root).ceil().max(1.0) as u64;
    while n_e > 1 && estimation_failure(n, n_e - 1, m) < target {
        n_e -= 1;
    }
    while estimation_failure(n, n_e, m) >= target {
        n_e += 1;
    }
    Ok(n_e)
}

/// Finite-size summary for one key-length assignment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SecurityReport {
    pub rule: KeyLengthRule,
    pub n_s: u64,
    /// `√2^{-√N_e}`.
    pub epsilon: f64,
    /// Privacy-amplification bound evaluated at the emitted `N_s` with the estimated
    /// product `(B_est + N_e^{-1/4})^{N_r}`.
    pub pa_bound: f64,
    pub pa_within_epsilon: bool,
    pub est_failure: f64,
    pub est_failure_tight: f64,
    /// `N_s / N`.
    pub rate: f64,
    pub n: u64,
    pub n_r: u64,
    pub n_e: u64,
    pub n_c: u64,
    pub b_est: f64,
    #[serde(rename = "M")]
    pub m: usize,
}

impl SecurityReport {
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate(
        rule: KeyLengthRule,
        n: u64,
        n_r: u64,
        n_e: u64,
        n_c: u64,
        b_est: f64,
        m: usize,
    ) -> Result<Self> {
        if n_e == 0 {
            return Err(Error::InvalidParameter("N_e must be >= 1".into()));
        }
        let n_s = output_length_with(rule, n_r, n_c, b_est, n_e);
        let smoothed = b_est + (n_e as f64).powf(-0.25);
        let log2_bound = 0.5 * (n_r as f64 + n_s as f64 + n_c as f64 + 1.0)
            + n_r as f64 * smoothed.log2();
        let epsilon = security_epsilon(n_e);
        Ok(Self {
            rule,
            n_s,
            epsilon,
            pa_bound: log2_bound.exp2(),
            pa_within_epsilon: log2_bound <= epsilon.log2() + 1e-12,
            est_failure: estimation_failure(n, n_e, m),
            est_failure_tight: estimation_failure_tight(n_r, n_e, m)?,
            rate: if n == 0 { 0.0 } else { n_s as f64 / n as f64 },
            n,
            n_r,
            n_e,
            n_c,
            b_est,
            m,
        })
    }
}

/// `log2 pa_bound` at the real-valued composable key length, i.e. before
/// flooring. Equals `(1 - √N_e)/2` identically.
pub fn collapsed_log2_bound(n_r: u64, n_c: u64, b_est: f64, n_e: u64) -> f64 {
    let n_s = composable_length_real(n_r, n_c, b_est, n_e);
    let smoothed = b_est + (n_e as f64).powf(-0.25);
    0.5 * (n_r as f64 + n_s + n_c as f64 + 1.0) + n_r as f64 * smoothed.log2()
}

/// A joint table `P(k, c, e, g | z)` with `k` ranging over `2^{N_s}` keys.
/// Entries are stored with `z` slowest, then `k, c, e, g`.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyTable {
    n_s: u32,
    dims: [usize; 4],
    eve_settings: usize,
    entries: Vec<f64>,
}

impl KeyTable {
    /// `dims` are the sizes of `(C, E, G)`; the key alphabet is `2^{n_s}`.
    pub fn new(n_s: u32, dims: [usize; 3], eve_settings: usize, entries: Vec<f64>) -> Result<Self> {
        let dims = [1usize << n_s, dims[0], dims[1], dims[2]];
        let per_z: usize = dims.iter().product();
        if eve_settings == 0 || per_z == 0 || entries.len() != per_z * eve_settings {
            return Err(Error::Shape(format!(
                "{} entries for key table of dims {dims:?} x {eve_settings}",
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite() || *v < -1e-15) {
            return Err(Error::Invariant("negative or non-finite probability".into()));
        }
        for z in 0..eve_settings {
            let total: f64 = entries[z * per_z..(z + 1) * per_z].iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Invariant(format!(
                    "table for z = {z} sums to {total}"
                )));
            }
        }
        Ok(Self {
            n_s,
            dims,
            eve_settings,
            entries,
        })
    }

    pub fn get(&self, k: usize, c: usize, e: usize, g: usize, z: usize) -> f64 {
        let [_, nc, ne, ng] = self.dims;
        let per_z: usize = self.dims.iter().product();
        self.entries[z * per_z + ((k * nc + c) * ne + e) * ng + g]
    }

    /// Merges every value of `E` into one.
    pub fn discard_eve(&self) -> Self {
        let [nk, nc, ne, ng] = self.dims;
        let mut entries = Vec::with_capacity(nk * nc * ng * self.eve_settings);
        for z in 0..self.eve_settings {
            for k in 0..nk {
                for c in 0..nc {
                    for g in 0..ng {
                        entries.push((0..ne).map(|e| self.get(k, c, e, g, z)).sum());
                    }
                }
            }
        }
        Self {
            n_s: self.n_s,
            dims: [nk, nc, 1, ng],
            eve_settings: self.eve_settings,
            entries,
        }
    }
}

/// `Σ_{k,c,g} max_z Σ_e |P(k,c,e,g|z) - 2^{-N_s} P(c,e,g|z)|`.
pub fn key_distance_exact(t: &KeyTable) -> f64 {
    let [nk, nc, ne, ng] = t.dims;
    let ideal = 1.0 / nk as f64;
    let mut total = 0.0;
    for k in 0..nk {
        for c in 0..nc {
            for g in 0..ng {
                let mut worst = 0.0f64;
                for z in 0..t.eve_settings {
                    let mut s = 0.0;
                    for e in 0..ne {
                        let marginal: f64 = (0..nk).map(|kk| t.get(kk, c, e, g, z)).sum();
                        s += (t.get(k, c, e, g, z) - ideal * marginal).abs();
                    }
                    worst = worst.max(s);
                }
                total += worst;
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.05).unwrap() - 0.286_397).abs() < 1e-5);
        assert!(binary_entropy(1.5).is_err());
    }

    #[test]
    fn rate_anchor_points() {
        assert!((epr_rate(1.0, 100).unwrap() - 0.964_621).abs() < 1e-6);
        assert!((epr_rate(1.0, 2).unwrap() + 0.330_397).abs() < 1e-6);
        let w = 0.2;
        let at_threshold = asymptotic_rate(FRAC_1_SQRT_2, w).unwrap();
        assert!((at_threshold + binary_entropy(w).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn grid_hits_endpoint() {
        let g = linear_grid(0.9, 1.0, 0.001).unwrap();
        assert_eq!(g.len(), 101);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(linear_grid(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn bound_arithmetic() {
        assert_eq!(pa_bound(0.0, 0.0, 0.0, 0.0), 0.0);
        assert!((pa_bound(0.0, 0.0, 0.0, 1.0) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(security_epsilon(10_000), 2f64.powi(-50));
        assert!((security_epsilon(1) - FRAC_1_SQRT_2).abs() < 1e-16);
        assert_eq!(estimation_failure(1000, 1, 6), 1.0);
    }

    #[test]
    fn collapse_identity() {
        for (n_r, n_c, b, n_e) in [(10_000, 300, 0.51, 10_000), (1 << 20, 0, 0.55, 1 << 16)] {
            let l = collapsed_log2_bound(n_r, n_c, b, n_e);
            assert!((l - 0.5 * (1.0 - (n_e as f64).sqrt())).abs() < 1e-6 * l.abs());
        }
    }

    #[test]
    fn distance_extremes() {
        // Ideal: K uniform, independent of a single-valued E.
        let ideal = KeyTable::new(1, [1, 1, 1], 1, vec![0.5, 0.5]).unwrap();
        assert_eq!(key_distance_exact(&ideal), 0.0);
        // K = E: the key is fully known.
        let known = KeyTable::new(1, [1, 2, 1], 1, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert!((key_distance_exact(&known) - 1.0).abs() < 1e-15);
        assert_eq!(key_distance_exact(&known.discard_eve()), 0.0);
        assert!(KeyTable::new(1, [1, 1, 1], 1, vec![0.5, 0.6]).is_err());
    }
}
