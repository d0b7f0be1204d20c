//! Method of types over a finite alphabet `{0, ..., |V|-1}` and the
//! concentration bounds used to turn a sampled Bell estimate into a bound on
//! the product expectation of the unsampled pairs.
//!
//! Strings in `V^N` are indexed base `|V|` with the first symbol most
//! significant.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Largest number of type classes [`type_distribution`] will enumerate.
pub const MAX_TYPES: u128 = 1 << 22;

/// Largest string space [`decompose_symmetric`] will accept.
pub const MAX_STRINGS: usize = 1 << 20;

/// Tolerance for a distribution being on the `1/N` grid.
pub const GRID_TOL: f64 = 1e-9;

/// A type class, stored as integer occurrence counts. Ordering is
/// lexicographic on the counts.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Frequency {
    counts: Vec<u64>,
}

impl Frequency {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Shape("empty alphabet".into()));
        }
        if counts.iter().sum::<u64>() == 0 {
            return Err(Error::InvalidParameter("frequency of an empty string".into()));
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn alphabet(&self) -> usize {
        self.counts.len()
    }

    pub fn samples(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `q(v) = count(v) / N`.
    pub fn q(&self, v: usize) -> f64 {
        self.counts[v] as f64 / self.samples() as f64
    }

    pub fn distribution(&self) -> Vec<f64> {
        (0..self.alphabet()).map(|v| self.q(v)).collect()
    }

    /// Number of strings with this type, `N! / ∏ count(v)!`, when it fits.
    pub fn class_size(&self) -> Option<u128> {
        let mut size: u128 = 1;
        let mut placed: u128 = 0;
        for &c in &self.counts {
            for k in 1..=c as u128 {
                placed += 1;
                // size * placed / k stays integral at every step.
                size = size.checked_mul(placed)? / k;
            }
        }
        Some(size)
    }
}

pub fn freq(v: &[usize], alphabet: usize) -> Result<Frequency> {
    if v.is_empty() {
        return Err(Error::InvalidParameter("frequency of an empty string".into()));
    }
    let mut counts = vec![0u64; alphabet];
    for &s in v {
        *counts.get_mut(s).ok_or_else(|| {
            Error::InvalidParameter(format!("symbol {s} outside alphabet of size {alphabet}"))
        })? += 1;
    }
    Frequency::new(counts)
}

/// `(N + 1)^{|V| - 1}`.
pub fn type_count_bound(n: u64, alphabet: usize) -> Result<u128> {
    check_sizes(n, alphabet)?;
    u128::from(n + 1)
        .checked_pow(alphabet as u32 - 1)
        .ok_or_else(|| Error::TooLarge(format!("(N+1)^(|V|-1) for N = {n}, |V| = {alphabet}")))
}

/// Exact number of type classes, `C(N + |V| - 1, |V| - 1)`.
pub fn type_count(n: u64, alphabet: usize) -> Result<u128> {
    check_sizes(n, alphabet)?;
    let k = alphabet as u128 - 1;
    let mut c: u128 = 1;
    for i in 1..=k {
        c = c
            .checked_mul(u128::from(n) + i)
            .ok_or_else(|| Error::TooLarge("type count".into()))?
            / i;
    }
    Ok(c)
}

fn check_sizes(n: u64, alphabet: usize) -> Result<()> {
    if n == 0 || alphabet == 0 {
        return Err(Error::InvalidParameter(format!(
            "need N >= 1 and |V| >= 1, got N = {n}, |V| = {alphabet}"
        )));
    }
    Ok(())
}

/// Every type class for strings of length `n`, in increasing order.
pub fn frequencies(n: u64, alphabet: usize) -> Result<Vec<Frequency>> {
    if type_count(n, alphabet)? > MAX_TYPES {
        return Err(Error::TooLarge(format!(
            "more than {MAX_TYPES} types for N = {n}, |V| = {alphabet}"
        )));
    }
    let mut out = Vec::new();
    let mut counts = vec![0u64; alphabet];
    compositions(n, 0, &mut counts, &mut out);
    Ok(out)
}

fn compositions(left: u64, pos: usize, counts: &mut [u64], out: &mut Vec<Frequency>) {
    if pos + 1 == counts.len() {
        counts[pos] = left;
        out.push(Frequency {
            counts: counts.to_vec(),
        });
        return;
    }
    for c in 0..=left {
        counts[pos] = c;
        compositions(left - c, pos + 1, counts, out);
    }
}

fn ln_factorials(n: u64) -> Vec<f64> {
    let mut t = Vec::with_capacity(n as usize + 1);
    t.push(0.0);
    for k in 1..=n {
        t.push(t[k as usize - 1] + (k as f64).ln());
    }
    t
}

fn check_distribution(pv: &[f64]) -> Result<()> {
    if pv.is_empty() || pv.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::InvalidParameter(format!("{pv:?} is not a distribution")));
    }
    let total: f64 = pv.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("distribution sums to {total}")));
    }
    Ok(())
}

/// `ln P_Q(q) = ln N! + Σ_v [q(v)N ln P_V(v) - ln (q(v)N)!]`, `-∞` when the
/// type uses a symbol of probability zero.
fn ln_type_probability(pv: &[f64], q: &Frequency, lnf: &[f64]) -> f64 {
    let mut s = lnf[q.samples() as usize];
    for (&p, &c) in pv.iter().zip(&q.counts) {
        if c == 0 {
            continue;
        }
        if p == 0.0 {
            return f64::NEG_INFINITY;
        }
        s += c as f64 * p.ln() - lnf[c as usize];
    }
    s
}

/// Law of `Q = freq(V)` for `V ~ P_V^{⊗N}`, from the multinomial identity.
pub fn type_distribution(pv: &[f64], n: u64) -> Result<BTreeMap<Frequency, f64>> {
    check_distribution(pv)?;
    let lnf = ln_factorials(n);
    Ok(frequencies(n, pv.len())?
        .into_iter()
        .map(|q| {
            let p = ln_type_probability(pv, &q, &lnf).exp();
            (q, p)
        })
        .collect())
}

/// Whether `P_Q` is maximized at `q = P_V` (ties allowed). `P_V` must lie
/// on the `1/N` grid.
pub fn mode_is_pv(pv: &[f64], n: u64) -> Result<bool> {
    check_distribution(pv)?;
    let counts = pv
        .iter()
        .map(|&p| {
            let k = p * n as f64;
            if (k - k.round()).abs() > GRID_TOL {
                Err(Error::Precondition(format!(
                    "P_V = {pv:?} is not on the 1/{n} grid"
                )))
            } else {
                Ok(k.round() as u64)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let target = Frequency::new(counts)?;
    let lnf = ln_factorials(n);
    let at_pv = ln_type_probability(pv, &target, &lnf);
    let best = frequencies(n, pv.len())?
        .iter()
        .map(|q| ln_type_probability(pv, q, &lnf))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(at_pv >= best - 1e-12)
}

/// Decomposes a distribution over `V^N` as `Σ_q P_Q(q) P_{V|q}` and returns
/// `P_Q`. Fails when the distribution is not permutation invariant within
/// `tol`.
pub fn decompose_symmetric(
    p: &[f64],
    n: usize,
    alphabet: usize,
    tol: f64,
) -> Result<BTreeMap<Frequency, f64>> {
    let len = string_space(n, alphabet)?;
    if p.len() != len {
        return Err(Error::Shape(format!(
            "{} probabilities for {len} strings",
            p.len()
        )));
    }
    let mut mass: BTreeMap<Frequency, (f64, f64, f64)> = BTreeMap::new();
    for (idx, &pr) in p.iter().enumerate() {
        let q = freq(&digits(idx, n, alphabet), alphabet)?;
        let e = mass
            .entry(q)
            .or_insert((0.0, f64::INFINITY, f64::NEG_INFINITY));
        e.0 += pr;
        e.1 = e.1.min(pr);
        e.2 = e.2.max(pr);
    }
    let mut out = BTreeMap::new();
    for (q, (total, lo, hi)) in mass {
        if hi - lo > tol {
            return Err(Error::Precondition(format!(
                "not permutation invariant on type {:?} (spread {:e})",
                q.counts(),
                hi - lo
            )));
        }
        out.insert(q, total);
    }
    Ok(out)
}

/// `Σ_q w(q) P_{V|q}` as a dense distribution over `V^N`.
pub fn mixture_of_types(
    weights: &BTreeMap<Frequency, f64>,
    n: usize,
    alphabet: usize,
) -> Result<Vec<f64>> {
    let len = string_space(n, alphabet)?;
    let mut out = vec![0.0; len];
    for (idx, slot) in out.iter_mut().enumerate() {
        let q = freq(&digits(idx, n, alphabet), alphabet)?;
        if let Some(w) = weights.get(&q) {
            let size = q
                .class_size()
                .ok_or_else(|| Error::TooLarge("type class size".into()))?;
            *slot = w / size as f64;
        }
    }
    Ok(out)
}

fn string_space(n: usize, alphabet: usize) -> Result<usize> {
    alphabet
        .checked_pow(n as u32)
        .filter(|&l| l <= MAX_STRINGS && n > 0)
        .ok_or_else(|| Error::TooLarge(format!("|V|^N for N = {n}, |V| = {alphabet}")))
}

/// Base-`alphabet` digits of `idx`, most significant first.
pub fn digits(mut idx: usize, n: usize, alphabet: usize) -> Vec<usize> {
    let mut d = vec![0; n];
    for slot in d.iter_mut().rev() {
        *slot = idx % alphabet;
        idx /= alphabet;
    }
    d
}

/// Bernstein tail `2 exp(-ω²/4)` for
/// `|ΣV - N⟨V⟩| > ω √(⟨V²⟩ N)`. Independent of the sample count.
pub fn bernstein_tail(omega: f64) -> Result<f64> {
    if omega.is_nan() || omega <= 0.0 {
        return Err(Error::InvalidParameter(format!("omega = {omega} must be > 0")));
    }
    Ok(2.0 * (-omega * omega / 4.0).exp())
}

/// Lifts an i.i.d. bound `ε` on a symmetric event to every permutation
/// invariant distribution: `ε (N + 1)^{|V| - 1}`.
pub fn symmetric_event_bound(epsilon: f64, n: u64, alphabet: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} outside [0, 1]")));
    }
    check_sizes(n, alphabet)?;
    Ok(epsilon * ((alphabet - 1) as f64 * ((n + 1) as f64).ln()).exp())
}

/// Probability that `⟨V_1 ⋯ V_{N1}⟩ ≤ (V_est + N2^{-1/4})^{N1}` fails:
/// `2 (N1 + N2 + 1)^{|V| - 1} exp(-√N2 / (4 v_+²))`. Not clamped, so values
/// above one mean the bound is vacuous.
pub fn estimation_confidence(n1: u64, n2: u64, v_plus: f64, alphabet: usize) -> Result<f64> {
    if n1 == 0 || n2 == 0 || v_plus.is_nan() || v_plus <= 0.0 || alphabet == 0 {
        return Err(Error::InvalidParameter(format!(
            "need N1, N2 >= 1, v_+ > 0, |V| >= 1; got {n1}, {n2}, {v_plus}, {alphabet}"
        )));
    }
    let ln_types = (alphabet - 1) as f64 * ((n1 + n2 + 1) as f64).ln();
    let decay = (n2 as f64).sqrt() / (4.0 * v_plus * v_plus);
    Ok((std::f64::consts::LN_2 + ln_types - decay).exp())
}

/// `(V_est + N2^{-1/4})^{N1}`, the estimated upper bound on the product
/// expectation.
pub fn product_upper_estimate(v_est: f64, n1: u64, n2: u64) -> f64 {
    (v_est + (n2 as f64).powf(-0.25)).powf(n1 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn freq_counts_symbols() {
        let q = freq(&[0, 0, 1, 1], 2).unwrap();
        assert_eq!(q.distribution(), vec![0.5, 0.5]);
        assert_eq!(freq(&[2, 2, 2], 3).unwrap().counts(), &[0, 0, 3]);
        assert!(freq(&[], 2).is_err());
        assert!(freq(&[3], 2).is_err());
    }

    #[test]
    fn type_counts() {
        assert_eq!(type_count_bound(4, 2).unwrap(), 5);
        assert_eq!(type_count(4, 2).unwrap(), 5);
        assert_eq!(type_count_bound(2, 3).unwrap(), 9);
        assert_eq!(type_count(2, 3).unwrap(), 6);
        assert_eq!(type_count_bound(17, 1).unwrap(), 1);
        assert_eq!(frequencies(2, 3).unwrap().len(), 6);
    }

    #[test]
    fn class_sizes_are_binomial() {
        let sizes: Vec<u128> = frequencies(4, 2)
            .unwrap()
            .iter()
            .map(|q| q.class_size().unwrap())
            .collect();
        assert_eq!(sizes, vec![1, 4, 6, 4, 1]);
    }

    #[test]
    fn fair_coin_pair() {
        let d = type_distribution(&[0.5, 0.5], 2).unwrap();
        let v: Vec<f64> = d.values().copied().collect();
        assert!((v[0] - 0.25).abs() < 1e-15);
        assert!((v[1] - 0.5).abs() < 1e-15);
        assert!((v[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn point_mass_type() {
        let d = type_distribution(&[0.0, 1.0, 0.0], 5).unwrap();
        let q = Frequency::new(vec![0, 5, 0]).unwrap();
        assert_eq!(d[&q], 1.0);
        assert_eq!(d.values().filter(|&&p| p > 0.0).count(), 1);
    }

    #[test]
    fn mode_requires_grid() {
        assert!(mode_is_pv(&[0.75, 0.25], 4).unwrap());
        assert!(matches!(
            mode_is_pv(&[0.3, 0.7], 4),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn bound_arithmetic() {
        assert_eq!(bernstein_tail(4.0).unwrap(), 2.0 * (-4.0f64).exp());
        assert!((bernstein_tail(1e-9).unwrap() - 2.0).abs() < 1e-12);
        assert!(bernstein_tail(0.0).is_err());
        assert_eq!(symmetric_event_bound(0.0, 10, 2).unwrap(), 0.0);
        assert!((symmetric_event_bound(1e-3, 100, 2).unwrap() - 0.101).abs() < 1e-12);
        let c = estimation_confidence(1, 10_000, 6.5, 2).unwrap();
        let expect = 2.0 * 10_002.0 * (-100.0f64 / 169.0).exp();
        assert!((c - expect).abs() / expect < 1e-12);
        assert!(estimation_confidence(10, 1 << 40, 6.5, 2).unwrap() < 1e-100);
    }

    #[test]
    fn digits_most_significant_first() {
        assert_eq!(digits(5, 3, 2), vec![1, 0, 1]);
        assert_eq!(digits(7, 2, 3), vec![2, 1]);
    }
}
