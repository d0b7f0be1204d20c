//! Eavesdropper linear programs: the largest probability with which a
//! no-signaling third party can guess Alice's outcome string, optimized over
//! every tripartite extension of a given Alice–Bob box.
//!
//! Eve has one setting and `2^N` outcomes, outcome `e` meaning "Alice's
//! string is `e`". The extension is restricted to Bob's estimation inputs
//! `y < M`; dropping his raw-key input only removes constraints.

mod simplex;

pub use simplex::{
    solve_lp, solve_lp_with, LpProblem, LpSolution, LpStatus, PivotRule, FEASIBILITY_TOL,
    MAX_TABLEAU_ENTRIES, OPTIMALITY_TOL,
};

use serde::Serialize;

use crate::boxcore::{beta, beta_a, ConditionalBox, DualTensor, Layout, NBox, SignalingReport};
use crate::error::{Error, Result};
use crate::protocol::{apply_hash, TwoUniversalHash};
use crate::security::KeyTable;

pub const MAX_LP_PAIRS: usize = 2;
pub const MAX_LP_SETTINGS: usize = 4;
pub const TRIPARTITE_TOL: f64 = 1e-8;
/// Slack allowed between the guessing probability and the BC product.
pub const MONOGAMY_TOL: f64 = 1e-7;

/// `P(a, b, e | x, y, z)` for `N` pairs and one eavesdropper. Entries are
/// row-major over `(a-string, b-string, e, x-string, y-string, z)`, with
/// Bob's inputs restricted to `0..M`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TripartiteBox {
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    eve_outcomes: usize,
    eve_settings: usize,
    entries: Vec<f64>,
}

impl TripartiteBox {
    pub fn new(
        n: usize,
        m: usize,
        eve_outcomes: usize,
        eve_settings: usize,
        entries: Vec<f64>,
    ) -> Result<Self> {
        if n == 0 || m < 2 || eve_outcomes == 0 || eve_settings == 0 {
            return Err(Error::Shape(format!(
                "tripartite box with N = {n}, M = {m}, |E| = {eve_outcomes}, |Z| = {eve_settings}"
            )));
        }
        let t = Self {
            n,
            m,
            eve_outcomes,
            eve_settings,
            entries,
        };
        if t.entries.len() != t.layout().len() {
            return Err(Error::Shape(format!(
                "{} entries, expected {}",
                t.entries.len(),
                t.layout().len()
            )));
        }
        if t.entries.iter().any(|v| !v.is_finite() || *v < -TRIPARTITE_TOL) {
            return Err(Error::Invariant("negative or non-finite probability".into()));
        }
        let report = t.check_nonsignaling(TRIPARTITE_TOL);
        if report.normalization_residual > TRIPARTITE_TOL || !report.pass {
            return Err(Error::Invariant(format!(
                "tripartite box not normalized / no-signaling (residuals {:.2e}, {:.2e})",
                report.normalization_residual, report.max_residual
            )));
        }
        Ok(t)
    }

    pub fn pairs(&self) -> usize {
        self.n
    }

    pub fn settings(&self) -> usize {
        self.m
    }

    pub fn eve_outcomes(&self) -> usize {
        self.eve_outcomes
    }

    pub fn eve_settings(&self) -> usize {
        self.eve_settings
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub(crate) fn layout(&self) -> Layout {
        let (n, m) = (self.n, self.m);
        let mut outcomes = vec![2; 2 * n];
        outcomes.push(self.eve_outcomes);
        let mut settings = vec![m; 2 * n];
        settings.push(self.eve_settings);
        Layout::new(outcomes, settings)
    }

    fn offsets(&self, ab: usize, e: usize, xy: usize, z: usize) -> usize {
        let layout = self.layout();
        layout.index(ab * self.eve_outcomes + e, xy * self.eve_settings + z)
    }

    /// Entry for string indices `a`, `b` (first pair most significant) and
    /// setting indices `x`, `y` in base `M`.
    pub fn get(&self, a: usize, b: usize, e: usize, x: usize, y: usize, z: usize) -> f64 {
        let ms = self.m.pow(self.n as u32);
        self.entries[self.offsets((a << self.n) | b, e, x * ms + y, z)]
    }

    /// No-signaling among all `2N + 1` parties.
    pub fn check_nonsignaling(&self, tol: f64) -> SignalingReport {
        SignalingReport::build(&self.layout(), &self.entries, tol)
    }

    /// The Alice–Bob box obtained by ignoring Eve (at `z = 0`).
    pub fn ab_marginal(&self) -> Result<NBox> {
        let (n, m) = (self.n, self.m);
        let ms = m.pow(n as u32);
        let strings = 1usize << n;
        let mut entries = Vec::with_capacity(strings * strings * ms * ms);
        for a in 0..strings {
            for b in 0..strings {
                for x in 0..ms {
                    for y in 0..ms {
                        entries.push((0..self.eve_outcomes).map(|e| self.get(a, b, e, x, y, 0)).sum());
                    }
                }
            }
        }
        NBox::new(n, m, false, entries)
    }

    /// `P(a, e | x, z)`, read at Bob's input `0...0`.
    pub fn alice_eve(&self, a: usize, e: usize, x: usize, z: usize) -> f64 {
        (0..1usize << self.n).map(|b| self.get(a, b, e, x, 0, z)).sum()
    }

    /// `Σ_e P(A = e, E = e | x, z)`.
    pub fn guessing_probability(&self, x: usize, z: usize) -> f64 {
        (0..self.eve_outcomes.min(1 << self.n))
            .map(|e| self.alice_eve(e, e, x, z))
            .sum()
    }

    /// Product with an ignorant Eve who always outputs `0`.
    pub fn with_trivial_eve(p: &NBox) -> Result<Self> {
        let (n, m) = (p.pairs(), p.settings());
        let eve = 1usize << n;
        let ms = m.pow(n as u32);
        let strings = 1usize << n;
        let mut entries = vec![0.0; strings * strings * eve * ms * ms];
        let t = Self {
            n,
            m,
            eve_outcomes: eve,
            eve_settings: 1,
            entries: Vec::new(),
        };
        for a in 0..strings {
            for b in 0..strings {
                for x in 0..ms {
                    for y in 0..ms {
                        let v = p.get(&bits(a, n), &bits(b, n), &digits(x, n, m), &digits(y, n, m));
                        entries[t.offsets((a << n) | b, 0, x * ms + y, 0)] = v;
                    }
                }
            }
        }
        Self::new(n, m, eve, 1, entries)
    }
}

fn bits(v: usize, n: usize) -> Vec<u8> {
    (0..n).map(|k| ((v >> (n - 1 - k)) & 1) as u8).collect()
}

fn digits(v: usize, n: usize, m: usize) -> Vec<usize> {
    (0..n).map(|k| (v / m.pow((n - 1 - k) as u32)) % m).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Guessing {
    pub value: f64,
    pub witness: TripartiteBox,
    /// `max_a P(A = a | x_target)`, a lower bound on `value`.
    pub mode_probability: f64,
    pub iterations: usize,
    pub primal_residual: f64,
}

/// Largest `Σ_e P(A = e, E = e | x_target)` over no-signaling extensions.
/// The extension polytope is highly degenerate, so this uses steepest-edge
/// pricing (with Bland's rule on long degenerate runs).
pub fn max_guessing(p: &NBox, x_target: &[usize]) -> Result<Guessing> {
    max_guessing_with(p, x_target, PivotRule::SteepestEdge)
}

pub fn max_guessing_single(p: &ConditionalBox, x_target: usize) -> Result<Guessing> {
    max_guessing(&NBox::from_single(p), &[x_target])
}

pub fn max_guessing_with(p: &NBox, x_target: &[usize], rule: PivotRule) -> Result<Guessing> {
    let (n, m) = (p.pairs(), p.settings());
    if n > MAX_LP_PAIRS || m > MAX_LP_SETTINGS {
        return Err(Error::TooLarge(format!(
            "guessing LP supports N <= {MAX_LP_PAIRS}, M <= {MAX_LP_SETTINGS}; got N = {n}, M = {m}"
        )));
    }
    if x_target.len() != n || x_target.iter().any(|&x| x >= m) {
        return Err(Error::Shape(format!("target {x_target:?} for N = {n}, M = {m}")));
    }
    let report = p.check_nonsignaling(TRIPARTITE_TOL);
    if !report.pass || report.normalization_residual > TRIPARTITE_TOL {
        return Err(Error::Precondition(format!(
            "Alice-Bob box is not no-signaling (residual {:.2e})",
            report.max_residual
        )));
    }

    let parties = 2 * n;
    let eve = 1usize << n;
    let ab = 1usize << parties;
    let ms = m.pow(n as u32);
    let s_space = ms * ms;
    let target = |o: usize, s: usize| {
        let (a, b, x, y) = (o >> n, o & ((1 << n) - 1), s / ms, s % ms);
        p.get(&bits(a, n), &bits(b, n), &digits(x, n, m), &digits(y, n, m))
    };
    // Free sub-boxes Q_e for e < E-1; the last one is P - Σ_e Q_e, kept
    // non-negative by one slack per entry.
    let free = eve - 1;
    let var = |o: usize, e: usize, s: usize| (o * free + e) * s_space + s;
    let slack = |o: usize, s: usize| ab * free * s_space + o * s_space + s;
    let vars = ab * free * s_space + ab * s_space;

    let x_idx = digits_to_index(x_target, m);
    let s0 = x_idx * ms;
    let last = eve - 1;
    let mut objective = vec![0.0; vars];
    let mut constant = 0.0;
    for b in 0..1usize << n {
        for e in 0..free {
            objective[var((e << n) | b, e, s0)] += 1.0;
            objective[var((last << n) | b, e, s0)] -= 1.0;
        }
        constant += target((last << n) | b, s0);
    }
    let mut lp = LpProblem::new(objective);
    for o in 0..ab {
        for s in 0..s_space {
            let mut terms: Vec<(usize, f64)> = (0..free).map(|e| (var(o, e, s), 1.0)).collect();
            terms.push((slack(o, s), 1.0));
            lp.add_sparse_row(&terms, target(o, s));
        }
    }
    // Each free sub-box is no-signaling among Alice's and Bob's systems;
    // with one Eve setting this also fixes Eve's marginal. The last
    // sub-box inherits the property from P.
    for e in 0..free {
        for k in 0..parties {
            let o_bit = 1usize << (parties - 1 - k);
            let s_place = m.pow((parties - 1 - k) as u32);
            for o in (0..ab).filter(|o| o & o_bit == 0) {
                for s in (0..s_space).filter(|s| (s / s_place) % m == 0) {
                    for t in 1..m {
                        let moved = s + t * s_place;
                        lp.add_sparse_row(
                            &[
                                (var(o, e, moved), 1.0),
                                (var(o | o_bit, e, moved), 1.0),
                                (var(o, e, s), -1.0),
                                (var(o | o_bit, e, s), -1.0),
                            ],
                            0.0,
                        );
                    }
                }
            }
        }
    }

    let sol = solve_lp_with(&lp, rule)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Lp(format!(
            "guessing LP is {:?}; an ignorant Eve is always feasible",
            sol.status
        )));
    }
    let layout_len = ab * eve * s_space;
    let mut entries = vec![0.0; layout_len];
    for o in 0..ab {
        for s in 0..s_space {
            for e in 0..free {
                entries[(o * eve + e) * s_space + s] = sol.solution[var(o, e, s)];
            }
            entries[(o * eve + last) * s_space + s] = sol.solution[slack(o, s)];
        }
    }
    let value = sol.optimum + constant;
    let witness = TripartiteBox::new(n, m, eve, 1, entries)?;
    let mode_probability = (0..1usize << n)
        .map(|a| witness.ab_marginal_alice(a, x_idx))
        .fold(0.0, f64::max);
    if value < mode_probability - TRIPARTITE_TOL {
        return Err(Error::Invariant(format!(
            "LP optimum {value} below the mode probability {mode_probability}"
        )));
    }
    Ok(Guessing {
        value,
        witness,
        mode_probability,
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
    })
}

impl TripartiteBox {
    fn ab_marginal_alice(&self, a: usize, x: usize) -> f64 {
        (0..self.eve_outcomes).map(|e| self.alice_eve(a, e, x, 0)).sum()
    }
}

fn digits_to_index(d: &[usize], m: usize) -> usize {
    d.iter().fold(0, |acc, &v| acc * m + v)
}

/// Largest component of `⊗ β_{a_i} - β^{⊗n}` over all outcome patterns.
pub fn beta_monotonicity_check(m: usize, n: usize) -> Result<f64> {
    if !(1..=3).contains(&n) || !(2..=MAX_LP_SETTINGS).contains(&m) {
        return Err(Error::InvalidParameter(format!(
            "monotonicity check needs 1 <= n <= 3 and 2 <= M <= {MAX_LP_SETTINGS}"
        )));
    }
    let b = beta(m)?;
    let full = DualTensor::product(&vec![&b; n])?;
    let signed = [beta_a(m, 0)?, beta_a(m, 1)?];
    let mut worst = f64::NEG_INFINITY;
    for pattern in 0..1usize << n {
        let factors: Vec<_> = (0..n).map(|k| &signed[(pattern >> k) & 1]).collect();
        worst = worst.max(DualTensor::product(&factors)?.max_excess_over(&full));
    }
    Ok(worst)
}

/// Joint table of `(K, C, E, G)` when the raw key is Alice's string at
/// input `0...0`, nothing is disclosed for error correction and `G` is a
/// uniformly random Toeplitz hash to `n_s` bits.
pub fn key_table(t: &TripartiteBox, n_s: u32) -> Result<KeyTable> {
    let n = t.pairs();
    if n_s == 0 || n_s as usize > n {
        return Err(Error::InvalidParameter(format!("key length {n_s} for N = {n}")));
    }
    let seed_len = n + n_s as usize - 1;
    let hashes: Vec<TwoUniversalHash> = (0..1usize << seed_len)
        .map(|v| TwoUniversalHash::new(n, n_s as usize, bits(v, seed_len)))
        .collect::<Result<_>>()?;
    let keys = 1usize << n_s;
    let (ne, ng) = (t.eve_outcomes(), hashes.len());
    let per_z = keys * ne * ng;
    let mut entries = vec![0.0; per_z * t.eve_settings()];
    let weight = 1.0 / ng as f64;
    for z in 0..t.eve_settings() {
        for a in 0..1usize << n {
            let a_bits = bits(a, n);
            for (g, h) in hashes.iter().enumerate() {
                let k = apply_hash(h, &a_bits)?
                    .iter()
                    .fold(0usize, |acc, &v| acc * 2 + usize::from(v));
                for e in 0..ne {
                    entries[z * per_z + (k * ne + e) * ng + g] += weight * t.alice_eve(a, e, 0, z);
                }
            }
        }
    }
    KeyTable::new(n_s, [1, ne, ng], t.eve_settings(), entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pr_analog_squeeze() {
        for m in 2..=4 {
            let pr = ConditionalBox::pr_analog(m, false).unwrap();
            for x in 0..m {
                let g = max_guessing_single(&pr, x).unwrap();
                assert!((g.value - 0.5).abs() < 1e-9, "M = {m}: {}", g.value);
            }
        }
    }

    #[test]
    fn deterministic_alice_is_fully_guessable() {
        let b = ConditionalBox::local_deterministic(&[0, 0, 0], &[1, 0, 1]).unwrap();
        let g = max_guessing_single(&b, 1).unwrap();
        assert!((g.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn witness_marginal_matches() {
        let pr = ConditionalBox::pr_analog(2, false).unwrap();
        let loc = ConditionalBox::local_deterministic(&[0, 1], &[1, 1]).unwrap();
        let p = pr.mix(&loc, 0.6).unwrap();
        let g = max_guessing_single(&p, 0).unwrap();
        let back = g.witness.ab_marginal().unwrap();
        let diff = back
            .entries()
            .iter()
            .zip(NBox::from_single(&p).entries())
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-8);
        assert!((g.witness.guessing_probability(0, 0) - g.value).abs() < 1e-9);
    }

    #[test]
    fn trivial_eve_extension_is_valid() {
        let p = NBox::from_single(&ConditionalBox::pr_analog(3, false).unwrap());
        let t = TripartiteBox::with_trivial_eve(&p).unwrap();
        assert_eq!(t.ab_marginal().unwrap(), p);
        assert!((t.guessing_probability(0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn size_and_shape_limits() {
        let p = NBox::from_single(&ConditionalBox::uniform(5, false).unwrap());
        assert!(matches!(max_guessing(&p, &[0]), Err(Error::TooLarge(_))));
        let p = NBox::from_single(&ConditionalBox::uniform(2, false).unwrap());
        assert!(matches!(max_guessing(&p, &[2]), Err(Error::Shape(_))));
    }

    #[test]
    fn beta_dominance() {
        for (m, n) in [(2, 1), (3, 1), (2, 2), (4, 2), (3, 3)] {
            assert!(beta_monotonicity_check(m, n).unwrap() <= 1e-14);
        }
        assert!(beta_monotonicity_check(5, 1).is_err());
    }
}
