use super::dual::base_remap;
use super::{
    beta, beta_a, check_settings, sanitize_probabilities, ConditionalBox, DualTensor, Layout,
    SignalingReport,
};
use crate::error::{Error, Result};

pub const MAX_PAIRS: usize = 4;
/// Table size above which exact N-pair work is refused.
pub const MAX_NBOX_ENTRIES: usize = 1 << 24;
pub const NBOX_TOL: f64 = 1e-10;

/// A joint distribution `P(a, b | x, y)` over `N` pairs. Outcome and setting
/// strings are ordered Alice 1..N then Bob 1..N, first pair most
/// significant.
#[derive(Clone, Debug, PartialEq)]
pub struct NBox {
    n: usize,
    m: usize,
    bob_extra: bool,
    entries: Vec<f64>,
}

impl NBox {
    pub fn new(n: usize, m: usize, bob_extra: bool, mut entries: Vec<f64>) -> Result<Self> {
        let layout = Self::checked_layout(n, m, bob_extra)?;
        if entries.len() != layout.len() {
            return Err(Error::Shape(format!(
                "N = {n}, M = {m} box needs {} entries, got {}",
                layout.len(),
                entries.len()
            )));
        }
        sanitize_probabilities(&mut entries)?;
        let norm = layout.normalization_residual(&entries);
        if norm > NBOX_TOL {
            return Err(Error::Invariant(format!(
                "normalization residual {norm:e} exceeds {NBOX_TOL:e}"
            )));
        }
        Ok(Self {
            n,
            m,
            bob_extra,
            entries,
        })
    }

    fn checked_layout(n: usize, m: usize, bob_extra: bool) -> Result<Layout> {
        check_settings(m)?;
        if !(1..=MAX_PAIRS).contains(&n) {
            return Err(Error::InvalidParameter(format!(
                "pair count N = {n} outside 1..={MAX_PAIRS}"
            )));
        }
        let ny = m + usize::from(bob_extra);
        let len = 4usize
            .checked_pow(n as u32)
            .and_then(|v| v.checked_mul(m.checked_pow(n as u32)?))
            .and_then(|v| v.checked_mul(ny.checked_pow(n as u32)?))
            .filter(|&l| l <= MAX_NBOX_ENTRIES)
            .ok_or_else(|| {
                Error::TooLarge(format!("N = {n}, M = {m} box exceeds {MAX_NBOX_ENTRIES} entries"))
            })?;
        let layout = Layout::new(
            vec![2; 2 * n],
            [vec![m; n], vec![ny; n]].concat(),
        );
        debug_assert_eq!(layout.len(), len);
        Ok(layout)
    }

    pub fn from_single(b: &ConditionalBox) -> Self {
        Self {
            n: 1,
            m: b.settings(),
            bob_extra: b.bob_extra(),
            entries: b.entries().to_vec(),
        }
    }

    /// Tensor product of independent pairs.
    pub fn product(boxes: &[ConditionalBox]) -> Result<Self> {
        let first = boxes
            .first()
            .ok_or_else(|| Error::Shape("empty product".into()))?;
        let (m, extra) = (first.settings(), first.bob_extra());
        if boxes.iter().any(|b| b.settings() != m || b.bob_extra() != extra) {
            return Err(Error::Shape("product of boxes with different shapes".into()));
        }
        let n = boxes.len();
        let layout = Self::checked_layout(n, m, extra)?;
        let ny = first.bob_settings();
        let mut entries = vec![0.0; layout.len()];
        for o in 0..layout.outcome_space() {
            for s in 0..layout.setting_space() {
                let (a, b, x, y) = Self::split(n, m, ny, o, s);
                entries[layout.index(o, s)] = boxes
                    .iter()
                    .enumerate()
                    .map(|(k, bx)| bx.get(a[k], b[k], x[k], y[k]))
                    .product();
            }
        }
        Self::new(n, m, extra, entries)
    }

    /// Convex combination `Σ w_i B_i`; weights must be non-negative and sum
    /// to 1.
    pub fn mixture(parts: &[(f64, NBox)]) -> Result<Self> {
        let first = &parts
            .first()
            .ok_or_else(|| Error::Shape("empty mixture".into()))?
            .1;
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        if parts.iter().any(|(w, _)| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("mixture weights must form a distribution".into()));
        }
        let mut entries = vec![0.0; first.entries.len()];
        for (w, b) in parts {
            if (b.n, b.m, b.bob_extra) != (first.n, first.m, first.bob_extra) {
                return Err(Error::Shape("mixing boxes of different shapes".into()));
            }
            for (e, v) in entries.iter_mut().zip(&b.entries) {
                *e += w * v;
            }
        }
        Self::new(first.n, first.m, first.bob_extra, entries)
    }

    fn split(
        n: usize,
        m: usize,
        ny: usize,
        o: usize,
        s: usize,
    ) -> (Vec<u8>, Vec<u8>, Vec<usize>, Vec<usize>) {
        let nyn = ny.pow(n as u32);
        let (a_idx, b_idx) = (o >> n, o & ((1 << n) - 1));
        let (x_idx, y_idx) = (s / nyn, s % nyn);
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for k in 0..n {
            let shift = n - 1 - k;
            a.push(((a_idx >> shift) & 1) as u8);
            b.push(((b_idx >> shift) & 1) as u8);
            x.push((x_idx / m.pow(shift as u32)) % m);
            y.push((y_idx / ny.pow(shift as u32)) % ny);
        }
        (a, b, x, y)
    }

    pub fn pairs(&self) -> usize {
        self.n
    }

    pub fn settings(&self) -> usize {
        self.m
    }

    pub fn bob_extra(&self) -> bool {
        self.bob_extra
    }

    pub fn bob_settings(&self) -> usize {
        self.m + usize::from(self.bob_extra)
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub(crate) fn layout(&self) -> Layout {
        Self::checked_layout(self.n, self.m, self.bob_extra).expect("validated at construction")
    }

    fn string_index(digits: &[usize], radix: usize) -> usize {
        digits.iter().fold(0, |acc, &d| acc * radix + d)
    }

    /// `P(a, b | x, y)` for explicit strings.
    pub fn get(&self, a: &[u8], b: &[u8], x: &[usize], y: &[usize]) -> f64 {
        let bits = |s: &[u8]| s.iter().fold(0usize, |acc, &v| acc * 2 + usize::from(v));
        let o = (bits(a) << self.n) | bits(b);
        let s = Self::string_index(x, self.m) * self.bob_settings().pow(self.n as u32)
            + Self::string_index(y, self.bob_settings());
        self.entries[self.layout().index(o, s)]
    }

    /// Draws `(a, b)` strings from `P(·, · | x, y)`.
    pub fn sample<R: rand::Rng + ?Sized>(
        &self,
        x: &[usize],
        y: &[usize],
        rng: &mut R,
    ) -> Result<(Vec<u8>, Vec<u8>)> {
        let ny = self.bob_settings();
        if x.len() != self.n
            || y.len() != self.n
            || x.iter().any(|&v| v >= self.m)
            || y.iter().any(|&v| v >= ny)
        {
            return Err(Error::Shape(format!(
                "settings {x:?}, {y:?} for an N = {}, M = {} box",
                self.n, self.m
            )));
        }
        let layout = self.layout();
        let s = Self::string_index(x, self.m) * ny.pow(self.n as u32) + Self::string_index(y, ny);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let last = layout.outcome_space() - 1;
        let mut o = last;
        for k in 0..last {
            acc += self.entries[layout.index(k, s)];
            if u < acc {
                o = k;
                break;
            }
        }
        let (a, b, _, _) = Self::split(self.n, self.m, ny, o, s);
        Ok((a, b))
    }

    /// Full multipartite no-signaling check over all `2N` parties
    /// (Alice's systems are parties `0..N`, Bob's `N..2N`).
    pub fn check_nonsignaling(&self, tol: f64) -> SignalingReport {
        SignalingReport::build(&self.layout(), &self.entries, tol)
    }

    /// `P(A = a | X = 0...0)`, read off at Bob's input `0...0`.
    pub fn alice_marginal_at_zero(&self, a: &[u8]) -> f64 {
        let zeros = vec![0usize; self.n];
        (0..1usize << self.n)
            .map(|bi| {
                let b: Vec<u8> = (0..self.n)
                    .map(|k| ((bi >> (self.n - 1 - k)) & 1) as u8)
                    .collect();
                self.get(a, &b, &zeros, &zeros)
            })
            .sum()
    }

    /// `⟨𝓑_1 ⋯ 𝓑_N⟩` under the uniform distribution on the estimation set
    /// for every pair.
    pub fn bc_product_expectation(&self) -> f64 {
        let (n, m) = (self.n, self.m);
        let layout = self.layout();
        let ny = self.bob_settings();
        let ms = m.pow(n as u32);
        let remap = base_remap(n, m, ny);
        let weight = (1.0 / (2 * m) as f64).powi(n as i32);
        let mut total = 0.0;
        for o in 0..layout.outcome_space() {
            for x_idx in 0..ms {
                for &y_full in &remap {
                    let s = x_idx * ny.pow(n as u32) + y_full;
                    let (a, b, x, y) = Self::split(n, m, ny, o, s);
                    let mut v = 1.0;
                    for k in 0..n {
                        if !super::in_estimation_set(x[k], y[k], m) {
                            v = 0.0;
                            break;
                        }
                        v *= super::bc_variable(a[k], b[k], x[k], y[k], m);
                    }
                    if v != 0.0 {
                        total += weight * v * self.entries[layout.index(o, s)];
                    }
                }
            }
        }
        total
    }

    /// `⟨𝓑_1 ⋯ 𝓑_N⟩`, cross-checked against `β^{⊗N} · P`.
    pub fn bc_product(&self) -> Result<f64> {
        let direct = self.bc_product_expectation();
        let b = beta(self.m)?;
        let factors = vec![&b; self.n];
        let dual = DualTensor::product(&factors)?.dot(self)?;
        if (direct - dual).abs() > super::BC_IDENTITY_TOL {
            return Err(Error::InternalIdentity(format!(
                "BC product expectation {direct} differs from beta^N.P = {dual}"
            )));
        }
        Ok(direct)
    }
}

/// `|P(A = a | X = 0) - (⊗ β_{a_n}) · P|`, which vanishes on every
/// no-signaling box.
pub fn marginal_identity_residual(p: &NBox, a: &[u8]) -> Result<f64> {
    if a.len() != p.pairs() || a.iter().any(|&v| v > 1) {
        return Err(Error::Shape(format!(
            "outcome string {a:?} for an N = {} box",
            p.pairs()
        )));
    }
    let report = p.check_nonsignaling(NBOX_TOL);
    if !report.pass {
        return Err(Error::Precondition(format!(
            "marginal identity requires a no-signaling box (residual {:e})",
            report.max_residual
        )));
    }
    let betas = a
        .iter()
        .map(|&bit| beta_a(p.settings(), bit))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&_> = betas.iter().collect();
    let dual = DualTensor::product(&refs)?.dot(p)?;
    Ok((p.alice_marginal_at_zero(a) - dual).abs())
}
