//! No-signaling conditional distributions `P(a,b|x,y)` with binary outcomes,
//! the Braunstein–Caves functional and its dual-vector representation.
//!
//! Alice has `M` settings, Bob has `M` estimation settings plus, when
//! `bob_extra` is set, the raw-key setting `y = M`. Entries are stored
//! row-major over `(a, b, x, y)`.

mod dual;
mod layout;
mod nbox;
mod random;

pub use dual::{beta, beta_a, mu, nu, DualTensor, DualVector};
pub use layout::{PartyResidual, SignalingReport};
pub use nbox::{marginal_identity_residual, NBox};
pub use random::{random_nonsignaling, random_nonsignaling_nbox};

pub(crate) use layout::Layout;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest setting count accepted anywhere in the crate.
pub const MAX_SETTINGS: usize = 16;
/// Entries in `[-CLAMP_TOL, 0)` are rounding noise and are set to zero.
pub const CLAMP_TOL: f64 = 1e-15;
pub const NORMALIZATION_TOL: f64 = 1e-12;
pub const SIGNALING_TOL: f64 = 1e-12;
/// Agreement required between the sampled-expectation and dual-vector
/// evaluations of the BC value.
pub const BC_IDENTITY_TOL: f64 = 1e-10;

/// Indicator `I{x = M-1} I{y = 0}` appearing in the BC variable.
#[inline]
pub fn bc_offset(x: usize, y: usize, m: usize) -> u8 {
    u8::from(x == m - 1 && y == 0)
}

/// Whether `(x, y)` lies in the estimation set `y = x` or `y = x + 1 mod M`.
#[inline]
pub fn in_estimation_set(x: usize, y: usize, m: usize) -> bool {
    y < m && x < m && (y == x || y == (x + 1) % m)
}

/// The BC random variable `1/2 + M (a ⊕ b ⊕ I{x=M-1} I{y=0})`.
#[inline]
pub fn bc_variable(a: u8, b: u8, x: usize, y: usize, m: usize) -> f64 {
    0.5 + m as f64 * f64::from(a ^ b ^ bc_offset(x, y, m))
}

pub(crate) fn check_settings(m: usize) -> Result<()> {
    if !(2..=MAX_SETTINGS).contains(&m) {
        return Err(Error::InvalidParameter(format!(
            "setting count M = {m} outside 2..={MAX_SETTINGS}"
        )));
    }
    Ok(())
}

/// Clamps rounding-level negatives and rejects anything else outside [0, 1].
pub(crate) fn sanitize_probabilities(entries: &mut [f64]) -> Result<()> {
    for (i, v) in entries.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(Error::Invariant(format!("entry {i} is not finite")));
        }
        if *v < 0.0 {
            if *v < -CLAMP_TOL {
                return Err(Error::Invariant(format!("entry {i} is negative ({v:e})")));
            }
            *v = 0.0;
        }
        if *v > 1.0 + NORMALIZATION_TOL {
            return Err(Error::Invariant(format!("entry {i} exceeds 1 ({v})")));
        }
    }
    Ok(())
}

/// A single-pair conditional distribution `P(a,b|x,y)`.
///
/// Construction checks shape, non-negativity and normalization. No-signaling
/// is *not* required by the constructor, so that signaling boxes can be
/// represented and diagnosed; use [`ConditionalBox::check_nonsignaling`] or
/// [`ConditionalBox::validated`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalBox {
    m: usize,
    bob_extra: bool,
    entries: Vec<f64>,
}

impl ConditionalBox {
    pub fn new(m: usize, bob_extra: bool, mut entries: Vec<f64>) -> Result<Self> {
        check_settings(m)?;
        let expected = 4 * m * Self::bob_settings_for(m, bob_extra);
        if entries.len() != expected {
            return Err(Error::Shape(format!(
                "box with M = {m}, bobExtra = {bob_extra} needs {expected} entries, got {}",
                entries.len()
            )));
        }
        sanitize_probabilities(&mut entries)?;
        let b = Self {
            m,
            bob_extra,
            entries,
        };
        let norm = b.layout().normalization_residual(&b.entries);
        if norm > NORMALIZATION_TOL {
            return Err(Error::Invariant(format!(
                "normalization residual {norm:e} exceeds {NORMALIZATION_TOL:e}"
            )));
        }
        Ok(b)
    }

    /// Like [`new`](Self::new), additionally rejecting signaling boxes.
    pub fn validated(m: usize, bob_extra: bool, entries: Vec<f64>) -> Result<Self> {
        let b = Self::new(m, bob_extra, entries)?;
        let report = b.check_nonsignaling(SIGNALING_TOL);
        if !report.pass {
            return Err(Error::Invariant(format!(
                "box is signaling (residual {:e})",
                report.max_residual
            )));
        }
        Ok(b)
    }

    /// Builds a box from a function of `(a, b, x, y)`.
    pub fn from_fn(
        m: usize,
        bob_extra: bool,
        mut f: impl FnMut(u8, u8, usize, usize) -> f64,
    ) -> Result<Self> {
        check_settings(m)?;
        let ny = Self::bob_settings_for(m, bob_extra);
        let mut entries = Vec::with_capacity(4 * m * ny);
        for a in 0..2u8 {
            for b in 0..2u8 {
                for x in 0..m {
                    for y in 0..ny {
                        entries.push(f(a, b, x, y));
                    }
                }
            }
        }
        Self::new(m, bob_extra, entries)
    }

    fn bob_settings_for(m: usize, bob_extra: bool) -> usize {
        m + usize::from(bob_extra)
    }

    pub fn settings(&self) -> usize {
        self.m
    }

    pub fn bob_extra(&self) -> bool {
        self.bob_extra
    }

    /// Number of Bob settings (`M` or `M + 1`).
    pub fn bob_settings(&self) -> usize {
        Self::bob_settings_for(self.m, self.bob_extra)
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn index(&self, a: u8, b: u8, x: usize, y: usize) -> usize {
        ((usize::from(a) * 2 + usize::from(b)) * self.m + x) * self.bob_settings() + y
    }

    #[inline]
    pub fn get(&self, a: u8, b: u8, x: usize, y: usize) -> f64 {
        self.entries[self.index(a, b, x, y)]
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(vec![2, 2], vec![self.m, self.bob_settings()])
    }

    /// `P(A = a | x, y)`.
    pub fn alice_marginal(&self, a: u8, x: usize, y: usize) -> f64 {
        self.get(a, 0, x, y) + self.get(a, 1, x, y)
    }

    /// `P(B = b | x, y)`.
    pub fn bob_marginal(&self, b: u8, x: usize, y: usize) -> f64 {
        self.get(0, b, x, y) + self.get(1, b, x, y)
    }

    /// Signaling residuals. Family 0 is Bob's output marginal as a function
    /// of Alice's input; family 1 is Alice's marginal as a function of
    /// Bob's input. In each offender `rest_setting`/`rest_outcome` are the
    /// disturbed party's setting and outcome.
    pub fn check_nonsignaling(&self, tol: f64) -> SignalingReport {
        SignalingReport::build(&self.layout(), &self.entries, tol)
    }

    /// `⟨𝓑⟩` as the expectation of the BC variable over the uniform
    /// distribution on the estimation set.
    pub fn bc_expectation(&self) -> f64 {
        let m = self.m;
        let weight = 1.0 / (2 * m) as f64;
        let mut total = 0.0;
        for x in 0..m {
            for y in [x, (x + 1) % m] {
                for a in 0..2u8 {
                    for b in 0..2u8 {
                        total += weight * self.get(a, b, x, y) * bc_variable(a, b, x, y, m);
                    }
                }
            }
        }
        total
    }

    /// `⟨𝓑⟩`, evaluated as a sampled expectation and cross-checked against
    /// `β · P`.
    pub fn bc_value(&self) -> Result<f64> {
        let direct = self.bc_expectation();
        let dual = beta(self.m)?.dot(self)?;
        if (direct - dual).abs() > BC_IDENTITY_TOL {
            return Err(Error::InternalIdentity(format!(
                "BC expectation {direct} differs from beta.P = {dual}"
            )));
        }
        Ok(direct)
    }

    /// Cyclic relabeling by `shift`: `X -> X + shift`, `Y -> Y + shift`
    /// (mod M) with the outcome flips `A ⊕ I{X ≥ M - shift}` and
    /// `B ⊕ I{Y ≥ M - shift}` on the estimation block. Bob's raw-key column
    /// keeps both its label and its outcomes.
    pub fn relabel(&self, shift: usize) -> Result<Self> {
        let m = self.m;
        if shift >= m {
            return Err(Error::InvalidParameter(format!(
                "relabel shift {shift} must be < M = {m}"
            )));
        }
        let ny = self.bob_settings();
        let mut out = vec![0.0; self.entries.len()];
        for a in 0..2u8 {
            for b in 0..2u8 {
                for x in 0..m {
                    for y in 0..ny {
                        let flip_a = u8::from(x + shift >= m);
                        let (y2, flip_b) = if y < m {
                            ((y + shift) % m, u8::from(y + shift >= m))
                        } else {
                            (y, 0)
                        };
                        out[self.index(a ^ flip_a, b ^ flip_b, (x + shift) % m, y2)] =
                            self.get(a, b, x, y);
                    }
                }
            }
        }
        Ok(Self {
            m,
            bob_extra: self.bob_extra,
            entries: out,
        })
    }

    /// Convex combination `λ·self + (1-λ)·other`.
    pub fn mix(&self, other: &Self, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!(
                "mixing weight {lambda} outside [0, 1]"
            )));
        }
        if self.m != other.m || self.bob_extra != other.bob_extra {
            return Err(Error::Shape("mixing boxes of different shapes".into()));
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(p, q)| lambda * p + (1.0 - lambda) * q)
            .collect();
        Self::new(self.m, self.bob_extra, entries)
    }

    /// Deterministic local box `a = fa[x]`, `b = fb[y]`. `fb` has length `M`
    /// (no raw-key setting) or `M + 1`.
    pub fn local_deterministic(fa: &[u8], fb: &[u8]) -> Result<Self> {
        let m = fa.len();
        let bob_extra = match fb.len() {
            l if l == m => false,
            l if l == m + 1 => true,
            l => {
                return Err(Error::Shape(format!(
                    "Bob's response table has length {l}, expected {m} or {}",
                    m + 1
                )))
            }
        };
        if fa.iter().chain(fb).any(|&v| v > 1) {
            return Err(Error::InvalidParameter("outcomes must be bits".into()));
        }
        Self::from_fn(m, bob_extra, |a, b, x, y| {
            f64::from(u8::from(a == fa[x] && b == fb[y]))
        })
    }

    /// The box with `A ⊕ B = I{X = M-1} I{Y = 0}` and uniform marginals. Its
    /// raw-key column (when `bob_extra`) is the uniform product distribution.
    pub fn pr_analog(m: usize, bob_extra: bool) -> Result<Self> {
        Self::from_fn(m, bob_extra, |a, b, x, y| {
            if y == m {
                0.25
            } else if a ^ b == bc_offset(x, y, m) {
                0.5
            } else {
                0.0
            }
        })
    }

    /// Every entry 1/4.
    pub fn uniform(m: usize, bob_extra: bool) -> Result<Self> {
        Self::from_fn(m, bob_extra, |_, _, _, _| 0.25)
    }

    pub fn to_file(&self, meta: serde_json::Value) -> BoxFile {
        BoxFile {
            m: self.m,
            bob_extra: self.bob_extra,
            entries: self.entries.clone(),
            meta,
        }
    }

    pub fn to_json(&self, meta: serde_json::Value) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file(meta))?)
    }

    /// Parses the JSON box format and re-validates every invariant,
    /// including no-signaling.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: BoxFile = serde_json::from_str(text)?;
        Self::try_from(file)
    }
}

/// On-disk box representation.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BoxFile {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "bobExtra")]
    pub bob_extra: bool,
    pub entries: Vec<f64>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl TryFrom<BoxFile> for ConditionalBox {
    type Error = Error;

    fn try_from(file: BoxFile) -> Result<Self> {
        ConditionalBox::validated(file.m, file.bob_extra, file.entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signaling_box() -> ConditionalBox {
        // Alice's outcome copies Bob's input: P(a|x,y) = [a == y].
        ConditionalBox::from_fn(2, false, |a, b, _x, y| {
            if usize::from(a) == y {
                0.5 * f64::from(b + 1) / 1.5
            } else {
                0.0
            }
        })
        .unwrap()
    }

    #[test]
    fn local_deterministic_zero_box_is_nonsignaling() {
        let b = ConditionalBox::local_deterministic(&[0, 0, 0], &[0, 0, 0, 0]).unwrap();
        let r = b.check_nonsignaling(SIGNALING_TOL);
        assert!(r.pass);
        assert_eq!(r.max_residual, 0.0);
        assert!(r.worst.is_none());
    }

    #[test]
    fn signaling_box_is_flagged_with_offender() {
        let r = signaling_box().check_nonsignaling(SIGNALING_TOL);
        assert!(!r.pass);
        assert!((r.max_residual - 1.0).abs() < 1e-12);
        let worst = r.worst.unwrap();
        // Bob (party 1) signals to Alice.
        assert_eq!(worst.party, 1);
        assert!(r.families[0].residual < 1e-15);
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(matches!(
            ConditionalBox::new(2, false, vec![0.25; 15]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            ConditionalBox::new(1, false, vec![0.25; 4]),
            Err(Error::InvalidParameter(_))
        ));
        let mut e = vec![0.25; 16];
        e[0] = -1e-3;
        e[1] = 0.25 + 1e-3;
        assert!(matches!(ConditionalBox::new(2, false, e), Err(Error::Invariant(_))));
        let mut e = vec![0.25; 16];
        e[0] = 0.3;
        assert!(matches!(ConditionalBox::new(2, false, e), Err(Error::Invariant(_))));
    }

    #[test]
    fn clamps_rounding_noise() {
        let b = ConditionalBox::from_fn(2, false, |a, b, x, y| {
            if a == 0 && b == 0 && x == 0 && y == 0 {
                -1e-16
            } else if a == 1 && b == 1 && x == 0 && y == 0 {
                1.0 / 3.0 + 1e-16
            } else if x == 0 && y == 0 {
                1.0 / 3.0
            } else {
                0.25
            }
        })
        .unwrap();
        assert_eq!(b.get(0, 0, 0, 0), 0.0);
    }

    #[test]
    fn bc_value_of_zero_box_is_one() {
        let b = ConditionalBox::local_deterministic(&[0; 4], &[0; 4]).unwrap();
        assert!((b.bc_value().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bc_value_of_pr_analog_is_half() {
        for m in 2..=7 {
            for extra in [false, true] {
                let b = ConditionalBox::pr_analog(m, extra).unwrap();
                assert!((b.bc_value().unwrap() - 0.5).abs() < 1e-12, "M = {m}");
                assert!(b.check_nonsignaling(SIGNALING_TOL).pass);
            }
        }
    }

    #[test]
    fn bc_identity_holds_on_signaling_boxes_too() {
        // The dual representation of the BC value only needs normalization.
        let b = signaling_box();
        assert!(b.bc_value().is_ok());
    }

    #[test]
    fn relabel_zero_is_identity_and_range_checked() {
        let b = ConditionalBox::pr_analog(3, true).unwrap();
        assert_eq!(b.relabel(0).unwrap(), b);
        assert!(matches!(b.relabel(3), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn relabel_m_times_flips_both_estimation_outcomes() {
        let fa = [0, 1, 1, 0];
        let fb = [1, 1, 0, 0, 1];
        let b = ConditionalBox::local_deterministic(&fa, &fb).unwrap();
        let mut r = b.clone();
        for _ in 0..4 {
            r = r.relabel(1).unwrap();
        }
        // Each estimation input passes through M-1 exactly once: one flip.
        let flipped: Vec<u8> = fa.iter().map(|v| v ^ 1).collect();
        let mut fb_flipped: Vec<u8> = fb[..4].iter().map(|v| v ^ 1).collect();
        fb_flipped.push(fb[4]);
        assert_eq!(
            r,
            ConditionalBox::local_deterministic(&flipped, &fb_flipped).unwrap()
        );
        for _ in 0..4 {
            r = r.relabel(1).unwrap();
        }
        assert_eq!(r, b);
    }

    #[test]
    fn mix_checks_weight_and_shape() {
        let a = ConditionalBox::uniform(3, true).unwrap();
        let b = ConditionalBox::pr_analog(3, true).unwrap();
        assert_eq!(a.mix(&a, 0.3).unwrap(), a);
        assert!(a.mix(&b, 1.5).is_err());
        assert!(a.mix(&ConditionalBox::uniform(3, false).unwrap(), 0.5).is_err());
    }

    #[test]
    fn json_round_trip_and_signaling_rejection() {
        let b = ConditionalBox::pr_analog(3, true).unwrap();
        let text = b.to_json(serde_json::json!({"name": "pr"})).unwrap();
        assert!(text.contains("\"bobExtra\""));
        assert_eq!(ConditionalBox::from_json(&text).unwrap(), b);

        let bad = signaling_box().to_json(serde_json::Value::Null).unwrap();
        assert!(matches!(
            ConditionalBox::from_json(&bad),
            Err(Error::Invariant(_))
        ));
    }
}
