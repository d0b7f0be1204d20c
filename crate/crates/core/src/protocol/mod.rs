//! The four-step key distribution protocol run between simulated Alice and
//! Bob over a public, authenticated channel:
//!
//! 1. both sample role bits `I`, `J` with bias `δ` and settings `X`, `Y`,
//!    then measure their halves of every pair;
//! 2. they publish `I`, `J` and the outcomes of every `I = J = 1` pair and
//!    average the BC variable over the estimation set;
//! 3. Alice publishes a syndrome of her raw key so Bob can correct his;
//! 4. both compress with a published Toeplitz hash.
//!
//! All randomness comes from one seed, split into independent ChaCha
//! streams per protocol phase.

mod ec;
mod hash;

pub use ec::{
    error_correct_decode, error_correct_encode, syndrome_len, Code, CodeDescriptor, EcConfig,
    EcScheme, MAX_EXHAUSTIVE_BLOCK,
};
pub use hash::{
    apply_hash, apply_hash_naive, bit_string, pack, parse_bit_string, sample_hash, unpack,
    TwoUniversalHash,
};

use std::f64::consts::FRAC_1_SQRT_2;

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boxcore::{bc_variable, in_estimation_set, ConditionalBox, NBox};
use crate::error::{Abort, Error, Result};

/// How the final key length is derived from the run's statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyLengthRule {
    /// `N_r 2 log2((1/√2)/(B_est + N_e^{-1/4})) - N_c - √N_e`, which carries
    /// the finite-size security statement.
    #[default]
    Composable,
    /// `N_r 2 log2(1/(√2 B_est)) - N_c`, the leading-order length without
    /// finite-size corrections.
    Asymptotic,
}

impl std::str::FromStr for KeyLengthRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "composable" => Ok(Self::Composable),
            "asymptotic" => Ok(Self::Asymptotic),
            _ => Err(Error::InvalidParameter(format!("unknown key-length rule '{s}'"))),
        }
    }
}

/// Real-valued composable key length (may be negative or `-∞`).
pub fn composable_length_real(n_r: u64, n_c: u64, b_est: f64, n_e: u64) -> f64 {
    if n_e == 0 {
        return f64::NEG_INFINITY;
    }
    let smoothed = b_est + (n_e as f64).powf(-0.25);
    n_r as f64 * 2.0 * (FRAC_1_SQRT_2 / smoothed).log2() - n_c as f64 - (n_e as f64).sqrt()
}

fn clamp_length(v: f64) -> u64 {
    if v.is_finite() && v > 0.0 {
        v.floor() as u64
    } else {
        0
    }
}

/// Composable output length, floored and clamped at zero.
pub fn output_length(n_r: u64, n_c: u64, b_est: f64, n_e: u64) -> u64 {
    output_length_with(KeyLengthRule::Composable, n_r, n_c, b_est, n_e)
}

pub fn output_length_with(rule: KeyLengthRule, n_r: u64, n_c: u64, b_est: f64, n_e: u64) -> u64 {
    match rule {
        KeyLengthRule::Composable => {
            if n_e == 0 || b_est + (n_e as f64).powf(-0.25) >= FRAC_1_SQRT_2 {
                return 0;
            }
            clamp_length(composable_length_real(n_r, n_c, b_est, n_e))
        }
        KeyLengthRule::Asymptotic => {
            if !(b_est > 0.0 && b_est < FRAC_1_SQRT_2) {
                return 0;
            }
            clamp_length(n_r as f64 * 2.0 * (FRAC_1_SQRT_2 / b_est).log2() - n_c as f64)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub delta: f64,
    pub seed: u64,
    pub ec: EcConfig,
    pub key_length: KeyLengthRule,
}

impl ProtocolParams {
    /// Defaults: `δ = N^{-1/4}`, LDPC reconciliation with margin 0.15,
    /// composable key length.
    pub fn new(n: usize, m: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            delta: auto_delta(n),
            seed,
            ec: EcConfig::default(),
            key_length: KeyLengthRule::Composable,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("N must be >= 1".into()));
        }
        crate::boxcore::check_settings(self.m)?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "sampling bias {} outside (0, 1)",
                self.delta
            )));
        }
        self.ec.validate()
    }
}

/// `δ = N^{-1/4}`, which makes `N_e ≈ 2√N/M`.
pub fn auto_delta(n: usize) -> f64 {
    (n.max(1) as f64).powf(-0.25)
}

/// Role bits and settings for every pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Settings {
    pub i: Vec<u8>,
    pub j: Vec<u8>,
    pub x: Vec<usize>,
    pub y: Vec<usize>,
}

pub fn sample_settings<R: Rng + ?Sized>(n: usize, m: usize, delta: f64, rng: &mut R) -> Settings {
    let mut s = Settings {
        i: Vec::with_capacity(n),
        j: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let i = u8::from(rng.gen_bool(delta));
        let j = u8::from(rng.gen_bool(delta));
        s.x.push(if i == 1 { rng.gen_range(0..m) } else { 0 });
        s.y.push(if j == 1 { rng.gen_range(0..m) } else { m });
        s.i.push(i);
        s.j.push(j);
    }
    s
}

/// A device pair emitting outcomes for given settings. Bob's setting `M`
/// is the raw-key input.
pub trait Source {
    fn settings(&self) -> usize;
    fn measure(&self, x: &[usize], y: &[usize], rng: &mut dyn RngCore) -> Result<(Vec<u8>, Vec<u8>)>;
}

fn require_raw_key_setting(bob_extra: bool) -> Result<()> {
    if bob_extra {
        Ok(())
    } else {
        Err(Error::Shape("protocol sources need Bob's raw-key setting".into()))
    }
}

/// Independent, identical pairs.
impl Source for ConditionalBox {
    fn settings(&self) -> usize {
        ConditionalBox::settings(self)
    }

    fn measure(&self, x: &[usize], y: &[usize], rng: &mut dyn RngCore) -> Result<(Vec<u8>, Vec<u8>)> {
        require_raw_key_setting(self.bob_extra())?;
        if x.len() != y.len() {
            return Err(Error::Shape("setting strings of different lengths".into()));
        }
        let (m, ny) = (ConditionalBox::settings(self), self.bob_settings());
        // Cumulative weights of (0,0), (0,1), (1,0) per setting pair.
        let mut cdf = vec![[0.0f64; 3]; m * ny];
        for xs in 0..m {
            for ys in 0..ny {
                let p00 = self.get(0, 0, xs, ys);
                let p01 = p00 + self.get(0, 1, xs, ys);
                cdf[xs * ny + ys] = [p00, p01, p01 + self.get(1, 0, xs, ys)];
            }
        }
        let mut a = Vec::with_capacity(x.len());
        let mut b = Vec::with_capacity(x.len());
        for (&xs, &ys) in x.iter().zip(y) {
            if xs >= m || ys >= ny {
                return Err(Error::Shape(format!("setting ({xs}, {ys}) out of range")));
            }
            let c = &cdf[xs * ny + ys];
            let u: f64 = rng.gen();
            let o = c.iter().take_while(|&&t| u >= t).count() as u8;
            a.push(o >> 1);
            b.push(o & 1);
        }
        Ok((a, b))
    }
}

/// A scripted source: consecutive groups of `N` pairs are drawn jointly
/// from one `N`-pair box, so pairs within a group may be correlated.
#[derive(Clone, Debug)]
pub struct ScriptedSource {
    pub nbox: NBox,
}

impl Source for ScriptedSource {
    fn settings(&self) -> usize {
        self.nbox.settings()
    }

    fn measure(&self, x: &[usize], y: &[usize], rng: &mut dyn RngCore) -> Result<(Vec<u8>, Vec<u8>)> {
        require_raw_key_setting(self.nbox.bob_extra())?;
        if x.len() != y.len() {
            return Err(Error::Shape("setting strings of different lengths".into()));
        }
        let k = self.nbox.pairs();
        let mut a = Vec::with_capacity(x.len());
        let mut b = Vec::with_capacity(x.len());
        for (xc, yc) in x.chunks(k).zip(y.chunks(k)) {
            // A short final group is padded with setting 0; by no-signaling
            // the padding does not affect the kept pairs.
            let mut xs = xc.to_vec();
            let mut ys = yc.to_vec();
            xs.resize(k, 0);
            ys.resize(k, 0);
            let (ga, gb) = self.nbox.sample(&xs, &ys, rng)?;
            a.extend_from_slice(&ga[..xc.len()]);
            b.extend_from_slice(&gb[..xc.len()]);
        }
        Ok((a, b))
    }
}

pub fn measure(
    source: &dyn Source,
    x: &[usize],
    y: &[usize],
    rng: &mut dyn RngCore,
) -> Result<(Vec<u8>, Vec<u8>)> {
    source.measure(x, y, rng)
}

/// Indices with `I = J = 1` whose settings are neighbours.
pub fn estimation_set(s: &Settings, m: usize) -> Vec<usize> {
    (0..s.i.len())
        .filter(|&n| s.i[n] == 1 && s.j[n] == 1 && in_estimation_set(s.x[n], s.y[n], m))
        .collect()
}

/// Mean of the BC variable over `est`.
pub fn estimate_bc(
    a: &[u8],
    b: &[u8],
    x: &[usize],
    y: &[usize],
    est: &[usize],
    m: usize,
) -> Result<f64> {
    if est.is_empty() {
        return Err(Abort::EmptyEstimationSet.into());
    }
    let total: f64 = est
        .iter()
        .map(|&n| bc_variable(a[n], b[n], x[n], y[n], m))
        .sum();
    Ok(total / est.len() as f64)
}

/// One message on the public channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "kebab-case")]
pub enum PublicMessage {
    Roles {
        i: String,
        j: String,
    },
    /// Settings and outcomes of every `I = J = 1` pair.
    Estimation {
        indices: Vec<usize>,
        x: Vec<usize>,
        y: Vec<usize>,
        a: String,
        b: String,
    },
    /// Raw-key pairs sacrificed to measure the error rate.
    ErrorSample {
        indices: Vec<usize>,
        a: String,
        b: String,
    },
    Syndrome {
        code: CodeDescriptor,
        c: String,
    },
    Check {
        hash: TwoUniversalHash,
        value: String,
    },
    PrivacyAmplification {
        hash: TwoUniversalHash,
    },
}

/// Complete record of a run, public and private.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub params: ProtocolParams,
    pub i: String,
    pub j: String,
    pub x: Vec<usize>,
    pub y: Vec<usize>,
    pub a: String,
    pub b: String,
    pub est_set: Vec<usize>,
    pub b_est: f64,
    /// All pairs with `I = J = 0`.
    pub raw_indices: Vec<usize>,
    pub sample_indices: Vec<usize>,
    /// Raw-key pairs kept after sacrificing the error sample.
    pub key_indices: Vec<usize>,
    pub w_est: f64,
    pub n: u64,
    pub n_r: u64,
    pub n_e: u64,
    pub n_c: u64,
    pub n_c_syndrome: u64,
    pub n_c_check: u64,
    pub n_c_sample: u64,
    pub n_s: u64,
    /// Length the other [`KeyLengthRule`] would have produced.
    pub n_s_alternative: u64,
    pub c: String,
    pub code: CodeDescriptor,
    pub g: TwoUniversalHash,
    pub k_a: String,
    pub k_b: String,
    /// Whether Bob's corrected raw key equals Alice's.
    pub reconciled: bool,
    pub public_log: Vec<PublicMessage>,
}

impl Transcript {
    /// Structural checks: estimation and raw-key partitions, key lengths,
    /// and that no kept raw-key outcome was ever published.
    pub fn check_invariants(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Invariant(msg.to_string()));
        let i = parse_bit_string(&self.i)?;
        let j = parse_bit_string(&self.j)?;
        let m = self.params.m;
        if self
            .est_set
            .iter()
            .any(|&n| !(i[n] == 1 && j[n] == 1 && in_estimation_set(self.x[n], self.y[n], m)))
        {
            return bad("estimation pair outside the estimation condition");
        }
        let expect_est: Vec<usize> = (0..i.len())
            .filter(|&n| i[n] == 1 && j[n] == 1 && in_estimation_set(self.x[n], self.y[n], m))
            .collect();
        if expect_est != self.est_set {
            return bad("estimation set incomplete");
        }
        let raw: Vec<usize> = (0..i.len()).filter(|&n| i[n] == 0 && j[n] == 0).collect();
        if raw != self.raw_indices {
            return bad("raw-key indices differ from {n: I_n = J_n = 0}");
        }
        if self.k_a.len() as u64 != self.n_s || self.k_b.len() as u64 != self.n_s {
            return bad("key length differs from N_s");
        }
        let mut published = vec![false; i.len()];
        for msg in &self.public_log {
            let idx = match msg {
                PublicMessage::Estimation { indices, .. } => indices,
                PublicMessage::ErrorSample { indices, .. } => indices,
                _ => continue,
            };
            for &n in idx {
                published[n] = true;
            }
        }
        if self.key_indices.iter().any(|&n| published[n]) {
            return bad("a raw-key outcome was published");
        }
        Ok(())
    }
}

/// Independent RNG per protocol phase.
fn phase_rng(seed: u64, phase: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(phase);
    rng
}

fn pick(bits: &[u8], idx: &[usize]) -> Vec<u8> {
    idx.iter().map(|&n| bits[n]).collect()
}

pub fn run_protocol(params: &ProtocolParams, source: &dyn Source) -> Result<Transcript> {
    params.validate()?;
    if source.settings() != params.m {
        return Err(Error::Shape(format!(
            "source has M = {}, protocol expects {}",
            source.settings(),
            params.m
        )));
    }
    let (n, m) = (params.n, params.m);
    let mut log = Vec::new();

    // Step 1: roles, settings, measurements.
    let s = sample_settings(n, m, params.delta, &mut phase_rng(params.seed, 0));
    let (a, b) = source.measure(&s.x, &s.y, &mut phase_rng(params.seed, 1))?;
    log.push(PublicMessage::Roles {
        i: bit_string(&s.i),
        j: bit_string(&s.j),
    });

    // Step 2: publish the I = J = 1 pairs and estimate.
    let both: Vec<usize> = (0..n).filter(|&k| s.i[k] == 1 && s.j[k] == 1).collect();
    log.push(PublicMessage::Estimation {
        x: both.iter().map(|&k| s.x[k]).collect(),
        y: both.iter().map(|&k| s.y[k]).collect(),
        a: bit_string(&pick(&a, &both)),
        b: bit_string(&pick(&b, &both)),
        indices: both,
    });
    let est_set = estimation_set(&s, m);
    let b_est = estimate_bc(&a, &b, &s.x, &s.y, &est_set, m)?;

    // Step 3: error rate, syndrome, check hash.
    let raw_indices: Vec<usize> = (0..n).filter(|&k| s.i[k] == 0 && s.j[k] == 0).collect();
    if raw_indices.is_empty() {
        return Err(Abort::EmptyRawKey.into());
    }
    let mut ec_rng = phase_rng(params.seed, 2);
    let (sample_indices, w_est) = match params.ec.w_prior {
        Some(w) => (Vec::new(), w),
        None => {
            let k = (params.ec.sample_fraction * raw_indices.len() as f64).round() as usize;
            let k = k.min(raw_indices.len() - 1);
            let mut chosen: Vec<usize> = index::sample(&mut ec_rng, raw_indices.len(), k)
                .into_iter()
                .map(|p| raw_indices[p])
                .collect();
            chosen.sort_unstable();
            let errors = chosen.iter().filter(|&&p| a[p] != b[p]).count();
            let w = if k == 0 { 0.0 } else { errors as f64 / k as f64 };
            (chosen, w.min(0.5))
        }
    };
    if !sample_indices.is_empty() {
        log.push(PublicMessage::ErrorSample {
            indices: sample_indices.clone(),
            a: bit_string(&pick(&a, &sample_indices)),
            b: bit_string(&pick(&b, &sample_indices)),
        });
    }
    let key_indices: Vec<usize> = {
        let mut sampled = sample_indices.iter().peekable();
        raw_indices
            .iter()
            .copied()
            .filter(|k| {
                if sampled.peek() == Some(&k) {
                    sampled.next();
                    false
                } else {
                    true
                }
            })
            .collect()
    };
    let a_r = pick(&a, &key_indices);
    let b_r = pick(&b, &key_indices);
    let code_seed = ec_rng.next_u64();
    let (code, c) = error_correct_encode(&a_r, w_est, &params.ec, code_seed)?;
    log.push(PublicMessage::Syndrome {
        code: code.descriptor().clone(),
        c: bit_string(&c),
    });
    let b_fixed = error_correct_decode(&b_r, &c, &code, &params.ec)?;
    let check = sample_hash(
        a_r.len(),
        params.ec.tag_bits.min(a_r.len()),
        &mut phase_rng(params.seed, 3),
    )?;
    let tag = apply_hash(&check, &a_r)?;
    log.push(PublicMessage::Check {
        hash: check.clone(),
        value: bit_string(&tag),
    });
    if apply_hash(&check, &b_fixed)? != tag {
        return Err(Abort::VerificationFailed.into());
    }

    // Step 4: privacy amplification.
    let n_r = a_r.len() as u64;
    let n_e = est_set.len() as u64;
    let n_c_syndrome = c.len() as u64;
    let n_c_check = tag.len() as u64;
    let n_c_sample = sample_indices.len() as u64;
    let n_c = n_c_syndrome + n_c_check + n_c_sample;
    let n_s = output_length_with(params.key_length, n_r, n_c, b_est, n_e);
    let other = match params.key_length {
        KeyLengthRule::Composable => KeyLengthRule::Asymptotic,
        KeyLengthRule::Asymptotic => KeyLengthRule::Composable,
    };
    let g = sample_hash(a_r.len(), n_s as usize, &mut phase_rng(params.seed, 4))?;
    log.push(PublicMessage::PrivacyAmplification { hash: g.clone() });
    let k_a = apply_hash(&g, &a_r)?;
    let k_b = apply_hash(&g, &b_fixed)?;

    Ok(Transcript {
        params: params.clone(),
        i: bit_string(&s.i),
        j: bit_string(&s.j),
        x: s.x,
        y: s.y,
        a: bit_string(&a),
        b: bit_string(&b),
        est_set,
        b_est,
        raw_indices,
        sample_indices,
        key_indices,
        w_est,
        n: n as u64,
        n_r,
        n_e,
        n_c,
        n_c_syndrome,
        n_c_check,
        n_c_sample,
        n_s,
        n_s_alternative: output_length_with(other, n_r, n_c, b_est, n_e),
        c: bit_string(&c),
        code: code.descriptor().clone(),
        g,
        k_a: bit_string(&k_a),
        k_b: bit_string(&k_b),
        reconciled: a_r == b_fixed,
        public_log: log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_length_examples() {
        assert_eq!(output_length(10_000, 0, 0.51, 10_000), 4162);
        assert_eq!(output_length(10_000, 0, FRAC_1_SQRT_2, 10_000), 0);
        assert_eq!(output_length(10_000, 0, 0.9, 10_000), 0);
        assert_eq!(output_length(10_000, 0, 0.51, 0), 0);
        assert_eq!(
            output_length_with(KeyLengthRule::Asymptotic, 10_000, 100, FRAC_1_SQRT_2, 1),
            0
        );
    }

    #[test]
    fn settings_follow_roles() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = sample_settings(2000, 5, 0.3, &mut rng);
        for k in 0..2000 {
            if s.i[k] == 0 {
                assert_eq!(s.x[k], 0);
            }
            if s.j[k] == 0 {
                assert_eq!(s.y[k], 5);
            } else {
                assert!(s.y[k] < 5);
            }
        }
    }

    #[test]
    fn bc_estimate_examples() {
        let m = 4;
        // (x, y) = (M-1, 0) with a = b = 0.
        assert_eq!(estimate_bc(&[0], &[0], &[3], &[0], &[0], m).unwrap(), 4.5);
        assert_eq!(estimate_bc(&[0, 0], &[0, 0], &[1, 2], &[1, 3], &[0, 1], m).unwrap(), 0.5);
        assert!(matches!(
            estimate_bc(&[], &[], &[], &[], &[], m),
            Err(Error::Abort(Abort::EmptyEstimationSet))
        ));
    }

    #[test]
    fn deterministic_source_reproduces_maps() {
        let b = ConditionalBox::local_deterministic(&[1, 0, 1], &[0, 1, 1, 0]).unwrap();
        let x = vec![0, 1, 2, 2, 0];
        let y = vec![3, 2, 1, 0, 3];
        let (a, bb) = b.measure(&x, &y, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, vec![1, 0, 1, 1, 1]);
        assert_eq!(bb, vec![0, 1, 1, 0, 0]);
    }
}
