//! Syndrome-based information reconciliation.
//!
//! Alice splits `A_r` into blocks and publishes `H_k · a_k` for each block.
//! Bob looks for the likeliest error pattern `e` with
//! `H_k · e = H_k · b_k ⊕ s_k` and flips it out of his block.
//!
//! * [`EcScheme::Baseline`]: random parity checks on short blocks (16 bits by
//!   default), decoded by an exhaustive minimum-weight sweep over all
//!   `2^L` patterns.
//! * [`EcScheme::Ldpc`]: sparse parity checks with column weight 3 on long
//!   blocks, decoded by sum-product belief propagation.
//!
//! Both spend `ceil(L (h(w) + margin))` syndrome bits on a block of `L`
//! bits; when that reaches `L` the block is disclosed outright.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::security::binary_entropy;

/// Largest block the exhaustive decoder accepts.
pub const MAX_EXHAUSTIVE_BLOCK: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EcScheme {
    Baseline,
    Ldpc,
}

impl std::str::FromStr for EcScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "ldpc" => Ok(Self::Ldpc),
            _ => Err(Error::InvalidParameter(format!(
                "unknown error-correction scheme '{s}'"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcConfig {
    pub scheme: EcScheme,
    /// Extra syndrome rate on top of `h(w)`.
    pub margin: f64,
    /// Block length (exact for the baseline, an upper limit for LDPC).
    pub block_len: usize,
    /// Baseline only: blocks whose best error pattern is heavier than this
    /// are reported as failures.
    pub radius: usize,
    /// LDPC only.
    pub max_iterations: usize,
    /// Known error rate; when `None` it is measured on a sacrificed sample.
    pub w_prior: Option<f64>,
    /// Fraction of raw-key pairs sacrificed to measure `w`.
    pub sample_fraction: f64,
    /// Length of the public hash comparing `A_r` and `B_r'` after decoding.
    pub tag_bits: usize,
}

impl EcConfig {
    pub fn baseline(margin: f64) -> Self {
        Self {
            scheme: EcScheme::Baseline,
            margin,
            block_len: 16,
            radius: 16,
            max_iterations: 0,
            w_prior: None,
            sample_fraction: 0.05,
            tag_bits: 32,
        }
    }

    pub fn ldpc(margin: f64) -> Self {
        Self {
            scheme: EcScheme::Ldpc,
            margin,
            block_len: 16_384,
            radius: 0,
            max_iterations: 100,
            w_prior: None,
            sample_fraction: 0.05,
            tag_bits: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad(format!("margin {} must be >= 0", self.margin));
        }
        if self.block_len == 0 {
            return bad("block length must be positive".into());
        }
        if self.scheme == EcScheme::Baseline && self.block_len > MAX_EXHAUSTIVE_BLOCK {
            return bad(format!(
                "exhaustive decoding needs blocks of at most {MAX_EXHAUSTIVE_BLOCK} bits"
            ));
        }
        if !(0.0..1.0).contains(&self.sample_fraction) {
            return bad(format!("sample fraction {} outside [0, 1)", self.sample_fraction));
        }
        if let Some(w) = self.w_prior {
            if !(0.0..=0.5).contains(&w) {
                return bad(format!("prior error rate {w} outside [0, 1/2]"));
            }
        }
        Ok(())
    }
}

impl Default for EcConfig {
    fn default() -> Self {
        Self::ldpc(0.15)
    }
}

/// Syndrome bits for a block of `len` bits at error rate `w`.
pub fn syndrome_len(len: usize, w: f64, margin: f64) -> Result<usize> {
    let rate = binary_entropy(w.clamp(0.0, 0.5))? + margin;
    Ok(((len as f64 * rate).ceil() as usize).min(len))
}

/// Everything needed to rebuild the code; published alongside the syndrome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeDescriptor {
    pub scheme: EcScheme,
    pub w: f64,
    pub margin: f64,
    pub block_lens: Vec<usize>,
    pub syndrome_lens: Vec<usize>,
    pub code_seed: u64,
}

#[derive(Clone, Debug)]
enum BlockCode {
    /// The syndrome is the block itself.
    Disclose,
    /// Dense rows as bit masks, with the minimum-weight pattern for every
    /// reachable syndrome.
    Exhaustive {
        rows: Vec<u32>,
        leaders: Vec<Option<u32>>,
    },
    Sparse(SparseCode),
}

#[derive(Clone, Debug)]
struct SparseCode {
    n: usize,
    /// Variables in each check.
    check_vars: Vec<Vec<usize>>,
    /// `(check, slot in check_vars[check])` for each variable.
    var_edges: Vec<Vec<(usize, usize)>>,
}

impl SparseCode {
    fn random(n: usize, r: usize, rng: &mut ChaCha8Rng) -> Self {
        let dv = 3.min(r);
        let mut sockets: Vec<usize> = (0..n * dv).map(|i| i % r).collect();
        sockets.shuffle(rng);
        // Repair repeated checks inside one column by swapping sockets.
        for v in 0..n {
            for k in 0..dv {
                let mut tries = 0;
                while (0..k).any(|j| sockets[v * dv + j] == sockets[v * dv + k]) && tries < 100 {
                    let other = rng.gen_range(0..sockets.len());
                    sockets.swap(v * dv + k, other);
                    tries += 1;
                }
            }
        }
        let mut check_vars = vec![Vec::new(); r];
        let mut var_edges = vec![Vec::new(); n];
        for v in 0..n {
            let mut seen = Vec::with_capacity(dv);
            for k in 0..dv {
                let c = sockets[v * dv + k];
                if seen.contains(&c) {
                    continue;
                }
                seen.push(c);
                var_edges[v].push((c, check_vars[c].len()));
                check_vars[c].push(v);
            }
        }
        Self {
            n,
            check_vars,
            var_edges,
        }
    }

    fn syndrome(&self, bits: &[u8]) -> Vec<u8> {
        self.check_vars
            .iter()
            .map(|vars| vars.iter().fold(0, |acc, &v| acc ^ bits[v]))
            .collect()
    }

    /// Sum-product decoding of an error pattern with syndrome `target`.
    fn decode(&self, target: &[u8], w: f64, max_iter: usize) -> Option<Vec<u8>> {
        const CAP: f64 = 30.0;
        let w = w.clamp(1e-6, 0.5 - 1e-6);
        let prior = ((1.0 - w) / w).ln();
        let mut guess = vec![0u8; self.n];
        if self.syndrome(&guess) == target {
            return Some(guess);
        }
        let mut c2v: Vec<Vec<f64>> = self.check_vars.iter().map(|vs| vec![0.0; vs.len()]).collect();
        let mut v2c: Vec<Vec<f64>> = self.check_vars.iter().map(|vs| vec![prior; vs.len()]).collect();
        for _ in 0..max_iter {
            for (c, vars) in self.check_vars.iter().enumerate() {
                let sign = if target[c] == 1 { -1.0 } else { 1.0 };
                let t: Vec<f64> = v2c[c].iter().map(|m| (m * 0.5).tanh()).collect();
                for k in 0..vars.len() {
                    let mut prod = sign;
                    for (j, tj) in t.iter().enumerate() {
                        if j != k {
                            prod *= tj;
                        }
                    }
                    let prod = prod.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                    c2v[c][k] = (2.0 * prod.atanh()).clamp(-CAP, CAP);
                }
            }
            for (v, edges) in self.var_edges.iter().enumerate() {
                let total = prior + edges.iter().map(|&(c, k)| c2v[c][k]).sum::<f64>();
                guess[v] = u8::from(total < 0.0);
                for &(c, k) in edges {
                    v2c[c][k] = (total - c2v[c][k]).clamp(-CAP, CAP);
                }
            }
            if self.syndrome(&guess) == target {
                return Some(guess);
            }
        }
        None
    }
}

/// Random parity matrices tried per baseline block code.
const BASELINE_CANDIDATES: usize = 256;

/// Distinct syndromes reached by weight-1 patterns, then by weight-2
/// patterns not already covered.
fn low_weight_coverage(rows: &[u32], len: usize) -> (usize, usize) {
    let cols: Vec<u32> = (0..len)
        .map(|j| {
            rows.iter()
                .enumerate()
                .fold(0, |acc, (i, &row)| acc | (((row >> j) & 1) << i))
        })
        .collect();
    let mut seen = vec![false; 1 << rows.len()];
    seen[0] = true;
    let mut single = 0;
    for &c in &cols {
        if !seen[c as usize] {
            seen[c as usize] = true;
            single += 1;
        }
    }
    let mut pairs = 0;
    for i in 0..len {
        for j in i + 1..len {
            let s = (cols[i] ^ cols[j]) as usize;
            if !seen[s] {
                seen[s] = true;
                pairs += 1;
            }
        }
    }
    (single, pairs)
}

fn parity(x: u32) -> u8 {
    (x.count_ones() & 1) as u8
}

impl BlockCode {
    fn build(scheme: EcScheme, len: usize, r: usize, rng: &mut ChaCha8Rng) -> Self {
        if r >= len {
            return Self::Disclose;
        }
        match scheme {
            EcScheme::Baseline => {
                let mask = if len == 32 { u32::MAX } else { (1u32 << len) - 1 };
                let rows = (0..BASELINE_CANDIDATES)
                    .map(|_| (0..r).map(|_| rng.gen::<u32>() & mask).collect::<Vec<u32>>())
                    .max_by_key(|rows| low_weight_coverage(rows, len))
                    .unwrap_or_default();
                let mut leaders = vec![None; 1 << r];
                let mut by_weight: Vec<u32> = (0..1u32 << len).collect();
                by_weight.sort_by_key(|e| (e.count_ones(), *e));
                for e in by_weight {
                    let s = rows
                        .iter()
                        .enumerate()
                        .fold(0usize, |acc, (i, &row)| acc | (usize::from(parity(row & e)) << i));
                    if leaders[s].is_none() {
                        leaders[s] = Some(e);
                    }
                }
                Self::Exhaustive { rows, leaders }
            }
            EcScheme::Ldpc => Self::Sparse(SparseCode::random(len, r, rng)),
        }
    }

    fn syndrome(&self, block: &[u8]) -> Vec<u8> {
        match self {
            Self::Disclose => block.to_vec(),
            Self::Exhaustive { rows, .. } => {
                let x = to_mask(block);
                rows.iter().map(|&row| parity(row & x)).collect()
            }
            Self::Sparse(code) => code.syndrome(block),
        }
    }

    /// Bob's corrected block, or `None` when decoding fails.
    fn decode(&self, block: &[u8], alice: &[u8], cfg: &EcConfig, w: f64) -> Option<Vec<u8>> {
        match self {
            Self::Disclose => Some(alice.to_vec()),
            Self::Exhaustive { rows, leaders } => {
                let x = to_mask(block);
                let s = rows.iter().enumerate().fold(0usize, |acc, (i, &row)| {
                    acc | (usize::from(parity(row & x) ^ alice[i]) << i)
                });
                let e = leaders[s].filter(|e| e.count_ones() as usize <= cfg.radius)?;
                Some(
                    block
                        .iter()
                        .enumerate()
                        .map(|(i, &b)| b ^ ((e >> i) & 1) as u8)
                        .collect(),
                )
            }
            Self::Sparse(code) => {
                let mine = code.syndrome(block);
                let target: Vec<u8> = mine.iter().zip(alice).map(|(u, v)| u ^ v).collect();
                let e = code.decode(&target, w, cfg.max_iterations)?;
                Some(block.iter().zip(&e).map(|(b, e)| b ^ e).collect())
            }
        }
    }
}

fn to_mask(block: &[u8]) -> u32 {
    block
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &b)| acc | (u32::from(b & 1) << i))
}

/// A reconciliation code for a string of fixed length.
#[derive(Clone, Debug)]
pub struct Code {
    descriptor: CodeDescriptor,
    blocks: Vec<BlockCode>,
}

impl Code {
    pub fn new(len: usize, w: f64, cfg: &EcConfig, code_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let block_lens = split_lengths(len, cfg);
        let syndrome_lens = block_lens
            .iter()
            .map(|&l| syndrome_len(l, w, cfg.margin))
            .collect::<Result<Vec<_>>>()?;
        Self::from_descriptor(CodeDescriptor {
            scheme: cfg.scheme,
            w,
            margin: cfg.margin,
            block_lens,
            syndrome_lens,
            code_seed,
        })
    }

    pub fn from_descriptor(descriptor: CodeDescriptor) -> Result<Self> {
        if descriptor.block_lens.len() != descriptor.syndrome_lens.len() {
            return Err(Error::Shape("block and syndrome length lists differ".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(descriptor.code_seed);
        // Full baseline blocks share one code; the exhaustive table is
        // built once per distinct (length, syndrome length).
        let mut cache: Vec<((usize, usize), BlockCode)> = Vec::new();
        let mut blocks = Vec::with_capacity(descriptor.block_lens.len());
        for (&l, &r) in descriptor.block_lens.iter().zip(&descriptor.syndrome_lens) {
            if r > l {
                return Err(Error::Shape(format!("{r} syndrome bits for a {l}-bit block")));
            }
            let code = match descriptor.scheme {
                EcScheme::Baseline => {
                    if l > MAX_EXHAUSTIVE_BLOCK {
                        return Err(Error::TooLarge(format!("exhaustive block of {l} bits")));
                    }
                    if let Some((_, c)) = cache.iter().find(|(k, _)| *k == (l, r)) {
                        c.clone()
                    } else {
                        let c = BlockCode::build(descriptor.scheme, l, r, &mut rng);
                        cache.push(((l, r), c.clone()));
                        c
                    }
                }
                EcScheme::Ldpc => BlockCode::build(descriptor.scheme, l, r, &mut rng),
            };
            blocks.push(code);
        }
        Ok(Self { descriptor, blocks })
    }

    pub fn descriptor(&self) -> &CodeDescriptor {
        &self.descriptor
    }

    pub fn input_len(&self) -> usize {
        self.descriptor.block_lens.iter().sum()
    }

    pub fn syndrome_len(&self) -> usize {
        self.descriptor.syndrome_lens.iter().sum()
    }

    pub fn encode(&self, a: &[u8]) -> Result<Vec<u8>> {
        self.check_len(a.len())?;
        let mut out = Vec::with_capacity(self.syndrome_len());
        let mut at = 0;
        for (code, &l) in self.blocks.iter().zip(&self.descriptor.block_lens) {
            out.extend(code.syndrome(&a[at..at + l]));
            at += l;
        }
        Ok(out)
    }

    /// Bob's corrected string and the indices of blocks that failed to
    /// decode (left uncorrected).
    pub fn decode(&self, b: &[u8], syndrome: &[u8], cfg: &EcConfig) -> Result<(Vec<u8>, Vec<usize>)> {
        self.check_len(b.len())?;
        if syndrome.len() != self.syndrome_len() {
            return Err(Error::Shape(format!(
                "syndrome has {} bits, code expects {}",
                syndrome.len(),
                self.syndrome_len()
            )));
        }
        let mut out = Vec::with_capacity(b.len());
        let mut failed = Vec::new();
        let (mut at, mut sat) = (0, 0);
        let lens = self
            .descriptor
            .block_lens
            .iter()
            .zip(&self.descriptor.syndrome_lens);
        for (k, (code, (&l, &r))) in self.blocks.iter().zip(lens).enumerate() {
            let block = &b[at..at + l];
            match code.decode(block, &syndrome[sat..sat + r], cfg, self.descriptor.w) {
                Some(fixed) => out.extend(fixed),
                None => {
                    failed.push(k);
                    out.extend_from_slice(block);
                }
            }
            at += l;
            sat += r;
        }
        Ok((out, failed))
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.input_len() {
            return Err(Error::Shape(format!(
                "code for {} bits applied to {len}",
                self.input_len()
            )));
        }
        Ok(())
    }
}

fn split_lengths(len: usize, cfg: &EcConfig) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    match cfg.scheme {
        EcScheme::Baseline => {
            let mut v = vec![cfg.block_len; len / cfg.block_len];
            if !len.is_multiple_of(cfg.block_len) {
                v.push(len % cfg.block_len);
            }
            v
        }
        EcScheme::Ldpc => {
            let k = len.div_ceil(cfg.block_len);
            (0..k).map(|i| len / k + usize::from(i < len % k)).collect()
        }
    }
}

/// Alice's side: the code and her syndrome `C`.
pub fn error_correct_encode(
    a_r: &[u8],
    w: f64,
    cfg: &EcConfig,
    code_seed: u64,
) -> Result<(Code, Vec<u8>)> {
    let code = Code::new(a_r.len(), w, cfg, code_seed)?;
    let c = code.encode(a_r)?;
    Ok((code, c))
}

/// Bob's side. Any undecodable block aborts the run.
pub fn error_correct_decode(
    b_r: &[u8],
    c: &[u8],
    code: &Code,
    cfg: &EcConfig,
) -> Result<Vec<u8>> {
    let (fixed, failed) = code.decode(b_r, c, cfg)?;
    if failed.is_empty() {
        Ok(fixed)
    } else {
        Err(crate::Abort::DecodeFailure { blocks: failed }.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy(a: &[u8], w: f64, rng: &mut ChaCha8Rng) -> Vec<u8> {
        a.iter().map(|&x| x ^ u8::from(rng.gen_bool(w))).collect()
    }

    #[test]
    fn noiseless_strings_pass_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<u8> = (0..1000).map(|_| rng.gen_range(0..2)).collect();
        for cfg in [EcConfig::baseline(0.1), EcConfig::ldpc(0.1)] {
            let (code, c) = error_correct_encode(&a, 0.0, &cfg, 9).unwrap();
            assert_eq!(error_correct_decode(&a, &c, &code, &cfg).unwrap(), a);
        }
    }

    #[test]
    fn syndrome_budget() {
        assert_eq!(syndrome_len(16, 0.05, 0.15).unwrap(), 7);
        assert_eq!(syndrome_len(10_000, 0.05, 0.1).unwrap(), 3864);
        assert_eq!(syndrome_len(16, 0.5, 0.1).unwrap(), 16);
    }

    #[test]
    fn ldpc_corrects_moderate_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = EcConfig::ldpc(0.15);
        let a: Vec<u8> = (0..8000).map(|_| rng.gen_range(0..2)).collect();
        let b = noisy(&a, 0.05, &mut rng);
        let (code, c) = error_correct_encode(&a, 0.05, &cfg, 4).unwrap();
        assert_eq!(error_correct_decode(&b, &c, &code, &cfg).unwrap(), a);
    }

    #[test]
    fn baseline_fixes_single_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = EcConfig::baseline(0.4);
        let a: Vec<u8> = (0..160).map(|_| rng.gen_range(0..2)).collect();
        let (code, c) = error_correct_encode(&a, 0.02, &cfg, 5).unwrap();
        let mut b = a.clone();
        b[17] ^= 1;
        let (fixed, failed) = code.decode(&b, &c, &cfg).unwrap();
        assert!(failed.is_empty());
        assert_eq!(fixed, a);
    }

    #[test]
    fn descriptor_rebuilds_code() {
        let cfg = EcConfig::ldpc(0.2);
        let a = vec![1u8; 300];
        let (code, c) = error_correct_encode(&a, 0.03, &cfg, 11).unwrap();
        let rebuilt = Code::from_descriptor(code.descriptor().clone()).unwrap();
        assert_eq!(rebuilt.encode(&a).unwrap(), c);
    }

    #[test]
    fn tight_radius_flags_blocks() {
        let cfg = EcConfig {
            radius: 0,
            ..EcConfig::baseline(0.1)
        };
        let a = vec![0u8; 16];
        let (code, c) = error_correct_encode(&a, 0.1, &cfg, 1).unwrap();
        let mut b = a.clone();
        b[3] = 1;
        let err = error_correct_decode(&b, &c, &code, &cfg).unwrap_err();
        assert!(matches!(err, Error::Abort(crate::Abort::DecodeFailure { .. })));
    }
}
