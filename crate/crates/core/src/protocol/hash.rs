//! Toeplitz hashing over GF(2).
//!
//! The matrix is `T[i][j] = s[i - j + inLen - 1]` for a seed `s` of
//! `inLen + outLen - 1` bits, so output bit `i` is
//! `⊕_j a_j s[i + inLen - 1 - j]`: every set input bit XORs a window of the
//! seed into the output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Packs 0/1 bytes into little-endian 64-bit words.
pub fn pack(bits: &[u8]) -> Vec<u64> {
    let mut words = vec![0u64; bits.len().div_ceil(64)];
    for (i, &b) in bits.iter().enumerate() {
        words[i / 64] |= u64::from(b & 1) << (i % 64);
    }
    words
}

pub fn unpack(words: &[u64], len: usize) -> Vec<u8> {
    (0..len).map(|i| ((words[i / 64] >> (i % 64)) & 1) as u8).collect()
}

/// Bits as a `0`/`1` string.
pub fn bit_string(bits: &[u8]) -> String {
    bits.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect()
}

pub fn parse_bit_string(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(Error::Shape(format!("'{c}' in bit string"))),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoUniversalHash {
    in_len: usize,
    out_len: usize,
    /// Seed bits packed little-endian into bytes, hex encoded.
    #[serde(with = "hex_bits")]
    seed: Vec<u8>,
}

mod hex_bits {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bits: &[u8], s: S) -> Result<S::Ok, S::Error> {
        let mut bytes = vec![0u8; bits.len().div_ceil(8)];
        for (i, &b) in bits.iter().enumerate() {
            bytes[i / 8] |= b << (i % 8);
        }
        s.serialize_str(&format!("{}:{}", bits.len(), hex::encode(bytes)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        use serde::de::Error;
        let text = String::deserialize(d)?;
        let (len, body) = text
            .split_once(':')
            .ok_or_else(|| D::Error::custom("expected LEN:HEX"))?;
        let len: usize = len.parse().map_err(D::Error::custom)?;
        let bytes = hex::decode(body).map_err(D::Error::custom)?;
        if bytes.len() != len.div_ceil(8) {
            return Err(D::Error::custom("seed length does not match hex payload"));
        }
        Ok((0..len).map(|i| (bytes[i / 8] >> (i % 8)) & 1).collect())
    }
}

impl TwoUniversalHash {
    pub fn new(in_len: usize, out_len: usize, seed: Vec<u8>) -> Result<Self> {
        if out_len > in_len {
            return Err(Error::Shape(format!(
                "output length {out_len} exceeds input length {in_len}"
            )));
        }
        let want = Self::seed_len(in_len, out_len);
        if seed.len() != want || seed.iter().any(|&b| b > 1) {
            return Err(Error::Shape(format!(
                "Toeplitz seed has {} bits, expected {want}",
                seed.len()
            )));
        }
        Ok(Self {
            in_len,
            out_len,
            seed,
        })
    }

    fn seed_len(in_len: usize, out_len: usize) -> usize {
        (in_len + out_len).saturating_sub(1)
    }

    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn out_len(&self) -> usize {
        self.out_len
    }

    pub fn seed(&self) -> &[u8] {
        &self.seed
    }

    /// Matrix entry `T[i][j]`.
    pub fn entry(&self, i: usize, j: usize) -> u8 {
        self.seed[i + self.in_len - 1 - j]
    }
}

pub fn sample_hash<R: Rng + ?Sized>(
    in_len: usize,
    out_len: usize,
    rng: &mut R,
) -> Result<TwoUniversalHash> {
    let n = TwoUniversalHash::seed_len(in_len, out_len);
    let seed = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
    TwoUniversalHash::new(in_len, out_len, seed)
}

/// `T · a` over GF(2).
pub fn apply_hash(h: &TwoUniversalHash, a: &[u8]) -> Result<Vec<u8>> {
    if a.len() != h.in_len {
        return Err(Error::Shape(format!(
            "hash expects {} input bits, got {}",
            h.in_len,
            a.len()
        )));
    }
    if h.out_len == 0 {
        return Ok(Vec::new());
    }
    let out_words = h.out_len.div_ceil(64);
    let seed = pack(&h.seed);
    // Seed bits `start .. start + 63` as one word.
    let window = |start: usize| {
        let (w, r) = (start / 64, start % 64);
        let lo = seed.get(w).map_or(0, |&v| v >> r);
        let hi = if r == 0 { 0 } else { seed.get(w + 1).map_or(0, |&v| v << (64 - r)) };
        lo | hi
    };
    let mut acc = vec![0u64; out_words];
    for (j, &bit) in a.iter().enumerate() {
        if bit & 1 == 0 {
            continue;
        }
        let offset = h.in_len - 1 - j;
        for (k, dst) in acc.iter_mut().enumerate() {
            *dst ^= window(offset + 64 * k);
        }
    }
    Ok(unpack(&acc, h.out_len))
}

/// Row-by-row product, for cross-checking [`apply_hash`].
pub fn apply_hash_naive(h: &TwoUniversalHash, a: &[u8]) -> Result<Vec<u8>> {
    if a.len() != h.in_len {
        return Err(Error::Shape("input length mismatch".into()));
    }
    Ok((0..h.out_len)
        .map(|i| {
            (0..h.in_len)
                .map(|j| h.entry(i, j) & a[j])
                .fold(0, |acc, v| acc ^ v)
        })
        .collect())
}
