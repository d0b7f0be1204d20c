//! Seeded numerical checks of the statements the security argument rests
//! on. Each suite returns one [`Check`] per property.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::boxcore::{
    bc_variable, marginal_identity_residual, random_nonsignaling, random_nonsignaling_nbox,
    ConditionalBox, NBox,
};
use crate::error::{Error, Result};
use crate::lpverify::{beta_monotonicity_check, max_guessing_single, MONOGAMY_TOL};
use crate::protocol::{apply_hash, sample_hash};
use crate::quantum::{epr_box, EprParams};
use crate::stats::{
    frequencies, mode_is_pv, symmetric_event_bound, type_count_bound, type_distribution,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    SymmetricEvents,
    TypeMode,
    Estimation,
    MarginalIdentity,
    Monogamy,
    BetaDominance,
    TwoUniversal,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::SymmetricEvents,
        Suite::TypeMode,
        Suite::Estimation,
        Suite::MarginalIdentity,
        Suite::Monogamy,
        Suite::BetaDominance,
        Suite::TwoUniversal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::SymmetricEvents => "symmetric-events",
            Suite::TypeMode => "type-mode",
            Suite::Estimation => "estimation",
            Suite::MarginalIdentity => "marginal-identity",
            Suite::Monogamy => "monogamy",
            Suite::BetaDominance => "beta-dominance",
            Suite::TwoUniversal => "two-universal",
        }
    }

    /// Parses a suite name, or `all`.
    pub fn parse_list(s: &str) -> Result<Vec<Suite>> {
        if s == "all" {
            return Ok(Self::ALL.to_vec());
        }
        s.split(',')
            .map(|part| {
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.name() == part.trim())
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown suite '{part}'")))
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub pass: bool,
    /// Observed quantity compared against `limit`.
    pub observed: f64,
    pub limit: f64,
    pub detail: String,
}

fn check(suite: Suite, name: &str, observed: f64, limit: f64, detail: String) -> Check {
    Check {
        suite,
        name: name.to_string(),
        pass: observed <= limit,
        observed,
        limit,
        detail,
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(suite as u64);
    match suite {
        Suite::SymmetricEvents => symmetric_events(),
        Suite::TypeMode => type_mode(),
        Suite::Estimation => estimation(&mut rng),
        Suite::MarginalIdentity => marginal_identity(&mut rng),
        Suite::Monogamy => monogamy(&mut rng),
        Suite::BetaDominance => beta_dominance(),
        Suite::TwoUniversal => two_universal(&mut rng),
    }
}

/// Every symmetric event on `{0,1}^6` against the i.i.d.-to-symmetric lift.
fn symmetric_events() -> Result<Vec<Check>> {
    let suite = Suite::SymmetricEvents;
    let n = 6u64;
    let types = frequencies(n, 2)?;
    let grid: Vec<f64> = (0..=2000).map(|k| k as f64 / 2000.0).collect();
    let per_p: Vec<Vec<f64>> = grid
        .iter()
        .map(|&p| {
            let d = type_distribution(&[1.0 - p, p], n)?;
            Ok(types.iter().map(|q| d[q]).collect())
        })
        .collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    for mask in 0u32..1 << types.len() {
        let eps = per_p
            .iter()
            .map(|probs| {
                probs
                    .iter()
                    .enumerate()
                    .filter(|(t, _)| mask >> t & 1 == 1)
                    .map(|(_, v)| v)
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        let bound = symmetric_event_bound(eps.min(1.0), n, 2)?;
        // The worst symmetric distribution is uniform on one type class.
        let p_event = if mask == 0 { 0.0 } else { 1.0 };
        if bound > 0.0 {
            worst = worst.max(p_event / bound);
        }
    }
    Ok(vec![check(
        suite,
        "all 128 events, N = 6",
        worst,
        1.0,
        format!("largest probability / bound ratio over symmetric distributions (|types| <= {})", type_count_bound(n, 2)?),
    )])
}

fn type_mode() -> Result<Vec<Check>> {
    let suite = Suite::TypeMode;
    let mut failures = 0;
    let mut cases = 0;
    let mut norm: f64 = 0.0;
    for (k, max_n) in [(2usize, 8u64), (3, 5)] {
        for n in 1..=max_n {
            for q in frequencies(n, k)? {
                let pv = q.distribution();
                cases += 1;
                if !mode_is_pv(&pv, n)? {
                    failures += 1;
                }
                let total: f64 = type_distribution(&pv, n)?.values().sum();
                norm = norm.max((total - 1.0).abs());
            }
        }
    }
    Ok(vec![
        check(
            suite,
            "mode at the source distribution",
            failures as f64,
            0.0,
            format!("{failures} of {cases} grid distributions fail"),
        ),
        check(suite, "type distribution normalization", norm, 1e-12, String::new()),
    ])
}

/// Honest i.i.d. pairs: how often the true BC mean exceeds the estimate
/// plus `N_e^{-1/4}`.
pub fn estimation_violation_rate<R: Rng + ?Sized>(
    source: &ConditionalBox,
    n_e: usize,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    let m = source.settings();
    let truth = source.bc_value()?;
    let slack = (n_e as f64).powf(-0.25);
    let mut cdf = vec![[0.0; 3]; m * m];
    for x in 0..m {
        for y in 0..m {
            let p00 = source.get(0, 0, x, y);
            let p01 = p00 + source.get(0, 1, x, y);
            cdf[x * m + y] = [p00, p01, p01 + source.get(1, 0, x, y)];
        }
    }
    let mut violations = 0;
    for _ in 0..trials {
        let mut total = 0.0;
        for _ in 0..n_e {
            let x = rng.gen_range(0..m);
            let y = if rng.gen_bool(0.5) { x } else { (x + 1) % m };
            let u: f64 = rng.gen();
            let o = cdf[x * m + y].iter().take_while(|&&t| u >= t).count() as u8;
            total += bc_variable(o >> 1, o & 1, x, y, m);
        }
        if truth > total / n_e as f64 + slack {
            violations += 1;
        }
    }
    Ok(violations as f64 / trials as f64)
}

fn estimation(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let suite = Suite::Estimation;
    let mut out = Vec::new();
    for (p, m) in [(1.0, 6), (0.95, 3)] {
        let b = epr_box(EprParams::new(p, m)?)?;
        let n_e = 400;
        let rate = estimation_violation_rate(&b, n_e, 500, rng)?;
        let bound = crate::stats::estimation_confidence(1, n_e as u64, m as f64 + 0.5, 2)?;
        out.push(check(
            suite,
            &format!("p = {p}, M = {m}, N_e = {n_e}"),
            rate,
            bound.min(1.0),
            format!("empirical violation frequency vs bound {bound:.3e}"),
        ));
    }
    Ok(out)
}

fn marginal_identity(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let suite = Suite::MarginalIdentity;
    let mut worst: f64 = 0.0;
    for k in 0..500 {
        let b = random_nonsignaling(2 + k % 3, k % 2 == 0, rng)?;
        let nb = NBox::from_single(&b);
        for a in 0..2 {
            worst = worst.max(marginal_identity_residual(&nb, &[a])?);
        }
    }
    let mut worst_n: f64 = 0.0;
    for k in 0..50 {
        let nb = random_nonsignaling_nbox(2, 2 + k % 2, false, rng)?;
        for a in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            worst_n = worst_n.max(marginal_identity_residual(&nb, &a)?);
        }
    }
    Ok(vec![
        check(suite, "500 single-pair boxes", worst, 1e-10, String::new()),
        check(suite, "50 two-pair boxes", worst_n, 1e-10, String::new()),
    ])
}

fn monogamy(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let suite = Suite::Monogamy;
    let mut excess = f64::NEG_INFINITY;
    for k in 0..200 {
        let m = 2 + k % 2;
        let b = random_nonsignaling(m, false, rng)?;
        let g = max_guessing_single(&b, rng.gen_range(0..m))?;
        excess = excess.max(g.value - b.bc_value()?);
    }
    let mut squeeze: f64 = 0.0;
    for m in 2..=4 {
        let g = max_guessing_single(&ConditionalBox::pr_analog(m, false)?, 0)?;
        squeeze = squeeze.max((g.value - 0.5).abs());
    }
    Ok(vec![
        check(
            suite,
            "guessing <= BC value, 200 boxes",
            excess,
            MONOGAMY_TOL,
            "largest guessing - BC value".into(),
        ),
        check(suite, "PR-analog squeeze at 1/2", squeeze, 1e-7, String::new()),
    ])
}

fn beta_dominance() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (m, n) in [(2, 1), (4, 1), (2, 2), (3, 2), (3, 3), (4, 3)] {
        out.push(check(
            Suite::BetaDominance,
            &format!("M = {m}, n = {n}"),
            beta_monotonicity_check(m, n)?,
            1e-14,
            String::new(),
        ));
    }
    Ok(out)
}

/// Collision frequency of random Toeplitz hashes on a fixed pair of distinct
/// inputs, with its binomial standard deviation.
pub fn collision_rate<R: Rng + ?Sized>(
    a: &[u8],
    b: &[u8],
    out_len: usize,
    draws: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let mut hits = 0usize;
    for _ in 0..draws {
        let h = sample_hash(a.len(), out_len, rng)?;
        if apply_hash(&h, a)? == apply_hash(&h, b)? {
            hits += 1;
        }
    }
    let p = 2f64.powi(-(out_len as i32));
    Ok((hits as f64 / draws as f64, (p * (1.0 - p) / draws as f64).sqrt()))
}

fn two_universal(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for out_len in [4usize, 8] {
        let a: Vec<u8> = (0..32).map(|_| rng.gen_range(0..2)).collect();
        let mut b = a.clone();
        b[rng.gen_range(0..32)] ^= 1;
        let (rate, sigma) = collision_rate(&a, &b, out_len, 20_000, rng)?;
        let p = 2f64.powi(-(out_len as i32));
        out.push(check(
            Suite::TwoUniversal,
            &format!("collision rate, {out_len} output bits"),
            (rate - p).abs() / sigma,
            3.0,
            format!("rate {rate:.5} vs {p:.5}, in standard deviations"),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        assert_eq!(Suite::parse_list("all").unwrap().len(), 7);
        assert_eq!(
            Suite::parse_list("type-mode,monogamy").unwrap(),
            vec![Suite::TypeMode, Suite::Monogamy]
        );
        assert!(Suite::parse_list("nope").is_err());
    }

    #[test]
    fn fast_suites_pass() {
        for suite in [Suite::TypeMode, Suite::BetaDominance, Suite::MarginalIdentity] {
            for c in run_suite(suite, 1).unwrap() {
                assert!(c.pass, "{c:?}");
            }
        }
    }
}
