use rand::Rng;

use super::{ConditionalBox, NBox};
use crate::error::Result;

/// Dirichlet(1, ..., 1) weights from normalized exponentials.
fn flat_dirichlet<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn random_deterministic<R: Rng + ?Sized>(
    m: usize,
    bob_extra: bool,
    rng: &mut R,
) -> Result<ConditionalBox> {
    let fa: Vec<u8> = (0..m).map(|_| rng.gen_range(0..2)).collect();
    let fb: Vec<u8> = (0..m + usize::from(bob_extra))
        .map(|_| rng.gen_range(0..2))
        .collect();
    ConditionalBox::local_deterministic(&fa, &fb)
}

/// A random member of the no-signaling polytope: a convex mixture of one to
/// four local deterministic boxes and, most of the time, a randomly
/// relabeled PR-analog box (optionally with Alice's outcome flipped).
pub fn random_nonsignaling<R: Rng + ?Sized>(
    m: usize,
    bob_extra: bool,
    rng: &mut R,
) -> Result<ConditionalBox> {
    let mut parts = Vec::new();
    for _ in 0..rng.gen_range(1..=4) {
        parts.push(random_deterministic(m, bob_extra, rng)?);
    }
    if rng.gen_bool(0.8) {
        let pr = ConditionalBox::pr_analog(m, bob_extra)?.relabel(rng.gen_range(0..m))?;
        let pr = if rng.gen_bool(0.5) {
            ConditionalBox::from_fn(m, bob_extra, |a, b, x, y| pr.get(a ^ 1, b, x, y))?
        } else {
            pr
        };
        parts.push(pr);
    }
    let weights = flat_dirichlet(parts.len(), rng);
    let mut acc = parts[0].clone();
    let mut mass = weights[0];
    for (w, part) in weights.iter().zip(&parts).skip(1) {
        mass += w;
        acc = part.mix(&acc, w / mass)?;
    }
    Ok(acc)
}

/// A random no-signaling `N`-pair box: a mixture of one to three products of
/// independent random single-pair boxes. Mixtures of products are in general
/// correlated across pairs.
pub fn random_nonsignaling_nbox<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    bob_extra: bool,
    rng: &mut R,
) -> Result<NBox> {
    let k = rng.gen_range(1..=3);
    let weights = flat_dirichlet(k, rng);
    let mut parts = Vec::with_capacity(k);
    for w in weights {
        let singles = (0..n)
            .map(|_| random_nonsignaling(m, bob_extra, rng))
            .collect::<Result<Vec<_>>>()?;
        parts.push((w, NBox::product(&singles)?));
    }
    // Renormalize against rounding in the weights.
    let total: f64 = parts.iter().map(|(w, _)| w).sum();
    for (w, _) in &mut parts {
        *w /= total;
    }
    NBox::mixture(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_boxes_are_nonsignaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let m = rng.gen_range(2..=5);
            let b = random_nonsignaling(m, rng.gen_bool(0.5), &mut rng).unwrap();
            assert!(b.check_nonsignaling(1e-12).pass);
        }
        let p = random_nonsignaling_nbox(2, 3, true, &mut rng).unwrap();
        assert!(p.check_nonsignaling(1e-10).pass);
    }
}
