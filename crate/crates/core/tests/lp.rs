use nsqkd::boxcore::{random_nonsignaling, random_nonsignaling_nbox, ConditionalBox, NBox};
use nsqkd::lpverify::{
    key_table, max_guessing, max_guessing_single, max_guessing_with, solve_lp, solve_lp_with,
    LpProblem, LpStatus, PivotRule, TripartiteBox, MONOGAMY_TOL,
};
use nsqkd::quantum::{epr_box, EprParams};
use nsqkd::security::{key_distance_exact, pa_bound};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solves a square system by Gaussian elimination; `None` when singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|s| s.count_ones() as usize == k)
        .map(|s| (0..n).filter(|&j| s >> j & 1 == 1).collect())
        .collect()
}

/// Best objective over all basic feasible solutions.
fn vertex_enumeration(lp: &LpProblem) -> Option<f64> {
    let n = lp.vars();
    let m = lp.equalities.len();
    let mut best: Option<f64> = None;
    for cols in subsets(n, m) {
        let a: Vec<Vec<f64>> = lp
            .equalities
            .iter()
            .map(|(row, _)| cols.iter().map(|&j| row[j]).collect())
            .collect();
        let b: Vec<f64> = lp.equalities.iter().map(|(_, b)| *b).collect();
        let Some(xb) = solve_square(a, b) else { continue };
        if xb.iter().any(|&v| v < -1e-9) {
            continue;
        }
        let value: f64 = cols.iter().zip(&xb).map(|(&j, v)| lp.objective[j] * v).sum();
        best = Some(best.map_or(value, |b: f64| b.max(value)));
    }
    best
}

#[test]
fn simplex_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..300 {
        let n = rng.gen_range(2..=10);
        let m = rng.gen_range(1..=n.min(4));
        let x0: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let mut lp = LpProblem::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        // A positive first row keeps the feasible region bounded.
        let first: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let rhs = first.iter().zip(&x0).map(|(a, x)| a * x).sum();
        lp.add_row(first, rhs);
        for _ in 1..m {
            let row: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let rhs = row.iter().zip(&x0).map(|(a, x)| a * x).sum();
            lp.add_row(row, rhs);
        }
        let oracle = vertex_enumeration(&lp).unwrap();
        for rule in [PivotRule::Bland, PivotRule::Dantzig, PivotRule::SteepestEdge] {
            let s = solve_lp_with(&lp, rule).unwrap();
            assert_eq!(s.status, LpStatus::Optimal);
            assert!((s.optimum - oracle).abs() < 1e-9, "{rule:?}: {} vs {oracle}", s.optimum);
            assert!(s.primal_residual < 1e-9);
        }
    }
}

#[test]
fn degenerate_problem_value() {
    // Many optimal vertices, all with value 1.
    let mut lp = LpProblem::new(vec![1.0, 1.0, 1.0, 0.0]);
    lp.add_row(vec![1.0, 1.0, 1.0, 1.0], 1.0);
    lp.add_row(vec![1.0, 0.0, 0.0, 0.0], 0.0);
    let s = solve_lp(&lp).unwrap();
    assert!((s.optimum - 1.0).abs() < 1e-12);
}

fn guess(b: &ConditionalBox, x: usize) -> f64 {
    max_guessing_single(b, x).unwrap().value
}

#[test]
fn monogamy_on_random_boxes() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 0..200 {
        let m = 2 + k % 2;
        let b = random_nonsignaling(m, false, &mut rng).unwrap();
        let x = rng.gen_range(0..m);
        let g = max_guessing_single(&b, x).unwrap();
        let bc = b.bc_value().unwrap();
        assert!(g.value <= bc + MONOGAMY_TOL, "value {} > bc {bc}", g.value);
        assert!(g.value >= g.mode_probability - 1e-9);
    }
}

#[test]
fn pivot_rules_agree_on_guessing() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let b = NBox::from_single(&random_nonsignaling(3, false, &mut rng).unwrap());
        let u = max_guessing_with(&b, &[1], PivotRule::Bland).unwrap().value;
        for rule in [PivotRule::Dantzig, PivotRule::SteepestEdge] {
            let v = max_guessing_with(&b, &[1], rule).unwrap().value;
            assert!((u - v).abs() < 1e-9);
        }
    }
}

#[test]
fn relabel_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..30 {
        let m = rng.gen_range(2..=4);
        let b = random_nonsignaling(m, false, &mut rng).unwrap();
        let shift = rng.gen_range(0..m);
        let x = rng.gen_range(0..m);
        let r = b.relabel(shift).unwrap();
        assert!((guess(&r, (x + shift) % m) - guess(&b, x)).abs() < 1e-7);
    }
}

#[test]
fn witness_reproduces_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let b = NBox::from_single(&random_nonsignaling(3, false, &mut rng).unwrap());
        let g = max_guessing(&b, &[2]).unwrap();
        let back = g.witness.ab_marginal().unwrap();
        let diff = back
            .entries()
            .iter()
            .zip(b.entries())
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-8);
        assert!(g.witness.check_nonsignaling(1e-8).pass);
    }
}

#[test]
fn quantum_boxes_respect_bound() {
    // LP optimum for the noisy EPR box at M = 2, x = 0; it meets the bound.
    let recorded = [
        (0.8, 0.9343145750507622),
        (0.9, 0.8636038969321075),
        (1.0, 0.7928932188134531),
    ];
    for (p, value) in recorded {
        let b = epr_box(EprParams::new(p, 2).unwrap()).unwrap();
        let b = ConditionalBox::from_fn(2, false, |a, bb, x, y| b.get(a, bb, x, y)).unwrap();
        let v = guess(&b, 0);
        let bound = 0.5 + 2.0 * (p * (std::f64::consts::PI / 8.0).sin().powi(2) + (1.0 - p) / 2.0);
        assert!(v <= bound + 1e-7);
        assert!((v - value).abs() < 1e-7, "p = {p}: {v}");
    }
}

#[test]
fn two_pair_monogamy() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pr = ConditionalBox::pr_analog(2, false).unwrap();
    let g = max_guessing(&NBox::product(&[pr.clone(), pr]).unwrap(), &[0, 1]).unwrap();
    assert!((g.value - 0.25).abs() < 1e-7);
    for _ in 0..3 {
        let b = random_nonsignaling_nbox(2, 2, false, &mut rng).unwrap();
        let g = max_guessing(&b, &[1, 0]).unwrap();
        assert!(g.value <= b.bc_product().unwrap() + MONOGAMY_TOL);
    }
}

fn check_distance(t: &TripartiteBox, b: &NBox, n_s: u32) {
    let table = key_table(t, n_s).unwrap();
    let d = key_distance_exact(&table);
    let bound = pa_bound(b.pairs() as f64, n_s as f64, 0.0, b.bc_product().unwrap());
    assert!(d <= bound + 1e-12, "distance {d} > bound {bound}");
    assert!(key_distance_exact(&table.discard_eve()) <= d + 1e-12);
}

#[test]
fn key_distance_below_privacy_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for k in 0..14 {
        let b = NBox::from_single(&random_nonsignaling(2 + k % 3, false, &mut rng).unwrap());
        let g = max_guessing(&b, &[0]).unwrap();
        check_distance(&g.witness, &b, 1);
        check_distance(&TripartiteBox::with_trivial_eve(&b).unwrap(), &b, 1);
    }
    for k in 0..6 {
        let b = random_nonsignaling_nbox(2, 2, false, &mut rng).unwrap();
        let g = max_guessing(&b, &[0, 0]).unwrap();
        check_distance(&g.witness, &b, 1 + (k % 2) as u32);
    }
}
