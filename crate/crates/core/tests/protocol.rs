use nsqkd::boxcore::ConditionalBox;
use nsqkd::protocol::{
    apply_hash, bit_string, parse_bit_string, run_protocol, sample_hash, Code, EcConfig,
    KeyLengthRule, ProtocolParams, PublicMessage, ScriptedSource, Transcript,
};
use nsqkd::quantum::{epr_box, EprParams};
use nsqkd::{Abort, Error};
use nsqkd::boxcore::NBox;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn epr(p: f64, m: usize) -> ConditionalBox {
    epr_box(EprParams::new(p, m).unwrap()).unwrap()
}

fn run(n: usize, m: usize, p: f64, seed: u64) -> Transcript {
    run_protocol(&ProtocolParams::new(n, m, seed), &epr(p, m)).unwrap()
}

#[test]
fn same_seed_same_transcript() {
    let t1 = run(20_000, 4, 0.97, 11);
    let t2 = run(20_000, 4, 0.97, 11);
    assert_eq!(t1, t2);
    let t3 = run(20_000, 4, 0.97, 12);
    assert_ne!(t1.a, t3.a);
}

#[test]
fn transcript_invariants_hold() {
    for seed in 0..5 {
        let t = run(10_000, 6, 0.95, seed);
        t.check_invariants().unwrap();
        assert_eq!(t.n_r as usize, t.key_indices.len());
        assert_eq!(t.n_c, t.n_c_syndrome + t.n_c_check + t.n_c_sample);
        assert_eq!(t.n_c_syndrome as usize, t.c.len());
    }
}

#[test]
fn transcript_json_round_trip() {
    let t = run(5_000, 3, 1.0, 2);
    let text = serde_json::to_string(&t).unwrap();
    let back: Transcript = serde_json::from_str(&text).unwrap();
    assert_eq!(back, t);
}

#[test]
fn public_log_order() {
    let t = run(10_000, 6, 1.0, 3);
    let steps: Vec<&str> = t
        .public_log
        .iter()
        .map(|m| match m {
            PublicMessage::Roles { .. } => "roles",
            PublicMessage::Estimation { .. } => "estimation",
            PublicMessage::ErrorSample { .. } => "sample",
            PublicMessage::Syndrome { .. } => "syndrome",
            PublicMessage::Check { .. } => "check",
            PublicMessage::PrivacyAmplification { .. } => "pa",
        })
        .collect();
    assert_eq!(steps, ["roles", "estimation", "sample", "syndrome", "check", "pa"]);
}

#[test]
fn estimation_count_matches_expectation() {
    // E[N_e] = N δ² · 2/M = 2√N/M at δ = N^{-1/4}.
    let (n, m) = (100_000usize, 6usize);
    let mean = 2.0 * (n as f64).sqrt() / m as f64;
    let q = mean / n as f64;
    let sigma = (n as f64 * q * (1.0 - q)).sqrt();
    let mut total = 0.0;
    for seed in 0..20 {
        let t = run(n, m, 1.0, seed);
        assert!(((t.n_e as f64) - mean).abs() < 5.0 * sigma, "N_e = {}", t.n_e);
        total += t.n_e as f64;
    }
    assert!((total / 20.0 - mean).abs() < 5.0 * sigma / 20f64.sqrt());
}

#[test]
fn raw_key_error_rate() {
    let p = 0.9;
    let mut errors = 0usize;
    let mut total = 0usize;
    for seed in 0..4 {
        let t = run(50_000, 4, p, seed);
        let a = parse_bit_string(&t.a).unwrap();
        let b = parse_bit_string(&t.b).unwrap();
        errors += t.raw_indices.iter().filter(|&&k| a[k] != b[k]).count();
        total += t.raw_indices.len();
    }
    let w = (1.0 - p) / 2.0;
    let sigma = (w * (1.0 - w) / total as f64).sqrt();
    assert!((errors as f64 / total as f64 - w).abs() < 5.0 * sigma);
}

#[test]
fn perfect_source_gives_key() {
    let mut params = ProtocolParams::new(100_000, 6, 9);
    params.key_length = KeyLengthRule::Asymptotic;
    let t = run_protocol(&params, &epr(1.0, 6)).unwrap();
    assert!(t.n_s > 0);
    assert_eq!(t.k_a, t.k_b);
    assert!(t.reconciled);
}

#[test]
fn pr_analog_gives_no_key() {
    let pr = ConditionalBox::pr_analog(4, true).unwrap();
    let t = run_protocol(&ProtocolParams::new(40_000, 4, 5), &pr).unwrap();
    assert!((t.b_est - 0.5).abs() < 1e-12);
    assert_eq!(t.n_s, 0);
    assert_eq!(t.n_s_alternative, 0);
    assert!(t.k_a.is_empty());
}

#[test]
fn white_noise_gives_no_key() {
    let t = run(40_000, 4, 0.0, 5);
    assert!(t.b_est > 1.0);
    assert_eq!(t.n_s, 0);
    assert_eq!(t.n_s_alternative, 0);
}

#[test]
fn local_source_gives_no_key() {
    let b = ConditionalBox::local_deterministic(&[0, 0, 0], &[0, 0, 0, 0]).unwrap();
    let t = run_protocol(&ProtocolParams::new(40_000, 3, 1), &b).unwrap();
    assert!(t.b_est >= 1.0);
    assert_eq!(t.n_s, 0);
}

#[test]
fn mismatched_settings_rejected() {
    let err = run_protocol(&ProtocolParams::new(100, 4, 0), &epr(1.0, 3)).unwrap_err();
    assert!(matches!(err, Error::Shape(_)));
    let no_raw = ConditionalBox::pr_analog(3, false).unwrap();
    assert!(run_protocol(&ProtocolParams::new(100, 3, 0), &no_raw).is_err());
}

#[test]
fn tiny_runs_abort_cleanly() {
    let mut params = ProtocolParams::new(3, 4, 0);
    params.delta = 0.01;
    let err = run_protocol(&params, &epr(1.0, 4)).unwrap_err();
    assert!(matches!(err, Error::Abort(Abort::EmptyEstimationSet)));
    params.delta = 0.999;
    let err = run_protocol(&params, &epr(1.0, 4)).unwrap_err();
    assert!(matches!(err, Error::Abort(_)));
}

#[test]
fn reconciliation_agreement_at_five_percent_noise() {
    // p = 0.9 gives w = 0.05 on the raw key.
    let src = epr(0.9, 6);
    let mut agree = 0;
    for seed in 0..100 {
        let params = ProtocolParams::new(20_000, 6, seed);
        if let Ok(t) = run_protocol(&params, &src) {
            if t.reconciled && t.k_a == t.k_b {
                agree += 1;
            }
        }
    }
    assert!(agree >= 99, "{agree}/100 runs agreed");
}

#[test]
fn scripted_source_runs() {
    let pr = ConditionalBox::pr_analog(3, true).unwrap();
    let src = ScriptedSource {
        nbox: NBox::product(&[pr.clone(), pr]).unwrap(),
    };
    let t = run_protocol(&ProtocolParams::new(5_001, 3, 8), &src).unwrap();
    t.check_invariants().unwrap();
    assert_eq!(t.a.len(), 5_001);
    assert!((t.b_est - 0.5).abs() < 1e-12);
}

/// Exact block-error probability of one baseline block, by enumerating all
/// error patterns (the code is linear, so `A = 0` loses no generality).
fn exact_block_error(code: &Code, cfg: &EcConfig, w: f64) -> f64 {
    let l = code.input_len();
    let zero_syndrome = code.encode(&vec![0; l]).unwrap();
    let mut p_fail = 0.0;
    for e in 0u32..(1 << l) {
        let bits: Vec<u8> = (0..l).map(|i| ((e >> i) & 1) as u8).collect();
        let (fixed, _) = code.decode(&bits, &zero_syndrome, cfg).unwrap();
        if fixed.iter().any(|&v| v != 0) {
            let k = e.count_ones() as i32;
            p_fail += w.powi(k) * (1.0 - w).powi(l as i32 - k);
        }
    }
    p_fail
}

#[test]
fn baseline_block_error_calibration() {
    let w = 0.05;
    let cfg = EcConfig::baseline(0.15);
    let code = Code::new(16, w, &cfg, 77).unwrap();
    assert_eq!(code.syndrome_len(), 7);
    let exact = exact_block_error(&code, &cfg, w);
    // 128 cosets can cover at most the weight-0, weight-1 and 111 weight-2
    // patterns, leaving at least this much probability undecoded.
    let floor = 1.0 - 0.95f64.powi(16) - 16.0 * 0.05 * 0.95f64.powi(15)
        - 111.0 * 0.05f64.powi(2) * 0.95f64.powi(14);
    assert!(exact >= floor - 1e-12, "exact {exact} below floor {floor}");

    let blocks = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failed = 0;
    for _ in 0..blocks {
        let a: Vec<u8> = (0..16).map(|_| rng.gen_range(0..2)).collect();
        let b: Vec<u8> = a.iter().map(|&v| v ^ u8::from(rng.gen_bool(w))).collect();
        let (fixed, _) = code.decode(&b, &code.encode(&a).unwrap(), &cfg).unwrap();
        if fixed != a {
            failed += 1;
        }
    }
    let rate = failed as f64 / blocks as f64;
    let sigma = (exact * (1.0 - exact) / blocks as f64).sqrt();
    println!("baseline L=16 w=0.05 margin=0.15: measured block error {rate}, exact {exact:.4}");
    assert!((rate - exact).abs() < 4.0 * sigma);
}

#[test]
fn ldpc_block_error_at_five_percent() {
    let w = 0.05;
    let cfg = EcConfig::ldpc(0.15);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failed = 0;
    let trials = 200;
    for t in 0..trials {
        let code = Code::new(4096, w, &cfg, t).unwrap();
        let a: Vec<u8> = (0..4096).map(|_| rng.gen_range(0..2)).collect();
        let b: Vec<u8> = a.iter().map(|&v| v ^ u8::from(rng.gen_bool(w))).collect();
        let (fixed, _) = code.decode(&b, &code.encode(&a).unwrap(), &cfg).unwrap();
        if fixed != a {
            failed += 1;
        }
    }
    assert!(failed < 2, "{failed}/{trials} LDPC blocks failed");
}

#[test]
fn toeplitz_collision_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let a: Vec<u8> = (0..40).map(|_| rng.gen_range(0..2)).collect();
    let mut a2 = a.clone();
    a2[17] ^= 1;
    a2[3] ^= 1;
    assert_eq!(bit_string(&a).len(), 40);
    let draws = 100_000;
    let mut hits = 0;
    for _ in 0..draws {
        let h = sample_hash(40, 8, &mut rng).unwrap();
        assert_eq!(apply_hash(&h, &a).unwrap(), apply_hash(&h, &a).unwrap());
        if apply_hash(&h, &a).unwrap() == apply_hash(&h, &a2).unwrap() {
            hits += 1;
        }
    }
    let p = 2f64.powi(-8);
    let sigma = (p * (1.0 - p) / draws as f64).sqrt();
    assert!((hits as f64 / draws as f64 - p).abs() < 3.0 * sigma);
}
