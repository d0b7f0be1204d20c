use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use nsqkd::boxcore::{ConditionalBox, NBox};
use nsqkd::lpverify::{key_table, max_guessing};
use nsqkd::protocol::{run_protocol, EcConfig, KeyLengthRule, ProtocolParams};
use nsqkd::quantum::{epr_box, EprParams};
use nsqkd::security::{
    key_distance_exact, linear_grid, optimal_m, p_min, pa_bound, rate_curve, rates_csv,
    SecurityReport,
};
use nsqkd::verify::{collision_rate, run_suite, Suite};
use nsqkd::{Error, Result};

#[derive(Parser, Debug, Serialize)]
#[command(name = "nsqkd", version, about = "Device-independent key distribution against no-signaling adversaries")]
struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the result here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
enum Command {
    /// Run the protocol end to end and print the transcript.
    Simulate(SimulateArgs),
    /// Asymptotic key rate of noisy EPR pairs over a purity grid.
    Rates(RatesArgs),
    /// Smallest purity with a positive key rate.
    Threshold(ThresholdArgs),
    /// Numerical checks of the lemmas behind the security proof.
    VerifyLemmas(VerifyArgs),
    /// Best no-signaling eavesdropper guessing probability.
    EveLp(EveArgs),
    /// Collision statistics of the Toeplitz hash family.
    HashTest(HashArgs),
    /// Exact key distance of a tiny instance against its privacy bound.
    KeyDistance(KeyDistanceArgs),
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    /// Number of pairs.
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    /// Settings per party.
    #[arg(long, default_value_t = 6)]
    m: usize,
    /// EPR purity of the honest source.
    #[arg(long, default_value_t = 1.0, conflicts_with_all = ["box_file", "preset"])]
    purity: f64,
    /// Source box file (must include Bob's raw-key setting).
    #[arg(long = "box", conflicts_with = "preset")]
    box_file: Option<PathBuf>,
    /// Source preset: pr-analog or uniform.
    #[arg(long)]
    preset: Option<String>,
    /// Sampling bias, or `auto` for N^{-1/4}.
    #[arg(long, default_value = "auto")]
    delta: String,
    #[arg(long, value_enum, default_value_t = EcArg::Ldpc)]
    ec: EcArg,
    /// Syndrome overhead above h(w).
    #[arg(long, default_value_t = 0.15)]
    margin: f64,
    /// Use this error rate instead of sacrificing a sample.
    #[arg(long)]
    w_prior: Option<f64>,
    #[arg(long, value_enum, default_value_t = RuleArg::Composable)]
    key_length: RuleArg,
    /// Drop the raw outcome strings from the output.
    #[arg(long)]
    brief: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum EcArg {
    Baseline,
    Ldpc,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum RuleArg {
    Composable,
    Asymptotic,
}

#[derive(Args, Debug, Serialize)]
struct RatesArgs {
    /// Comma-separated setting counts.
    #[arg(long, value_delimiter = ',', default_values_t = [3usize, 4, 6, 11, 100])]
    m: Vec<usize>,
    /// Purity grid START:END:STEP.
    #[arg(long, default_value = "0.9:1.0:0.001")]
    p_grid: String,
}

#[derive(Args, Debug, Serialize)]
struct ThresholdArgs {
    #[arg(long, default_value_t = 6)]
    m: usize,
    /// Also report the best M up to this value at `--purity`.
    #[arg(long)]
    m_max: Option<usize>,
    #[arg(long, default_value_t = 0.98)]
    purity: f64,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    /// `all` or a comma-separated list of suites.
    #[arg(long, default_value = "all")]
    suite: String,
}

#[derive(Args, Debug, Serialize)]
struct EveArgs {
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Box file (Bob's raw-key column, if present, is ignored).
    #[arg(long = "box", conflicts_with = "preset")]
    box_file: Option<PathBuf>,
    /// pr-analog, uniform, epr:P or local.
    #[arg(long, default_value = "pr-analog")]
    preset: String,
    /// Number of pairs (products of the preset when 2).
    #[arg(long, default_value_t = 1)]
    pairs: usize,
    /// Alice's target setting string, comma separated; one value applies to every pair.
    #[arg(long, value_delimiter = ',', default_values_t = [0usize])]
    x: Vec<usize>,
}

#[derive(Args, Debug, Serialize)]
struct HashArgs {
    #[arg(long, default_value_t = 32)]
    in_len: usize,
    #[arg(long, default_value_t = 8)]
    out_len: usize,
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
    /// Number of distinct input pairs.
    #[arg(long, default_value_t = 1)]
    pairs: usize,
}

#[derive(Args, Debug, Serialize)]
struct KeyDistanceArgs {
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// pr-analog, uniform, epr:P or local.
    #[arg(long, default_value = "pr-analog")]
    preset: String,
    #[arg(long, default_value_t = 1)]
    pairs: usize,
    #[arg(long, default_value_t = 1)]
    n_s: u32,
}

fn preset_box(name: &str, m: usize, bob_extra: bool) -> Result<ConditionalBox> {
    match name {
        "pr-analog" => ConditionalBox::pr_analog(m, bob_extra),
        "uniform" => ConditionalBox::uniform(m, bob_extra),
        "local" => ConditionalBox::local_deterministic(&vec![0; m], &vec![0; m + usize::from(bob_extra)]),
        _ => match name.strip_prefix("epr:") {
            Some(p) => {
                let p: f64 = p
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad purity in preset '{name}'")))?;
                let b = epr_box(EprParams::new(p, m)?)?;
                ConditionalBox::from_fn(m, bob_extra, |a, bb, x, y| b.get(a, bb, x, y))
            }
            None => Err(Error::InvalidParameter(format!("unknown preset '{name}'"))),
        },
    }
}

fn read_box(path: &PathBuf) -> Result<ConditionalBox> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
    ConditionalBox::from_json(&text)
}

/// Drops Bob's raw-key setting.
fn estimation_block(b: &ConditionalBox) -> Result<ConditionalBox> {
    ConditionalBox::from_fn(b.settings(), false, |a, bb, x, y| b.get(a, bb, x, y))
}

fn pair_box(single: &ConditionalBox, pairs: usize) -> Result<NBox> {
    if pairs == 0 {
        return Err(Error::InvalidParameter("--pairs must be >= 1".into()));
    }
    NBox::product(&vec![single.clone(); pairs])
}

fn simulate(args: &SimulateArgs, seed: u64) -> Result<Value> {
    let source = match (&args.box_file, &args.preset) {
        (Some(path), _) => read_box(path)?,
        (None, Some(name)) => preset_box(name, args.m, true)?,
        (None, None) => epr_box(EprParams::new(args.purity, args.m)?)?,
    };
    let mut params = ProtocolParams::new(args.n, args.m, seed);
    if args.delta != "auto" {
        params.delta = args
            .delta
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("--delta '{}' is neither auto nor a number", args.delta)))?;
    }
    params.ec = match args.ec {
        EcArg::Baseline => EcConfig::baseline(args.margin),
        EcArg::Ldpc => EcConfig::ldpc(args.margin),
    };
    params.ec.w_prior = args.w_prior;
    params.key_length = match args.key_length {
        RuleArg::Composable => KeyLengthRule::Composable,
        RuleArg::Asymptotic => KeyLengthRule::Asymptotic,
    };
    let transcript = run_protocol(&params, &source)?;
    transcript.check_invariants()?;
    let report = SecurityReport::evaluate(
        params.key_length,
        transcript.n,
        transcript.n_r,
        transcript.n_e,
        transcript.n_c,
        transcript.b_est,
        args.m,
    )?;
    let summary = json!({
        "keys_agree": transcript.k_a == transcript.k_b,
        "N_s": transcript.n_s,
        "N_s_other_rule": transcript.n_s_alternative,
        "N_e": transcript.n_e,
        "N_r": transcript.n_r,
        "N_c": transcript.n_c,
        "B_est": transcript.b_est,
        "w_est": transcript.w_est,
    });
    let mut t = serde_json::to_value(&transcript)?;
    if args.brief {
        if let Some(obj) = t.as_object_mut() {
            for key in ["i", "j", "a", "b", "x", "y", "public_log"] {
                obj.remove(key);
            }
        }
    }
    Ok(json!({ "params": params, "summary": summary, "security": report, "transcript": t }))
}

enum Output {
    Json(Value),
    Text(String),
}

fn run(cli: &Cli, cfg: Value) -> Result<Output> {
    let csv_unsupported = |cmd: &str| {
        Err(Error::InvalidParameter(format!("{cmd} has no CSV output; use --format json")))
    };
    match &cli.command {
        Command::Simulate(args) => {
            if cli.format == Format::Csv {
                return csv_unsupported("simulate");
            }
            let mut out = simulate(args, cli.seed)?;
            out["config"] = cfg;
            Ok(Output::Json(out))
        }
        Command::Rates(args) => {
            let parts: Vec<f64> = args
                .p_grid
                .split(':')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::InvalidParameter(format!("bad --p-grid '{}'", args.p_grid)))?;
            let [start, end, step] = parts[..] else {
                return Err(Error::InvalidParameter("--p-grid needs START:END:STEP".into()));
            };
            let grid = linear_grid(start, end, step)?;
            let mut rows = Vec::new();
            for &m in &args.m {
                rows.extend(rate_curve(m, &grid)?);
            }
            Ok(match cli.format {
                Format::Csv => Output::Text(rates_csv(&rows)),
                Format::Json => Output::Json(json!({ "config": cfg, "rows": rows })),
            })
        }
        Command::Threshold(args) => {
            if cli.format == Format::Csv {
                return csv_unsupported("threshold");
            }
            let mut out = json!({ "config": cfg, "M": args.m, "p_min": p_min(args.m)? });
            if let Some(m_max) = args.m_max {
                let (best, rate) = optimal_m(args.purity, m_max)?;
                out["optimal"] = json!({ "p": args.purity, "M_max": m_max, "M": best, "rate": rate });
            }
            Ok(Output::Json(out))
        }
        Command::VerifyLemmas(args) => {
            let mut checks = Vec::new();
            for suite in Suite::parse_list(&args.suite)? {
                checks.extend(run_suite(suite, cli.seed)?);
            }
            let passed = checks.iter().filter(|c| c.pass).count();
            Ok(match cli.format {
                Format::Csv => {
                    let mut s = String::from("suite,check,pass,observed,limit\n");
                    for c in &checks {
                        s.push_str(&format!(
                            "{},\"{}\",{},{},{}\n",
                            c.suite.name(),
                            c.name,
                            c.pass,
                            c.observed,
                            c.limit
                        ));
                    }
                    Output::Text(s)
                }
                Format::Json => Output::Json(json!({
                    "config": cfg,
                    "passed": passed,
                    "total": checks.len(),
                    "checks": checks,
                })),
            })
        }
        Command::EveLp(args) => {
            if cli.format == Format::Csv {
                return csv_unsupported("eve-lp");
            }
            let single = match &args.box_file {
                Some(path) => estimation_block(&read_box(path)?)?,
                None => preset_box(&args.preset, args.m, false)?,
            };
            let nbox = pair_box(&single, args.pairs)?;
            let target = match args.x[..] {
                [x] => vec![x; args.pairs],
                _ => args.x.clone(),
            };
            let g = max_guessing(&nbox, &target)?;
            let bc = nbox.bc_product()?;
            Ok(Output::Json(json!({
                "config": cfg,
                "value": g.value,
                "bc": bc,
                "slack": bc - g.value,
                "mode_probability": g.mode_probability,
                "iterations": g.iterations,
            })))
        }
        Command::HashTest(args) => {
            if cli.format == Format::Csv {
                return csv_unsupported("hash-test");
            }
            if args.in_len == 0 || args.out_len == 0 || args.draws == 0 {
                return Err(Error::InvalidParameter("lengths and draws must be positive".into()));
            }
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cli.seed);
            let mut results = Vec::new();
            for _ in 0..args.pairs {
                let a: Vec<u8> = (0..args.in_len).map(|_| rng.gen_range(0..2)).collect();
                let mut b = a.clone();
                b[rng.gen_range(0..args.in_len)] ^= 1;
                let (rate, sigma) = collision_rate(&a, &b, args.out_len, args.draws, &mut rng)?;
                let expected = 2f64.powi(-(args.out_len as i32));
                results.push(json!({
                    "rate": rate,
                    "expected": expected,
                    "sigma": sigma,
                    "deviation_sigmas": (rate - expected) / sigma,
                }));
            }
            Ok(Output::Json(json!({ "config": cfg, "pairs": results })))
        }
        Command::KeyDistance(args) => {
            if cli.format == Format::Csv {
                return csv_unsupported("key-distance");
            }
            let single = preset_box(&args.preset, args.m, false)?;
            let nbox = pair_box(&single, args.pairs)?;
            let g = max_guessing(&nbox, &vec![0; args.pairs])?;
            let distance = key_distance_exact(&key_table(&g.witness, args.n_s)?);
            let bound = pa_bound(args.pairs as f64, f64::from(args.n_s), 0.0, nbox.bc_product()?);
            Ok(Output::Json(json!({
                "config": cfg,
                "distance": distance,
                "pa_bound": bound,
                "within_bound": distance <= bound,
                "guessing": g.value,
            })))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Abort(_) => 1,
        Error::InvalidParameter(_)
        | Error::Shape(_)
        | Error::Precondition(_)
        | Error::TooLarge(_)
        | Error::Json(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = serde_json::to_value(&cli).unwrap_or(Value::Null);
    if let Some(obj) = config.as_object_mut() {
        obj.remove("out");
    }
    eprintln!("config: {config}");
    let result = run(&cli, config).and_then(|output| {
        let text = match output {
            Output::Json(v) => serde_json::to_string_pretty(&v)? + "\n",
            Output::Text(s) => s,
        };
        match &cli.out {
            Some(path) => fs::write(path, text)
                .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
