//! Command-line experiment runner.
//!
//! Exit codes: 0 all configured assertions passed, 1 an assertion failed,
//! 2 configuration/input error, 3 numerical failure during decoding.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::Parser;

use codedsketch::config::{
    resolve_seed, DelaySpec, ExperimentConfig, GridKind, MatrixSource, Mode, ReportFormat,
};
use codedsketch::report::emit_report;
use codedsketch::{runner, Error};

#[derive(Parser, Debug)]
#[command(
    name = "codedsketch",
    version,
    about = "Straggler-resistant distributed approximation of C = A*B: \
             count-sketch compression under an entangled polynomial code"
)]
struct Cli {
    /// approx | sparse-exact | example-golden | sweep
    #[arg(long, default_value = "approx")]
    mode: String,

    /// Block-columns of A / block-rows of B (the coded inner dimension)
    #[arg(long, default_value_t = 2)]
    p: usize,

    /// Block-rows of A
    #[arg(long, default_value_t = 2)]
    m: usize,

    /// Block-columns of B
    #[arg(long, default_value_t = 2)]
    n: usize,

    /// Count-sketch width; sweep mode accepts a comma-separated list
    #[arg(long)]
    bprime: Option<String>,

    /// Number of independent sketches
    #[arg(long)]
    d: Option<usize>,

    /// Accuracy target: per-entry error epsilon * |C|_F
    #[arg(long)]
    epsilon: Option<f64>,

    /// Accuracy target: exceedance probability
    #[arg(long)]
    delta: Option<f64>,

    /// Base of the ceil(log 1/delta) sketch-count rule
    #[arg(long, default_value_t = 2.0)]
    log_base: f64,

    /// Worker count N (default: exactly the recovery threshold)
    #[arg(long)]
    workers: Option<usize>,

    /// roots-of-unity | chebyshev
    #[arg(long, default_value = "roots-of-unity")]
    grid: String,

    /// Left input matrix (.csv or binary container)
    #[arg(long)]
    matrix_a: Option<PathBuf>,

    /// Right input matrix (.csv or binary container)
    #[arg(long)]
    matrix_b: Option<PathBuf>,

    /// Random dense inputs with dimensions RxSxT (A: RxS, B: SxT)
    #[arg(long)]
    random: Option<String>,

    /// Make C = A*B exactly K-block-sparse (needs --random)
    #[arg(long)]
    block_sparse: Option<usize>,

    /// shifted-exponential[:shift=..,rate=..] | fixed-permutation |
    /// adversarial-set[:slow=a-b;c,factor=..]
    #[arg(long, default_value = "shifted-exponential")]
    delay_model: String,

    /// Number of trials
    #[arg(long, default_value_t = 1)]
    trials: usize,

    /// Root seed (falls back to CODEDSKETCH_SEED, then 0)
    #[arg(long)]
    seed: Option<u64>,

    /// Report path (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,

    /// json | csv
    #[arg(long, default_value = "json")]
    format: String,
}

fn parse_dims(spec: &str) -> Result<(usize, usize, usize), Error> {
    let parts: Vec<&str> = spec.split(['x', 'X', ',']).collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "bad --random '{spec}', expected RxSxT (e.g. 16x16x16)"
        )));
    }
    let mut dims = [0usize; 3];
    for (slot, part) in dims.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("bad dimension '{part}': {e}")))?;
    }
    Ok((dims[0], dims[1], dims[2]))
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mode = Mode::from_str(&cli.mode)?;
    let grid = GridKind::from_str(&cli.grid)?;
    let format = ReportFormat::from_str(&cli.format)?;
    let delay = DelaySpec::from_str(&cli.delay_model)?;
    let seed = resolve_seed(cli.seed)?;

    let bprime_list: Option<Vec<usize>> = cli
        .bprime
        .as_ref()
        .map(|s| {
            s.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|e| Error::Config(format!("bad --bprime entry '{v}': {e}")))
                })
                .collect()
        })
        .transpose()?;
    let (bprime, sweep_bprimes) = match (&bprime_list, mode) {
        (Some(list), Mode::Sweep) => (list.first().copied(), Some(list.clone())),
        (Some(list), _) if list.len() > 1 => {
            return Err(Error::Config(
                "a --bprime list is only meaningful in sweep mode".into(),
            ))
        }
        (Some(list), _) => (list.first().copied(), None),
        (None, _) => (None, None),
    };

    let source = match (&cli.matrix_a, &cli.matrix_b, &cli.random) {
        (Some(a), Some(b), None) => {
            if cli.block_sparse.is_some() {
                return Err(Error::Config(
                    "--block-sparse applies to generated matrices, not files".into(),
                ));
            }
            MatrixSource::Files {
                a: a.clone(),
                b: b.clone(),
            }
        }
        (None, None, Some(spec)) => {
            let (r, s, t) = parse_dims(spec)?;
            match cli.block_sparse {
                Some(k) => MatrixSource::RandomBlockSparse { r, s, t, k },
                None => MatrixSource::RandomDense { r, s, t },
            }
        }
        (None, None, None) => {
            if let Some(k) = cli.block_sparse {
                return Err(Error::Config(format!(
                    "--block-sparse {k} needs --random RxSxT for the dimensions"
                )));
            }
            MatrixSource::RandomDense { r: 8, s: 8, t: 8 }
        }
        (Some(_), None, _) | (None, Some(_), _) => {
            return Err(Error::Config(
                "need both --matrix-a and --matrix-b".into(),
            ))
        }
        (Some(_), Some(_), Some(_)) => {
            return Err(Error::Config(
                "--random conflicts with --matrix-a/--matrix-b".into(),
            ))
        }
    };

    Ok(ExperimentConfig {
        mode,
        p: cli.p,
        m: cli.m,
        n: cli.n,
        bprime,
        d: cli.d,
        epsilon: cli.epsilon,
        delta: cli.delta,
        log_base: cli.log_base,
        workers: cli.workers,
        grid,
        source,
        sweep_bprimes,
        delay,
        trials: cli.trials,
        seed,
        out: cli.out.clone(),
        format,
    })
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::NumericalFailure { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match runner::run(&config) {
        Ok(report) => {
            if let Err(e) = emit_report(&report, config.format, config.out.as_deref()) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            if report.passed {
                ExitCode::SUCCESS
            } else {
                for a in report.assertions.iter().filter(|a| !a.passed) {
                    eprintln!("assertion failed: {}: {}", a.name, a.detail);
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
