//! Experiment configuration: what to run, on which matrices, under which
//! delay model. All fields serialise into the report so a run can be replayed.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{derive_sketch_dims, SchemeParams};
use crate::error::{Error, Result};
use crate::sim::{DelayKind, DelayModel};

/// What the runner should do.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Approximate-multiplication trials with error statistics.
    Approx,
    /// Sparse-product exact-recovery trials.
    SparseExact,
    /// The fixed worked-example instance.
    ExampleGolden,
    /// A table of configurations, each aggregated over trials.
    Sweep,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "approx" => Ok(Mode::Approx),
            "sparse-exact" => Ok(Mode::SparseExact),
            "example-golden" => Ok(Mode::ExampleGolden),
            "sweep" => Ok(Mode::Sweep),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected approx | sparse-exact | example-golden | sweep)"
            ))),
        }
    }
}

/// Which evaluation grid the workers get.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    RootsOfUnity,
    Chebyshev,
}

impl FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "roots-of-unity" => Ok(GridKind::RootsOfUnity),
            "chebyshev" => Ok(GridKind::Chebyshev),
            other => Err(Error::Config(format!(
                "unknown grid '{other}' (expected roots-of-unity | chebyshev)"
            ))),
        }
    }
}

/// Report serialisation format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Config(format!(
                "unknown format '{other}' (expected json | csv)"
            ))),
        }
    }
}

/// Where the input matrices come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum MatrixSource {
    /// `A in R^{r x s}`, `B in R^{s x t}`, entries uniform in [-1, 1).
    RandomDense { r: usize, s: usize, t: usize },
    /// Random matrices shaped so that `C = A*B` has exactly `k` nonzero
    /// blocks in its `m x n` partition.
    RandomBlockSparse { r: usize, s: usize, t: usize, k: usize },
    /// Load from files (`.csv` or the binary container).
    Files { a: PathBuf, b: PathBuf },
}

/// Delay model selector; the root seed is attached at run time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DelaySpec {
    ShiftedExponential { shift: f64, rate: f64 },
    FixedPermutation,
    AdversarialSet { slow: Vec<usize>, factor: f64 },
}

impl DelaySpec {
    pub fn model(&self, seed: u64) -> DelayModel {
        let kind = match self {
            DelaySpec::ShiftedExponential { shift, rate } => DelayKind::ShiftedExponential {
                shift: *shift,
                rate: *rate,
            },
            DelaySpec::FixedPermutation => DelayKind::FixedPermutation { order: Vec::new() },
            DelaySpec::AdversarialSet { slow, factor } => DelayKind::AdversarialSet {
                slow: slow.clone(),
                factor: *factor,
            },
        };
        DelayModel { kind, seed }
    }
}

impl Default for DelaySpec {
    fn default() -> Self {
        DelaySpec::ShiftedExponential {
            shift: 1.0,
            rate: 1.0,
        }
    }
}

/// Parses `name` or `name:key=value,...`, e.g.
/// `shifted-exponential:shift=2,rate=0.5` or `adversarial-set:slow=0-4,factor=inf`.
impl FromStr for DelaySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let mut kv = std::collections::BTreeMap::new();
        if let Some(args) = args {
            for pair in args.split(',') {
                let (k, v) = pair.split_once('=').ok_or_else(|| {
                    Error::Config(format!("bad delay-model argument '{pair}', expected key=value"))
                })?;
                kv.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let parse_f64 = |kv: &std::collections::BTreeMap<String, String>, key: &str, default: f64| {
            kv.get(key).map_or(Ok(default), |v| {
                if v == "inf" {
                    Ok(f64::INFINITY)
                } else {
                    v.parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad {key} '{v}': {e}")))
                }
            })
        };
        match name {
            "shifted-exponential" => Ok(DelaySpec::ShiftedExponential {
                shift: parse_f64(&kv, "shift", 1.0)?,
                rate: parse_f64(&kv, "rate", 1.0)?,
            }),
            "fixed-permutation" => Ok(DelaySpec::FixedPermutation),
            "adversarial-set" => {
                let slow = match kv.get("slow") {
                    None => Vec::new(),
                    Some(spec) => {
                        let mut out = Vec::new();
                        for part in spec.split(';') {
                            if let Some((lo, hi)) = part.split_once('-') {
                                let lo: usize = lo.parse().map_err(|e| {
                                    Error::Config(format!("bad slow range '{part}': {e}"))
                                })?;
                                let hi: usize = hi.parse().map_err(|e| {
                                    Error::Config(format!("bad slow range '{part}': {e}"))
                                })?;
                                out.extend(lo..=hi);
                            } else {
                                out.push(part.parse().map_err(|e| {
                                    Error::Config(format!("bad slow index '{part}': {e}"))
                                })?);
                            }
                        }
                        out
                    }
                };
                Ok(DelaySpec::AdversarialSet {
                    slow,
                    factor: parse_f64(&kv, "factor", f64::INFINITY)?,
                })
            }
            other => Err(Error::Config(format!(
                "unknown delay model '{other}' (expected shifted-exponential | fixed-permutation | adversarial-set)"
            ))),
        }
    }
}

/// One experiment: scheme parameters (explicit or accuracy-derived), matrix
/// source, delay model, trial count, output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub p: usize,
    pub m: usize,
    pub n: usize,
    pub bprime: Option<usize>,
    pub d: Option<usize>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub log_base: f64,
    /// `None` means exactly the recovery threshold.
    pub workers: Option<usize>,
    pub grid: GridKind,
    pub source: MatrixSource,
    /// Sweep mode: the `b'` values to scan.
    pub sweep_bprimes: Option<Vec<usize>>,
    pub delay: DelaySpec,
    pub trials: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: ReportFormat,
}

impl ExperimentConfig {
    /// A minimal valid configuration used as a base for tests and defaults.
    pub fn base(mode: Mode) -> Self {
        ExperimentConfig {
            mode,
            p: 2,
            m: 2,
            n: 2,
            bprime: Some(4),
            d: Some(3),
            epsilon: None,
            delta: None,
            log_base: 2.0,
            workers: None,
            grid: GridKind::RootsOfUnity,
            source: MatrixSource::RandomDense { r: 8, s: 8, t: 8 },
            sweep_bprimes: None,
            delay: DelaySpec::default(),
            trials: 1,
            seed: 0,
            out: None,
            format: ReportFormat::Json,
        }
    }

    /// Resolves the scheme parameters; the bool reports whether `(b', d)`
    /// were derived from `(epsilon, delta)`. The worked-example mode carries
    /// its own fixed parameters.
    pub fn resolve_params(&self) -> Result<(SchemeParams, bool)> {
        if self.mode == Mode::ExampleGolden {
            let params = crate::golden::golden_params(self.workers.unwrap_or(80))?;
            return Ok((params, false));
        }
        let workers = self.workers.unwrap_or(0);
        match (self.bprime, self.d) {
            (Some(bprime), Some(d)) => {
                let mut params = SchemeParams::new(self.p, self.m, self.n, bprime, d, workers)?;
                params.epsilon = self.epsilon;
                params.delta = self.delta;
                params.log_base = self.log_base;
                Ok((params, false))
            }
            (None, None) => {
                let (epsilon, delta) = match (self.epsilon, self.delta) {
                    (Some(e), Some(dl)) => (e, dl),
                    _ => {
                        return Err(Error::Config(
                            "need either both --bprime and --d or both --epsilon and --delta"
                                .into(),
                        ))
                    }
                };
                let params = SchemeParams::from_accuracy(
                    self.p,
                    self.m,
                    self.n,
                    epsilon,
                    delta,
                    self.log_base,
                    workers,
                )?;
                Ok((params, true))
            }
            (Some(bprime), None) => {
                // mixed form: explicit width, derived count
                let d = self
                    .delta
                    .map(|dl| derive_sketch_dims(1.0, dl, self.log_base).map(|(_, d)| d))
                    .transpose()?
                    .ok_or_else(|| Error::Config("--bprime given but neither --d nor --delta".into()))?;
                let mut params = SchemeParams::new(self.p, self.m, self.n, bprime, d, workers)?;
                params.epsilon = self.epsilon;
                params.delta = self.delta;
                params.log_base = self.log_base;
                Ok((params, true))
            }
            (None, Some(d)) => {
                let bprime = self
                    .epsilon
                    .map(|e| derive_sketch_dims(e, 0.5, self.log_base).map(|(b, _)| b))
                    .transpose()?
                    .ok_or_else(|| Error::Config("--d given but neither --bprime nor --epsilon".into()))?;
                let mut params = SchemeParams::new(self.p, self.m, self.n, bprime, d, workers)?;
                params.epsilon = self.epsilon;
                params.delta = self.delta;
                params.log_base = self.log_base;
                Ok((params, true))
            }
        }
    }

    /// Checks everything that can fail before any computation starts.
    pub fn validate(&self) -> Result<SchemeParams> {
        if self.trials == 0 {
            return Err(Error::Config("need at least one trial".into()));
        }
        let (params, _) = self.resolve_params()?;
        if self.mode == Mode::ExampleGolden {
            return Ok(params); // fixed instance, dims checked by the runner
        }
        let (r, s, t) = match &self.source {
            MatrixSource::RandomDense { r, s, t } => (*r, *s, *t),
            MatrixSource::RandomBlockSparse { r, s, t, k } => {
                if self.mode != Mode::SparseExact {
                    return Err(Error::Config(
                        "--block-sparse only applies to mode sparse-exact".into(),
                    ));
                }
                if *k == 0 || *k > params.m * params.n {
                    return Err(Error::Config(format!(
                        "block sparsity k={k} outside [1, {}]",
                        params.m * params.n
                    )));
                }
                (*r, *s, *t)
            }
            MatrixSource::Files { .. } => return Ok(params), // dims checked after load
        };
        if r == 0 || s == 0 || t == 0 {
            return Err(Error::Config("matrix dimensions must be positive".into()));
        }
        check_divisibility(r, s, t, &params)?;
        if self.mode == Mode::Sweep && self.sweep_bprimes.as_ref().is_none_or(Vec::is_empty) {
            return Err(Error::Config("sweep mode needs a nonempty b' list".into()));
        }
        Ok(params)
    }
}

/// The divisibility preconditions of the encoder, checked up front.
pub fn check_divisibility(r: usize, s: usize, t: usize, params: &SchemeParams) -> Result<()> {
    if !r.is_multiple_of(params.m) {
        return Err(Error::Partition(format!(
            "rows(A) = {r} not divisible by m = {}",
            params.m
        )));
    }
    if !s.is_multiple_of(params.p) {
        return Err(Error::Partition(format!(
            "cols(A) = rows(B) = {s} not divisible by p = {}",
            params.p
        )));
    }
    if !t.is_multiple_of(params.n) {
        return Err(Error::Partition(format!(
            "cols(B) = {t} not divisible by n = {}",
            params.n
        )));
    }
    Ok(())
}

/// Root seed resolution: explicit flag, else `CODEDSKETCH_SEED`, else 0.
pub fn resolve_seed(explicit: Option<u64>) -> Result<u64> {
    if let Some(s) = explicit {
        return Ok(s);
    }
    match std::env::var("CODEDSKETCH_SEED") {
        Ok(v) => v
            .parse::<u64>()
            .map_err(|e| Error::Config(format!("CODEDSKETCH_SEED='{v}' is not a u64: {e}"))),
        Err(_) => Ok(0),
    }
}
