//! Executes one experiment configuration and assembles the report.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::block::partition;
use crate::config::{check_divisibility, ExperimentConfig, GridKind, MatrixSource, Mode};
use crate::engine::{
    decode, encode, median_recover, sketch_threshold_bound, threshold_exact, SchemeParams,
    SketchFamily, WorkerResult,
};
use crate::error::{Error, Result};
use crate::golden;
use crate::hashing::derive_seeds;
use crate::matio;
use crate::poly::EvaluationGrid;
use crate::report::{
    Aggregate, Assertion, Report, RunMeta, Thresholds, TrialRow, UnbiasednessStats,
    SCHEMA_VERSION,
};
use crate::sim::{run_round, sweep, SweepPoint};

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Builds `A`, `B` so that `C = A*B` has exactly `k` nonzero blocks in its
/// `m x n` partition: every chosen block-row gets a private coded channel
/// (a block-column of `A` / block-row of `B`), so no cross terms appear.
/// Needs `k` placeable with at most `min(p, m)` distinct block-rows.
pub fn generate_block_sparse(
    r: usize,
    s: usize,
    t: usize,
    params: &SchemeParams,
    k: usize,
    seed: u64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (m, n, p) = (params.m, params.n, params.p);
    let rows_avail = p.min(m);
    if k > rows_avail * n {
        return Err(Error::Config(format!(
            "cannot place {k} nonzero blocks using at most min(p, m) = {rows_avail} block-rows \
             of {n} columns each"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows_used = rows_avail.min(k);
    // distinct block-rows, then spread the k positions over them round-robin
    let mut all_rows: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        let j = rng.random_range(0..=i);
        all_rows.swap(i, j);
    }
    let chosen_rows = &all_rows[..rows_used];
    let mut cols_per_row: Vec<Vec<usize>> = vec![Vec::new(); rows_used];
    for i in 0..k {
        cols_per_row[i % rows_used].push(0);
    }
    let (br, bs, bt) = (r / m, s / p, t / n);
    let mut a = Array2::<f64>::zeros((r, s));
    let mut b = Array2::<f64>::zeros((s, t));
    for (slot, &row) in chosen_rows.iter().enumerate() {
        // sample distinct columns for this row
        let want = cols_per_row[slot].len();
        let mut all_cols: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            all_cols.swap(i, j);
        }
        // channel = slot-th block-column of A / block-row of B
        for rr in 0..br {
            for cc in 0..bs {
                a[(row * br + rr, slot * bs + cc)] = rng.random_range(-1.0..1.0);
            }
        }
        for &col in &all_cols[..want] {
            for rr in 0..bs {
                for cc in 0..bt {
                    b[(slot * bs + rr, col * bt + cc)] = rng.random_range(-1.0..1.0);
                }
            }
        }
    }
    Ok((a, b))
}

fn load_matrices(
    config: &ExperimentConfig,
    params: &SchemeParams,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (a, b) = match &config.source {
        MatrixSource::RandomDense { r, s, t } => {
            let seeds = derive_seeds(config.seed ^ 0x6d61_7472, 2);
            (
                random_matrix(*r, *s, seeds[0]),
                random_matrix(*s, *t, seeds[1]),
            )
        }
        MatrixSource::RandomBlockSparse { r, s, t, k } => {
            generate_block_sparse(*r, *s, *t, params, *k, config.seed ^ 0x7370_6172)?
        }
        MatrixSource::Files { a, b } => (matio::read_auto(a)?, matio::read_auto(b)?),
    };
    if a.ncols() != b.nrows() {
        return Err(Error::Parameter(format!(
            "inner dimensions differ: A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    check_divisibility(a.nrows(), a.ncols(), b.ncols(), params)?;
    Ok((a, b))
}

fn make_grid(kind: GridKind, n: usize) -> Result<EvaluationGrid> {
    match kind {
        GridKind::RootsOfUnity => EvaluationGrid::roots_of_unity(n),
        GridKind::Chebyshev => EvaluationGrid::chebyshev(n),
    }
}

fn thresholds_for(config: &ExperimentConfig, params: &SchemeParams, derived: bool) -> Thresholds {
    let accuracy_bound = match (config.epsilon, config.delta) {
        (Some(e), Some(dl)) => sketch_threshold_bound(e, dl, params.p, params.log_base).ok(),
        _ => None,
    };
    let exact = threshold_exact(params.p, params.m, params.n);
    Thresholds {
        operational: params.threshold() as u64,
        exact_entangled: exact,
        accuracy_bound,
        accuracy_bound_min: accuracy_bound.map(|f| f.min(exact)),
        derived_bprime: derived.then_some(params.bprime),
        derived_d: derived.then_some(params.d),
    }
}

struct TrialAccumulator {
    sum: Array2<f64>,
    sum_sq: Array2<f64>,
    count: usize,
}

impl TrialAccumulator {
    fn new(shape: (usize, usize)) -> Self {
        TrialAccumulator {
            sum: Array2::zeros(shape),
            sum_sq: Array2::zeros(shape),
            count: 0,
        }
    }

    fn push(&mut self, c_tilde: &Array2<f64>) {
        self.sum += c_tilde;
        self.sum_sq += &c_tilde.mapv(|v| v * v);
        self.count += 1;
    }

    /// z-score statistics of the per-entry sample means against the exact
    /// values: `z = (mean - exact) / (sample std / sqrt(trials))`. Deviations
    /// at the decoder's numerical floor count as unbiased: there the spread
    /// is deterministic rounding, not sketch randomness, and the ratio is
    /// meaningless.
    fn unbiasedness(&self, exact: &Array2<f64>) -> Option<UnbiasednessStats> {
        if self.count < 2 {
            return None;
        }
        let scale = frobenius(exact).max(f64::MIN_POSITIVE);
        let floor = 1e-9 * scale;
        let t = self.count as f64;
        let mut within = 0usize;
        let mut max_z = 0.0f64;
        for ((s, s2), e) in self.sum.iter().zip(self.sum_sq.iter()).zip(exact.iter()) {
            let mean = s / t;
            let dev = (mean - e).abs();
            let var = (s2 / t - mean * mean).max(0.0) * t / (t - 1.0);
            let se = (var / t).sqrt();
            let z = if dev <= floor {
                0.0
            } else if se > 0.0 {
                dev / se
            } else {
                f64::MAX
            };
            if z <= 4.0 {
                within += 1;
            }
            max_z = max_z.max(z);
        }
        Some(UnbiasednessStats {
            entries_within_4se: within,
            entries: exact.len(),
            max_abs_z: max_z,
        })
    }
}

/// Runs the pipeline trials shared by the approx and sparse modes.
fn run_trials(
    config: &ExperimentConfig,
    params: &SchemeParams,
    a: &Array2<f64>,
    b: &Array2<f64>,
) -> Result<(Vec<TrialRow>, Aggregate, Option<UnbiasednessStats>)> {
    let c_exact = a.dot(b);
    let scale = frobenius(&c_exact).max(f64::MIN_POSITIVE);
    let grid = make_grid(config.grid, params.workers)?;
    let k = params.threshold();
    let family_seeds = derive_seeds(config.seed ^ 0x6661_6d73, config.trials);
    let delay_seeds = derive_seeds(config.seed ^ 0x6465_6c61, config.trials);

    let mut rows = Vec::with_capacity(config.trials);
    let mut acc = TrialAccumulator::new(c_exact.dim());
    let mut errs = Vec::new();
    let mut total_exceed = 0usize;
    let mut per_entry_exceed = Array2::<usize>::zeros(c_exact.dim());
    let mut succeeded = 0usize;
    let mut exact_recoveries = 0usize;
    let mut first_numerical_failure: Option<Error> = None;

    for trial in 0..config.trials {
        let family = SketchFamily::from_seed(
            family_seeds[trial],
            params.m,
            params.n,
            params.bprime,
            params.d,
        )?;
        let shares = encode(a, b, params, &family, &grid)?;
        let model = config.delay.model(delay_seeds[trial]);
        let outcome = run_round(&shares, &model, k)?;
        let decoded = decode(&outcome.delivered, params, &family);
        match decoded {
            Ok(sketches) => {
                let report = median_recover(&sketches, params)?;
                succeeded += 1;
                acc.push(&report.c_tilde);
                let mut worst = 0.0f64;
                let mut exceeded = 0usize;
                for ((got, want), pe) in report
                    .c_tilde
                    .iter()
                    .zip(c_exact.iter())
                    .zip(per_entry_exceed.iter_mut())
                {
                    let diff = (got - want).abs();
                    worst = worst.max(diff);
                    if let Some(eps) = config.epsilon {
                        if diff >= eps * scale {
                            exceeded += 1;
                            *pe += 1;
                        }
                    }
                }
                let max_rel_err = worst / scale;
                if max_rel_err <= 1e-9 {
                    exact_recoveries += 1;
                }
                total_exceed += exceeded;
                errs.push(max_rel_err);
                rows.push(TrialRow {
                    trial,
                    family_seed: family_seeds[trial],
                    decode_ok: true,
                    max_rel_err: Some(max_rel_err),
                    exceeded_entries: config.epsilon.map(|_| exceeded),
                    entries: c_exact.len(),
                    kth_delay: Some(outcome.wall_clock),
                    max_imag_residue: sketches.max_imag_residue,
                });
            }
            Err(e @ Error::NumericalFailure { .. }) => {
                let residue = match &e {
                    Error::NumericalFailure { residue, .. } => *residue,
                    _ => unreachable!(),
                };
                first_numerical_failure.get_or_insert(e);
                rows.push(TrialRow {
                    trial,
                    family_seed: family_seeds[trial],
                    decode_ok: false,
                    max_rel_err: None,
                    exceeded_entries: None,
                    entries: c_exact.len(),
                    kth_delay: Some(outcome.wall_clock),
                    max_imag_residue: residue,
                });
            }
            Err(e) => return Err(e),
        }
    }

    if succeeded == 0 {
        if let Some(e) = first_numerical_failure {
            // nothing decoded at all: surface the numerical failure verbatim
            return Err(e);
        }
    }
    errs.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let unbiasedness = acc.unbiasedness(&c_exact);
    let entries = c_exact.len();
    let aggregate = Aggregate {
        trials_succeeded: succeeded,
        exceedance_rate: config
            .epsilon
            .map(|_| total_exceed as f64 / (succeeded.max(1) * entries) as f64),
        max_entry_exceedance_rate: config.epsilon.map(|_| {
            per_entry_exceed
                .iter()
                .map(|&c| c as f64 / succeeded.max(1) as f64)
                .fold(0.0, f64::max)
        }),
        err_p50: (!errs.is_empty()).then(|| quantile(&errs, 0.5)),
        err_p90: (!errs.is_empty()).then(|| quantile(&errs, 0.9)),
        err_max: errs.last().copied(),
        unbiasedness: unbiasedness.clone(),
        exact_recovery_rate: Some(exact_recoveries as f64 / config.trials as f64),
    };
    Ok((rows, aggregate, unbiasedness))
}

fn approx_assertions(
    config: &ExperimentConfig,
    aggregate: &Aggregate,
    trials: usize,
) -> Vec<Assertion> {
    let mut out = Vec::new();
    out.push(Assertion {
        name: "all-trials-decoded".into(),
        passed: aggregate.trials_succeeded == trials,
        detail: format!("{} of {trials} trials decoded", aggregate.trials_succeeded),
    });
    if let (Some(delta), Some(rate)) = (config.delta, aggregate.max_entry_exceedance_rate) {
        let bound = delta + 0.05;
        out.push(Assertion {
            name: "per-entry-exceedance".into(),
            passed: rate <= bound,
            detail: format!("worst per-entry exceedance rate {rate:.4} vs bound {bound:.4}"),
        });
    }
    if trials >= 100 {
        if let Some(u) = &aggregate.unbiasedness {
            let frac = u.entries_within_4se as f64 / u.entries as f64;
            out.push(Assertion {
                name: "unbiasedness-4se".into(),
                passed: frac >= 0.99,
                detail: format!(
                    "{} of {} entries within 4 SE (max |z| = {:.2})",
                    u.entries_within_4se, u.entries, u.max_abs_z
                ),
            });
        }
    }
    out
}

type GoldenOutcome = (SchemeParams, Vec<TrialRow>, Option<Aggregate>, Vec<Assertion>);

fn run_golden(config: &ExperimentConfig) -> Result<GoldenOutcome> {
    let workers = config.workers.unwrap_or(80);
    let params = golden::golden_params(workers)?;
    let (a, b) = match &config.source {
        MatrixSource::Files { a, b } => (matio::read_auto(a)?, matio::read_auto(b)?),
        _ => {
            let seeds = derive_seeds(config.seed ^ 0x676f_6c64, 2);
            (random_matrix(8, 8, seeds[0]), random_matrix(8, 8, seeds[1]))
        }
    };
    check_divisibility(a.nrows(), a.ncols(), b.ncols(), &params)?;
    let family = golden::golden_family();
    let grid = make_grid(config.grid, workers)?;
    let shares = encode(&a, &b, &params, &family, &grid)?;
    let results: Vec<WorkerResult> = shares
        .iter()
        .map(crate::engine::worker_compute)
        .collect::<Result<_>>()?;

    // deliver a seeded random threshold-subset of the worker results
    let mut order: Vec<usize> = (0..workers).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7375_6273);
    for i in (1..workers).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let k = params.threshold();
    let delivered: Vec<WorkerResult> = order[..k].iter().map(|&j| results[j].clone()).collect();
    let sketches = decode(&delivered, &params, &family)?;

    // expected buckets straight from the exact product
    let c_exact = a.dot(&b);
    let scale = frobenius(&c_exact).max(f64::MIN_POSITIVE);
    let cb = partition(&c_exact, params.m, params.n)?;
    let mut worst = 0.0f64;
    for eta in 1..=params.d {
        for bucket in 0..params.sketch_len() {
            let mut want = Array2::<f64>::zeros(cb.block_shape());
            for i in 0..params.m {
                for j in 0..params.n {
                    if family.row_hash(eta - 1, i) + family.col_hash(eta - 1, j) == bucket {
                        let sign = family.row_sign(eta - 1, i) * family.col_sign(eta - 1, j);
                        want.scaled_add(sign, cb.block(i, j));
                    }
                }
            }
            for (g, w) in sketches.block(eta, bucket).iter().zip(want.iter()) {
                worst = worst.max((g - w).abs());
            }
        }
    }
    let rel = worst / scale;

    let report = median_recover(&sketches, &params)?;
    let err = report
        .c_tilde
        .iter()
        .zip(c_exact.iter())
        .map(|(g, w)| (g - w).abs())
        .fold(0.0, f64::max)
        / scale;

    let assertions = vec![
        Assertion {
            name: "threshold-is-75".into(),
            passed: k == golden::GOLDEN_THRESHOLD,
            detail: format!("threshold_cs = {k}"),
        },
        Assertion {
            name: "sketches-match-exact-combinations".into(),
            passed: rel <= 1e-8,
            detail: format!("worst sketch deviation {rel:.3e} (tolerance 1e-8, relative to |C|_F)"),
        },
    ];
    let trial = TrialRow {
        trial: 0,
        family_seed: 0,
        decode_ok: true,
        max_rel_err: Some(err),
        exceeded_entries: None,
        entries: c_exact.len(),
        kth_delay: None,
        max_imag_residue: sketches.max_imag_residue,
    };
    Ok((params, vec![trial], None, assertions))
}

/// Executes the configured mode and assembles the report. Assertions decide
/// `report.passed`; IO happens only through the returned value.
pub fn run(config: &ExperimentConfig) -> Result<Report> {
    let started = Instant::now();
    let params = config.validate()?;
    let (resolved, derived) = config.resolve_params()?;
    debug_assert_eq!(params, resolved);

    let (params, trials, sweep_rows, aggregate, assertions) = match config.mode {
        Mode::Approx => {
            let (a, b) = load_matrices(config, &params)?;
            let (rows, aggregate, _) = run_trials(config, &params, &a, &b)?;
            let assertions = approx_assertions(config, &aggregate, config.trials);
            (params, rows, None, Some(aggregate), assertions)
        }
        Mode::SparseExact => {
            if !matches!(config.source, MatrixSource::RandomBlockSparse { .. }) {
                return Err(Error::Config(
                    "sparse-exact mode needs a --block-sparse source".into(),
                ));
            }
            let (a, b) = load_matrices(config, &params)?;
            let (rows, aggregate, _) = run_trials(config, &params, &a, &b)?;
            let rate = aggregate.exact_recovery_rate.unwrap_or(0.0);
            let mut assertions = vec![Assertion {
                name: "exact-recovery-rate".into(),
                passed: rate >= 0.9,
                detail: format!("{rate:.3} of trials recovered exactly (>= 0.9 required)"),
            }];
            assertions.extend(approx_assertions(config, &aggregate, config.trials));
            (params, rows, None, Some(aggregate), assertions)
        }
        Mode::ExampleGolden => {
            let (params, rows, aggregate, assertions) = run_golden(config)?;
            (params, rows, None, aggregate, assertions)
        }
        Mode::Sweep => {
            let bprimes = config
                .sweep_bprimes
                .clone()
                .ok_or_else(|| Error::Config("sweep mode needs a b' list".into()))?;
            let dims = match &config.source {
                MatrixSource::RandomDense { r, s, t } => (*r, *s, *t),
                _ => {
                    return Err(Error::Config(
                        "sweep mode needs a random-dense matrix source".into(),
                    ))
                }
            };
            let points: Vec<SweepPoint> = bprimes
                .iter()
                .map(|&bp| {
                    let mut p = SchemeParams::new(
                        params.p,
                        params.m,
                        params.n,
                        bp,
                        params.d,
                        config.workers.unwrap_or(0),
                    )?;
                    p.epsilon = config.epsilon;
                    p.delta = config.delta;
                    p.log_base = config.log_base;
                    Ok(SweepPoint {
                        params: p,
                        dims,
                    })
                })
                .collect::<Result<_>>()?;
            let model = config.delay.model(config.seed ^ 0x7377_6565);
            let rows = sweep(&points, &model, config.trials, config.seed)?;
            let assertions = vec![Assertion {
                name: "all-configs-decode".into(),
                passed: rows.iter().all(|r| r.success_rate == 1.0),
                detail: format!(
                    "success rates: {:?}",
                    rows.iter().map(|r| r.success_rate).collect::<Vec<_>>()
                ),
            }];
            (params, Vec::new(), Some(rows), None, assertions)
        }
    };

    let passed = assertions.iter().all(|a| a.passed);
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        mode: config.mode,
        config: config.clone(),
        params: params.clone(),
        thresholds: thresholds_for(config, &params, derived),
        trials,
        sweep: sweep_rows,
        aggregate,
        assertions,
        passed,
        run_meta: RunMeta {
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            elapsed_seconds: started.elapsed().as_secs_f64(),
        },
    })
}
