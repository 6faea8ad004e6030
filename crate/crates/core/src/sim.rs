//! Deterministic master-worker round simulation.
//!
//! Delays are simulated scalars, never wall-clock measurements, so every
//! outcome replays bit-for-bit from its seed. A round computes all surviving
//! workers' products, sorts them by (delay, index) and delivers the fastest
//! `K`; the `K`-th delay is the round's wall-clock proxy.

use serde::{Deserialize, Serialize};

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::engine::{
    decode, encode, median_recover, threshold_cs, EncodedShare, SchemeParams, SketchFamily,
    WorkerResult,
};
use crate::error::{Error, Result};
use crate::poly::EvaluationGrid;

/// How per-worker completion delays are produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DelayKind {
    /// `shift + Exp(rate)`: the conventional straggler model.
    ShiftedExponential { shift: f64, rate: f64 },
    /// Worker `i` finishes at time `order[i] + 1`; an empty order means the
    /// identity (worker `i` finishes `i`-th).
    FixedPermutation { order: Vec<usize> },
    /// The listed workers run `factor` times slower than everyone else; an
    /// infinite factor drops them entirely.
    AdversarialSet { slow: Vec<usize>, factor: f64 },
}

/// A delay model plus the seed that makes it reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub kind: DelayKind,
    pub seed: u64,
}

impl DelayModel {
    pub fn shifted_exponential(shift: f64, rate: f64, seed: u64) -> Self {
        DelayModel {
            kind: DelayKind::ShiftedExponential { shift, rate },
            seed,
        }
    }

    pub fn identity_permutation() -> Self {
        DelayModel {
            kind: DelayKind::FixedPermutation { order: Vec::new() },
            seed: 0,
        }
    }

    pub fn adversarial(slow: Vec<usize>, factor: f64, seed: u64) -> Self {
        DelayModel {
            kind: DelayKind::AdversarialSet { slow, factor },
            seed,
        }
    }

    /// Per-worker delays; `None` marks a dropped worker. Deterministic given
    /// the model seed, and always strictly positive.
    pub fn sample(&self, n: usize) -> Result<Vec<Option<f64>>> {
        match &self.kind {
            DelayKind::ShiftedExponential { shift, rate } => {
                if shift.is_nan() || *shift < 0.0 || rate.is_nan() || *rate <= 0.0 {
                    return Err(Error::Parameter(format!(
                        "shifted-exponential needs shift >= 0 and rate > 0, got ({shift}, {rate})"
                    )));
                }
                let exp = Exp::new(*rate)
                    .map_err(|e| Error::Parameter(format!("bad exponential rate: {e}")))?;
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                Ok((0..n)
                    .map(|_| Some(shift + exp.sample(&mut rng) + f64::MIN_POSITIVE))
                    .collect())
            }
            DelayKind::FixedPermutation { order } => {
                if order.is_empty() {
                    return Ok((0..n).map(|i| Some((i + 1) as f64)).collect());
                }
                if order.len() != n {
                    return Err(Error::Parameter(format!(
                        "permutation has {} entries for {n} workers",
                        order.len()
                    )));
                }
                let mut seen = vec![false; n];
                for &o in order {
                    if o >= n || seen[o] {
                        return Err(Error::Parameter("order is not a permutation".into()));
                    }
                    seen[o] = true;
                }
                Ok(order.iter().map(|&o| Some((o + 1) as f64)).collect())
            }
            DelayKind::AdversarialSet { slow, factor } => {
                if factor.is_nan() || *factor < 1.0 {
                    return Err(Error::Parameter(format!(
                        "slow factor must be >= 1 (use infinity to drop), got {factor}"
                    )));
                }
                if let Some(&w) = slow.iter().find(|&&w| w >= n) {
                    return Err(Error::Parameter(format!(
                        "slow worker index {w} outside [0, {n})"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                Ok((0..n)
                    .map(|i| {
                        let base = 1.0 + rng.random_range(0.0..0.1);
                        if slow.contains(&i) {
                            if factor.is_finite() {
                                Some(base * factor)
                            } else {
                                None
                            }
                        } else {
                            Some(base)
                        }
                    })
                    .collect())
            }
        }
    }
}

/// What one simulated round produced.
#[derive(Clone, Debug)]
pub struct SimulationOutcome {
    /// The `K` fastest surviving results, sorted by (delay, worker index);
    /// `completion_time` carries the sampled delay.
    pub delivered: Vec<WorkerResult>,
    /// Delay of the `K`-th (slowest delivered) worker.
    pub wall_clock: f64,
    /// Workers that never answered.
    pub dropped: Vec<usize>,
}

/// Runs one round: every surviving worker computes its product, and the `k`
/// fastest results are delivered in arrival order.
pub fn run_round(shares: &[EncodedShare], model: &DelayModel, k: usize) -> Result<SimulationOutcome> {
    let n = shares.len();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!(
            "cannot deliver {k} of {n} workers"
        )));
    }
    let delays = model.sample(n)?;
    let dropped: Vec<usize> = delays
        .iter()
        .enumerate()
        .filter_map(|(i, d)| d.is_none().then_some(i))
        .collect();
    let available = n - dropped.len();
    if k > available {
        return Err(Error::Starvation {
            requested: k,
            available,
        });
    }
    let mut survivors: Vec<(f64, usize)> = delays
        .iter()
        .enumerate()
        .filter_map(|(i, d)| d.map(|t| (t, i)))
        .collect();
    survivors.sort_by(|a, b| a.partial_cmp(b).expect("delays are never NaN"));
    let delivered: Vec<WorkerResult> = survivors[..k]
        .iter()
        .map(|&(t, i)| {
            let mut r = crate::engine::worker_compute(&shares[i])?;
            r.completion_time = t;
            Ok(r)
        })
        .collect::<Result<_>>()?;
    let wall_clock = delivered.last().expect("k >= 1").completion_time;
    Ok(SimulationOutcome {
        delivered,
        wall_clock,
        dropped,
    })
}

/// One configuration of a parameter sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub params: SchemeParams,
    /// Matrix dimensions `(r, s, t)`: `A` is `r x s`, `B` is `s x t`.
    pub dims: (usize, usize, usize),
}

/// Aggregates of one sweep configuration over its trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: usize,
    pub m: usize,
    pub n: usize,
    pub bprime: usize,
    pub d: usize,
    pub workers: usize,
    pub threshold: usize,
    pub trials: usize,
    pub success_rate: f64,
    /// Quantiles of `max_ij |C~ - C| / |C|_F` over successful trials;
    /// absent when every trial failed.
    pub err_p50: Option<f64>,
    pub err_p90: Option<f64>,
    pub err_max: Option<f64>,
    /// Median over trials of the K-th order statistic of the delays.
    pub kth_delay_p50: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// Runs `trials` end-to-end rounds per configuration and aggregates success
/// rate, error quantiles against the exact product, and the K-th delay.
/// Fully reproducible from `root_seed`.
pub fn sweep(
    points: &[SweepPoint],
    model: &DelayModel,
    trials: usize,
    root_seed: u64,
) -> Result<Vec<SweepRow>> {
    if points.is_empty() {
        return Err(Error::Parameter("sweep needs at least one configuration".into()));
    }
    if trials == 0 {
        return Err(Error::Parameter("sweep needs at least one trial".into()));
    }
    let mut rows = Vec::with_capacity(points.len());
    for (ci, point) in points.iter().enumerate() {
        let params = &point.params;
        params.validate()?;
        let (r, s, t) = point.dims;
        let k = params.threshold();
        let mut errs = Vec::with_capacity(trials);
        let mut delays = Vec::with_capacity(trials);
        let mut successes = 0usize;
        for trial in 0..trials {
            let tseed = root_seed
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add((ci * 1_000_003 + trial) as u64);
            let a = random_matrix(r, s, tseed ^ 0xa5a5);
            let b = random_matrix(s, t, tseed ^ 0x5a5a);
            let family =
                SketchFamily::from_seed(tseed, params.m, params.n, params.bprime, params.d)?;
            let grid = EvaluationGrid::roots_of_unity(params.workers)?;
            let shares = encode(&a, &b, params, &family, &grid)?;
            let model_t = DelayModel {
                kind: model.kind.clone(),
                seed: model.seed.wrapping_add(tseed),
            };
            let outcome = run_round(&shares, &model_t, k)?;
            delays.push(outcome.wall_clock);
            match decode(&outcome.delivered, params, &family)
                .and_then(|sk| median_recover(&sk, params))
            {
                Ok(report) => {
                    successes += 1;
                    let c_exact = a.dot(&b);
                    let scale = c_exact.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let worst = report
                        .c_tilde
                        .iter()
                        .zip(c_exact.iter())
                        .map(|(got, want)| (got - want).abs())
                        .fold(0.0, f64::max);
                    errs.push(worst / scale.max(f64::MIN_POSITIVE));
                }
                Err(Error::NumericalFailure { .. }) | Err(Error::InsufficientSamples { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        errs.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
        delays.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
        rows.push(SweepRow {
            p: params.p,
            m: params.m,
            n: params.n,
            bprime: params.bprime,
            d: params.d,
            workers: params.workers,
            threshold: threshold_cs(params.p, params.bprime, params.d),
            trials,
            success_rate: successes as f64 / trials as f64,
            err_p50: (!errs.is_empty()).then(|| quantile(&errs, 0.5)),
            err_p90: (!errs.is_empty()).then(|| quantile(&errs, 0.9)),
            err_max: errs.last().copied(),
            kth_delay_p50: quantile(&delays, 0.5),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_shares() -> (Vec<EncodedShare>, SchemeParams, SketchFamily) {
        // threshold_cs(1, 2, 2) = 9 of 12 workers
        let params = SchemeParams::new(1, 2, 2, 2, 2, 12).unwrap();
        let a = random_matrix(4, 4, 1);
        let b = random_matrix(4, 4, 2);
        let family = SketchFamily::from_seed(3, 2, 2, 2, 2).unwrap();
        let grid = EvaluationGrid::roots_of_unity(12).unwrap();
        let shares = encode(&a, &b, &params, &family, &grid).unwrap();
        (shares, params, family)
    }

    #[test]
    fn identity_permutation_delivers_prefix() {
        let (shares, params, _) = small_shares();
        let k = params.threshold();
        let outcome = run_round(&shares, &DelayModel::identity_permutation(), k).unwrap();
        let workers: Vec<usize> = outcome.delivered.iter().map(|r| r.worker).collect();
        assert_eq!(workers, (0..k).collect::<Vec<_>>());
        assert_eq!(outcome.wall_clock, k as f64);
        assert!(outcome.dropped.is_empty());
    }

    #[test]
    fn adversarial_drop_forces_the_survivors() {
        let (shares, params, _) = small_shares();
        let n = shares.len();
        let k = params.threshold(); // 9 of 12: drop exactly 3
        let slow: Vec<usize> = vec![1, 5, 7];
        let model = DelayModel::adversarial(slow.clone(), f64::INFINITY, 4);
        let outcome = run_round(&shares, &model, k).unwrap();
        assert_eq!(outcome.dropped, slow);
        let mut workers: Vec<usize> = outcome.delivered.iter().map(|r| r.worker).collect();
        workers.sort_unstable();
        let expect: Vec<usize> = (0..n).filter(|w| !slow.contains(w)).collect();
        assert_eq!(workers, expect);
    }

    #[test]
    fn starvation_names_the_shortfall() {
        let (shares, params, _) = small_shares();
        let model = DelayModel::adversarial(vec![0, 1, 2, 3], f64::INFINITY, 5);
        match run_round(&shares, &model, params.threshold()) {
            Err(Error::Starvation {
                requested,
                available,
            }) => {
                assert_eq!(requested, 9);
                assert_eq!(available, 8);
            }
            other => panic!("expected starvation, got {other:?}"),
        }
    }

    #[test]
    fn delivered_results_equal_direct_computation() {
        let (shares, params, _) = small_shares();
        let model = DelayModel::shifted_exponential(1.0, 1.0, 42);
        let outcome = run_round(&shares, &model, params.threshold()).unwrap();
        for r in &outcome.delivered {
            let direct = crate::engine::worker_compute(&shares[r.worker]).unwrap();
            assert_eq!(r.block, direct.block);
            assert!(r.completion_time > 1.0);
        }
    }

    #[test]
    fn replay_determinism() {
        let (shares, params, _) = small_shares();
        let model = DelayModel::shifted_exponential(1.0, 1.0, 7);
        let o1 = run_round(&shares, &model, params.threshold()).unwrap();
        let o2 = run_round(&shares, &model, params.threshold()).unwrap();
        let w1: Vec<usize> = o1.delivered.iter().map(|r| r.worker).collect();
        let w2: Vec<usize> = o2.delivered.iter().map(|r| r.worker).collect();
        assert_eq!(w1, w2);
        assert_eq!(o1.wall_clock, o2.wall_clock);
    }

    #[test]
    fn decode_depends_only_on_the_subset() {
        let (shares, params, family) = small_shares();
        let model = DelayModel::shifted_exponential(1.0, 1.0, 11);
        let outcome = run_round(&shares, &model, params.threshold()).unwrap();
        let report1 = median_recover(
            &decode(&outcome.delivered, &params, &family).unwrap(),
            &params,
        )
        .unwrap();
        let mut reversed = outcome.delivered.clone();
        reversed.reverse();
        let report2 =
            median_recover(&decode(&reversed, &params, &family).unwrap(), &params).unwrap();
        assert_eq!(report1.c_tilde, report2.c_tilde); // bitwise
    }

    #[test]
    fn sweep_produces_one_row_per_config() {
        let params = SchemeParams::new(1, 2, 2, 2, 2, 12).unwrap();
        let points = vec![SweepPoint {
            params,
            dims: (4, 4, 4),
        }];
        let model = DelayModel::shifted_exponential(1.0, 1.0, 0);
        let rows = sweep(&points, &model, 3, 99).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].trials, 3);
        assert_eq!(rows[0].success_rate, 1.0);
        // b'=2 over four block positions is a coarse sketch: the error is
        // approximation error, bounded but far from zero
        let err_max = rows[0].err_max.unwrap();
        assert!(err_max.is_finite() && err_max < 10.0);
        // reproducible
        let rows2 = sweep(&points, &model, 3, 99).unwrap();
        assert_eq!(rows[0].err_max, rows2[0].err_max);
        assert_eq!(rows[0].kth_delay_p50, rows2[0].kth_delay_p50);
    }
}
