//! The end-to-end scheme: encoding, worker computation, decoding and
//! signed-median recovery, plus recovery-threshold arithmetic.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::block::partition;
use crate::codec::{lagrange_combine, layer_entangled, sketch_cols, sketch_rows, CombinedPoly};
use crate::error::{Error, Result};
use crate::hashing::{derive_seeds, HashFn, SignFn};
use crate::poly::{interpolate, interpolate_unit_subgrid, root_of_unity, EvaluationGrid};
use crate::sketch::median;
use crate::C64;

/// Ceiling that forgives the last few ulps of floating noise, so formula
/// values like `3/0.1^2 = 300` come out as the intended integer.
fn ceil_tolerant(x: f64) -> u64 {
    (x - 1e-9).ceil().max(1.0) as u64
}

/// `ceil(3 / epsilon^2)` and `ceil(log_base(1/delta))`: the sketch width and
/// count that Theorem-style accuracy targets ask for.
pub fn derive_sketch_dims(epsilon: f64, delta: f64, log_base: f64) -> Result<(usize, usize)> {
    if epsilon.is_nan() || epsilon <= 0.0 || delta.is_nan() || delta <= 0.0 || delta >= 1.0 {
        return Err(Error::Parameter(format!(
            "need epsilon > 0 and 0 < delta < 1, got epsilon={epsilon}, delta={delta}"
        )));
    }
    if log_base.is_nan() || log_base <= 1.0 {
        return Err(Error::Parameter(format!(
            "log base must exceed 1, got {log_base}"
        )));
    }
    let bprime = ceil_tolerant(3.0 / (epsilon * epsilon));
    let d = ceil_tolerant((1.0 / delta).ln() / log_base.ln());
    Ok((bprime as usize, d as usize))
}

/// Operational recovery threshold: the number of evaluations needed to
/// interpolate the degree-`(2pb'-1)(2d-1) - 1` product polynomial.
pub fn threshold_cs(p: usize, bprime: usize, d: usize) -> usize {
    (2 * p * bprime - 1) * (2 * d - 1)
}

/// Recovery threshold of the exact entangled polynomial code, for reporting:
/// `pmn + p - 1`.
pub fn threshold_exact(p: usize, m: usize, n: usize) -> u64 {
    p as u64 * m as u64 * n as u64 + p as u64 - 1
}

/// The printed bound `(2p*ceil(3/eps^2) - 1)(2*ceil(log 1/delta) - 1) - 1`.
/// It sits one below the operational interpolation count [`threshold_cs`];
/// reports carry both and decoding never attempts the smaller number.
pub fn sketch_threshold_bound(epsilon: f64, delta: f64, p: usize, log_base: f64) -> Result<u64> {
    let (bprime, d) = derive_sketch_dims(epsilon, delta, log_base)?;
    Ok((2 * p as u64 * bprime as u64 - 1) * (2 * d as u64 - 1) - 1)
}

/// Minimum of the printed first term and the exact-code threshold.
pub fn recovery_threshold_bound(
    epsilon: f64,
    delta: f64,
    p: usize,
    m: usize,
    n: usize,
    log_base: f64,
) -> Result<u64> {
    Ok(sketch_threshold_bound(epsilon, delta, p, log_base)?.min(threshold_exact(p, m, n)))
}

/// All scheme integers plus the accuracy targets they may be derived from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    /// Block-columns of `A` / block-rows of `B` (the coded inner dimension).
    pub p: usize,
    /// Block-rows of `A`.
    pub m: usize,
    /// Block-columns of `B`.
    pub n: usize,
    /// Count-sketch width.
    pub bprime: usize,
    /// Number of independent sketches.
    pub d: usize,
    /// Total workers `N`.
    pub workers: usize,
    /// Accuracy targets when the configuration was derived from them.
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    /// Base of the `log(1/delta)` ceiling; 2 unless configured otherwise.
    pub log_base: f64,
}

impl SchemeParams {
    /// Explicit sketch dimensions; `workers = 0` means "exactly the threshold".
    pub fn new(p: usize, m: usize, n: usize, bprime: usize, d: usize, workers: usize) -> Result<Self> {
        let workers = if workers == 0 {
            threshold_cs(p.max(1), bprime.max(1), d.max(1))
        } else {
            workers
        };
        let params = SchemeParams {
            p,
            m,
            n,
            bprime,
            d,
            workers,
            epsilon: None,
            delta: None,
            log_base: 2.0,
        };
        params.validate()?;
        Ok(params)
    }

    /// Derives `(b', d)` from accuracy targets.
    pub fn from_accuracy(
        p: usize,
        m: usize,
        n: usize,
        epsilon: f64,
        delta: f64,
        log_base: f64,
        workers: usize,
    ) -> Result<Self> {
        let (bprime, d) = derive_sketch_dims(epsilon, delta, log_base)?;
        let workers = if workers == 0 {
            threshold_cs(p.max(1), bprime, d)
        } else {
            workers
        };
        let params = SchemeParams {
            p,
            m,
            n,
            bprime,
            d,
            workers,
            epsilon: Some(epsilon),
            delta: Some(delta),
            log_base,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.m == 0 || self.n == 0 || self.bprime == 0 || self.d == 0 {
            return Err(Error::Parameter(
                "p, m, n, b' and d must all be at least 1".into(),
            ));
        }
        if self.log_base.is_nan() || self.log_base <= 1.0 {
            return Err(Error::Parameter("log base must exceed 1".into()));
        }
        let need = self.threshold();
        if self.workers < need {
            return Err(Error::Config(format!(
                "{} workers cannot reach the recovery threshold {need}",
                self.workers
            )));
        }
        Ok(())
    }

    /// Operational recovery threshold for this configuration.
    pub fn threshold(&self) -> usize {
        threshold_cs(self.p, self.bprime, self.d)
    }

    /// Sketch length of the output count-sketches: `b = 2b' - 1`.
    pub fn sketch_len(&self) -> usize {
        2 * self.bprime - 1
    }
}

/// The `4d` hash/sign functions of one scheme instance: `d` pairs for the
/// block-rows of `A` and `d` pairs for the block-columns of `B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchFamily {
    row_hashes: Vec<HashFn>,
    row_signs: Vec<SignFn>,
    col_hashes: Vec<HashFn>,
    col_signs: Vec<SignFn>,
    master_seed: Option<u64>,
}

impl SketchFamily {
    /// Derives all `4d` functions from one master seed, in a fixed order
    /// (row hashes, row signs, column hashes, column signs).
    pub fn from_seed(seed: u64, m: usize, n: usize, bprime: usize, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Parameter("need d >= 1 sketches".into()));
        }
        let seeds = derive_seeds(seed, 4 * d);
        let row_hashes: Vec<HashFn> = seeds[..d]
            .iter()
            .map(|&s| HashFn::from_seed(s, m, bprime))
            .collect::<Result<_>>()?;
        let row_signs: Vec<SignFn> = seeds[d..2 * d]
            .iter()
            .map(|&s| SignFn::from_seed(s, m))
            .collect::<Result<_>>()?;
        let col_hashes: Vec<HashFn> = seeds[2 * d..3 * d]
            .iter()
            .map(|&s| HashFn::from_seed(s, n, bprime))
            .collect::<Result<_>>()?;
        let col_signs: Vec<SignFn> = seeds[3 * d..4 * d]
            .iter()
            .map(|&s| SignFn::from_seed(s, n))
            .collect::<Result<_>>()?;
        Ok(SketchFamily {
            row_hashes,
            row_signs,
            col_hashes,
            col_signs,
            master_seed: Some(seed),
        })
    }

    /// Builds a family from explicit tables (used for the worked-example
    /// fixture). `row[l] = (hash values, signs)` over the `m` block-rows.
    pub fn from_tables(
        row: &[(Vec<u32>, Vec<i8>)],
        col: &[(Vec<u32>, Vec<i8>)],
        bprime: usize,
    ) -> Result<Self> {
        if row.is_empty() || row.len() != col.len() {
            return Err(Error::Parameter(
                "need equally many row and column hash/sign tables".into(),
            ));
        }
        let mut row_hashes = Vec::new();
        let mut row_signs = Vec::new();
        for (h, sg) in row {
            row_hashes.push(HashFn::from_table(h.clone(), bprime)?);
            row_signs.push(SignFn::from_table(sg)?);
        }
        let mut col_hashes = Vec::new();
        let mut col_signs = Vec::new();
        for (h, sg) in col {
            col_hashes.push(HashFn::from_table(h.clone(), bprime)?);
            col_signs.push(SignFn::from_table(sg)?);
        }
        Ok(SketchFamily {
            row_hashes,
            row_signs,
            col_hashes,
            col_signs,
            master_seed: None,
        })
    }

    pub fn d(&self) -> usize {
        self.row_hashes.len()
    }

    pub fn bprime(&self) -> usize {
        self.row_hashes[0].range()
    }

    /// Block-row domain `m`.
    pub fn row_domain(&self) -> usize {
        self.row_hashes[0].domain()
    }

    /// Block-column domain `n`.
    pub fn col_domain(&self) -> usize {
        self.col_hashes[0].domain()
    }

    pub fn master_seed(&self) -> Option<u64> {
        self.master_seed
    }

    pub fn row_hash(&self, l: usize, i: usize) -> usize {
        self.row_hashes[l].eval(i)
    }

    pub fn row_sign(&self, l: usize, i: usize) -> f64 {
        self.row_signs[l].eval(i)
    }

    pub fn col_hash(&self, l: usize, j: usize) -> usize {
        self.col_hashes[l].eval(j)
    }

    pub fn col_sign(&self, l: usize, j: usize) -> f64 {
        self.col_signs[l].eval(j)
    }

    pub fn row_hashes(&self) -> &[HashFn] {
        &self.row_hashes
    }

    pub fn row_signs(&self) -> &[SignFn] {
        &self.row_signs
    }

    pub fn col_hashes(&self) -> &[HashFn] {
        &self.col_hashes
    }

    pub fn col_signs(&self) -> &[SignFn] {
        &self.col_signs
    }

    fn check_against(&self, params: &SchemeParams) -> Result<()> {
        if self.d() != params.d
            || self.bprime() != params.bprime
            || self.row_domain() != params.m
            || self.col_domain() != params.n
        {
            return Err(Error::Parameter(format!(
                "sketch family (m={}, n={}, b'={}, d={}) does not match params (m={}, n={}, b'={}, d={})",
                self.row_domain(),
                self.col_domain(),
                self.bprime(),
                self.d(),
                params.m,
                params.n,
                params.bprime,
                params.d
            )));
        }
        Ok(())
    }
}

/// What one worker receives: its point and the two collapsed blocks.
#[derive(Clone, Debug)]
pub struct EncodedShare {
    pub worker: usize,
    pub theta: C64,
    /// `F(theta)`, shape `(r/m, s/p)`.
    pub f_share: Array2<C64>,
    /// `G(theta)`, shape `(s/p, t/n)`.
    pub g_share: Array2<C64>,
}

/// What one worker sends back: the product of its two blocks.
#[derive(Clone, Debug)]
pub struct WorkerResult {
    pub worker: usize,
    pub theta: C64,
    /// `P(theta) = F(theta) * G(theta)`, shape `(r/m, t/n)`.
    pub block: Array2<C64>,
    /// Simulated completion time; 0 outside a simulation.
    pub completion_time: f64,
}

/// The two combined polynomials the master evaluates per worker.
pub struct MasterCode {
    pub f: CombinedPoly,
    pub g: CombinedPoly,
}

/// Runs coding steps 1-2-3 symbolically (entangled layer, sketches, Lagrange
/// combine), without fixing evaluation points yet.
pub fn build_master_code(
    a: &Array2<f64>,
    b: &Array2<f64>,
    params: &SchemeParams,
    family: &SketchFamily,
) -> Result<MasterCode> {
    family.check_against(params)?;
    if a.ncols() != b.nrows() {
        return Err(Error::Parameter(format!(
            "inner dimensions differ: A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let a_blocks = partition(a, params.m, params.p)?;
    let b_blocks = partition(b, params.p, params.n)?;
    let (a_hat, b_hat) = layer_entangled(&a_blocks, &b_blocks)?;
    let f_sketches = sketch_rows(&a_hat, &family.row_hashes, &family.row_signs)?;
    let g_sketches = sketch_cols(&b_hat, &family.col_hashes, &family.col_signs)?;
    Ok(MasterCode {
        f: lagrange_combine(f_sketches)?,
        g: lagrange_combine(g_sketches)?,
    })
}

/// Encodes `A` and `B` into one share per worker: share `j` carries
/// `(F(theta_j), G(theta_j))`.
pub fn encode(
    a: &Array2<f64>,
    b: &Array2<f64>,
    params: &SchemeParams,
    family: &SketchFamily,
    grid: &EvaluationGrid,
) -> Result<Vec<EncodedShare>> {
    params.validate()?;
    if grid.len() != params.workers {
        return Err(Error::Config(format!(
            "grid has {} points but params expect {} workers",
            grid.len(),
            params.workers
        )));
    }
    let code = build_master_code(a, b, params, family)?;
    (0..params.workers)
        .map(|j| {
            let theta = grid.point(j);
            Ok(EncodedShare {
                worker: j,
                theta,
                f_share: code.f.substitute_and_eval(theta, params.p, params.bprime)?,
                g_share: code.g.substitute_and_eval(theta, params.p, params.bprime)?,
            })
        })
        .collect()
}

/// Step 4: the worker multiplies its two blocks. Nothing else.
pub fn worker_compute(share: &EncodedShare) -> Result<WorkerResult> {
    if share.f_share.ncols() != share.g_share.nrows() {
        return Err(Error::Parameter(format!(
            "share blocks are not conformable: F is {}x{}, G is {}x{}",
            share.f_share.nrows(),
            share.f_share.ncols(),
            share.g_share.nrows(),
            share.g_share.ncols()
        )));
    }
    Ok(WorkerResult {
        worker: share.worker,
        theta: share.theta,
        block: share.f_share.dot(&share.g_share),
        completion_time: 0.0,
    })
}

/// The extracted count-sketches of `C`: for each `eta` the `2b'-1` signed
/// bucket blocks, already projected to the reals.
#[derive(Clone, Debug)]
pub struct SketchSet {
    /// `blocks[eta-1][k]`, each of shape `(r/m, t/n)`.
    blocks: Vec<Vec<Array2<f64>>>,
    family: SketchFamily,
    /// Largest `|Im|` seen across the extracted blocks before projection.
    pub max_imag_residue: f64,
    /// Frobenius norm of the real projection (the scale the residue is
    /// judged against).
    pub scale: f64,
    /// Residual at delivered-but-unused sample points, if any.
    pub unused_residual: Option<f64>,
}

impl SketchSet {
    pub fn family(&self) -> &SketchFamily {
        &self.family
    }

    pub fn d(&self) -> usize {
        self.blocks.len()
    }

    pub fn sketch_len(&self) -> usize {
        self.blocks[0].len()
    }

    /// Bucket `k` of sketch `eta` (1-based `eta`).
    pub fn block(&self, eta: usize, k: usize) -> &Array2<f64> {
        &self.blocks[eta - 1][k]
    }
}

/// Imaginary residue above this fraction of the decoded scale aborts decoding.
const RESIDUE_GATE: f64 = 1e-6;

/// Interpolated coefficients this far above the sample scale mean the grid
/// was too ill-conditioned to trust (real grids cannot be caught by the
/// imaginary-residue check, so this is the backstop).
const COEFF_BLOWUP_GATE: f64 = 1e6;

fn interp_coeff_scale(poly: &crate::poly::MatrixPoly) -> f64 {
    poly.coeffs()
        .iter()
        .flat_map(|c| c.iter())
        .map(|v| v.norm())
        .fold(0.0, f64::max)
}

/// Step 5: interpolate `P(x)` from the first `threshold` results, regroup
/// `x^{2pb'-1}` into `omega`, evaluate at `omega = eta` and read off the
/// coefficients of `x^{kp+p-1}`.
pub fn decode(
    results: &[WorkerResult],
    params: &SchemeParams,
    family: &SketchFamily,
) -> Result<SketchSet> {
    family.check_against(params)?;
    let need = params.threshold();
    if results.len() < need {
        return Err(Error::InsufficientSamples {
            needed: need,
            got: results.len(),
        });
    }
    // The first `need` arrivals decide the decode; within them order is
    // canonicalised so the output depends only on the subset.
    let mut used: Vec<&WorkerResult> = results[..need].iter().collect();
    used.sort_by_key(|r| r.worker);

    // On the default grid the worker index names a root of unity, which makes
    // the exact erasure solve available; anything else goes through the
    // general barycentric route.
    let n = params.workers;
    let on_grid = used
        .iter()
        .all(|r| r.worker < n && (r.theta - root_of_unity(r.worker, n)).norm() <= 1e-12);
    let poly = if on_grid {
        let samples: Vec<(usize, Array2<C64>)> =
            used.iter().map(|r| (r.worker, r.block.clone())).collect();
        interpolate_unit_subgrid(&samples, n, need - 1)?
    } else {
        let samples: Vec<(C64, Array2<C64>)> =
            used.iter().map(|r| (r.theta, r.block.clone())).collect();
        interpolate(&samples, need - 1)?.poly
    };
    let value_scale = used
        .iter()
        .flat_map(|r| r.block.iter())
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    let coeff_scale = interp_coeff_scale(&poly);
    if coeff_scale > COEFF_BLOWUP_GATE * value_scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NumericalFailure {
            residue: coeff_scale,
            tolerance: COEFF_BLOWUP_GATE * value_scale,
        });
    }

    let unused_residual = if results.len() > need {
        let mut worst = 0.0f64;
        for r in &results[need..] {
            let got = poly.eval(r.theta);
            let scale = r.block.iter().map(|z| z.norm()).fold(1.0, f64::max);
            for (g, want) in got.iter().zip(r.block.iter()) {
                worst = worst.max((g - want).norm() / scale);
            }
        }
        Some(worst)
    } else {
        None
    };

    // Regroup exponents e = q*(2pb'-1) + rem and evaluate omega = eta; only
    // the positions rem = kp + p - 1 hold sketch buckets of C.
    let period = 2 * params.p * params.bprime - 1;
    let shape = poly.shape();
    let mut blocks = Vec::with_capacity(params.d);
    let mut max_imag: f64 = 0.0;
    let mut scale_sq = 0.0;
    for eta in 1..=params.d {
        let mut per_eta = Vec::with_capacity(params.sketch_len());
        for k in 0..params.sketch_len() {
            let rem = k * params.p + params.p - 1;
            let mut acc = Array2::<C64>::zeros(shape);
            let mut weight = 1.0f64;
            for q in 0..(2 * params.d - 1) {
                let e = q * period + rem;
                if e <= poly.degree() {
                    acc.scaled_add(C64::new(weight, 0.0), &poly.coeff(e));
                }
                weight *= eta as f64;
            }
            for v in acc.iter() {
                max_imag = max_imag.max(v.im.abs());
                scale_sq += v.re * v.re;
            }
            per_eta.push(acc.mapv(|v| v.re));
        }
        blocks.push(per_eta);
    }
    let scale = scale_sq.sqrt();
    if max_imag > RESIDUE_GATE * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NumericalFailure {
            residue: max_imag,
            tolerance: RESIDUE_GATE * scale,
        });
    }

    Ok(SketchSet {
        blocks,
        family: family.clone(),
        max_imag_residue: max_imag,
        scale,
        unused_residual,
    })
}

/// The assembled estimate of `C`.
#[derive(Clone, Debug)]
pub struct EstimateReport {
    /// `C~`, shape `(r, t)`.
    pub c_tilde: Array2<f64>,
    /// The `d` signed candidate blocks per block position, when retained.
    pub candidates: Option<Vec<Vec<Vec<Array2<f64>>>>>,
}

/// Step 6: per block position `(i, j)` take the elementwise median over
/// `eta` of `s_eta(i) * s~_eta(j) * P^(eta,eta)_{h_eta(i)+h~_eta(j)}`.
pub fn median_recover(sketches: &SketchSet, params: &SchemeParams) -> Result<EstimateReport> {
    median_recover_detailed(sketches, params, false)
}

/// As [`median_recover`], optionally retaining the per-position median inputs.
pub fn median_recover_detailed(
    sketches: &SketchSet,
    params: &SchemeParams,
    keep_candidates: bool,
) -> Result<EstimateReport> {
    let family = sketches.family();
    if sketches.d() != params.d || sketches.sketch_len() != params.sketch_len() {
        return Err(Error::Parameter(
            "sketch set does not match the scheme parameters".into(),
        ));
    }
    let (br, bc) = sketches.block(1, 0).dim();
    let mut c_tilde = Array2::<f64>::zeros((params.m * br, params.n * bc));
    let mut all_candidates = keep_candidates.then(Vec::new);
    let mut estimates = vec![0.0f64; params.d];
    for i in 0..params.m {
        let mut row_candidates = keep_candidates.then(Vec::new);
        for j in 0..params.n {
            let signed: Vec<Array2<f64>> = (1..=params.d)
                .map(|eta| {
                    let k = family.row_hash(eta - 1, i) + family.col_hash(eta - 1, j);
                    let sign = family.row_sign(eta - 1, i) * family.col_sign(eta - 1, j);
                    sketches.block(eta, k).mapv(|v| sign * v)
                })
                .collect();
            let mut block = c_tilde.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
            for r in 0..br {
                for c in 0..bc {
                    for (e, cand) in signed.iter().enumerate() {
                        estimates[e] = cand[(r, c)];
                    }
                    block[(r, c)] = median(&mut estimates);
                }
            }
            if let Some(rc) = row_candidates.as_mut() {
                rc.push(signed);
            }
        }
        if let (Some(all), Some(rc)) = (all_candidates.as_mut(), row_candidates) {
            all.push(rc);
        }
    }
    Ok(EstimateReport {
        c_tilde,
        candidates: all_candidates,
    })
}

/// The whole pipeline under a fresh seed-derived family: encode, compute all
/// `N` worker products, decode from the first `threshold` of them, recover.
pub fn approximate_multiply(
    a: &Array2<f64>,
    b: &Array2<f64>,
    params: &SchemeParams,
    seed: u64,
) -> Result<EstimateReport> {
    let family = SketchFamily::from_seed(seed, params.m, params.n, params.bprime, params.d)?;
    let grid = EvaluationGrid::roots_of_unity(params.workers)?;
    let shares = encode(a, b, params, &family, &grid)?;
    let results: Vec<WorkerResult> = shares
        .iter()
        .map(worker_compute)
        .collect::<Result<_>>()?;
    let sketches = decode(&results, params, &family)?;
    median_recover(&sketches, params)
}
