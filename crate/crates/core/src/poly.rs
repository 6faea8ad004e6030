//! Matrix-valued polynomials, evaluation grids and coefficient interpolation.
//!
//! Decoding reduces to recovering the coefficients of a degree-`D` matrix
//! polynomial from `D+1` evaluations at distinct points. On the default grid
//! (complex roots of unity) the complete-grid case is an inverse DFT; for a
//! proper subset the interpolant is formed in barycentric Lagrange form,
//! resampled onto the `D+1`-point unit circle and inverse-transformed, which
//! keeps the conditioning uniform for arbitrary fastest-K subsets.

use std::f64::consts::TAU;

use ndarray::Array2;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::C64;

/// `exp(2*pi*i * j/n)`, computed so that equal fractions `j/n` give bitwise
/// identical points (needed for exact-hit detection across grid sizes).
pub fn root_of_unity(j: usize, n: usize) -> C64 {
    C64::from_polar(1.0, TAU * (j as f64 / n as f64))
}

/// How a grid's points were generated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GridMode {
    RootsOfUnity,
    Chebyshev,
    Explicit,
}

/// The distinct evaluation points handed to workers.
#[derive(Clone, Debug)]
pub struct EvaluationGrid {
    mode: GridMode,
    points: Vec<C64>,
}

impl EvaluationGrid {
    /// The `n`-th complex roots of unity.
    pub fn roots_of_unity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("grid needs at least one point".into()));
        }
        Ok(EvaluationGrid {
            mode: GridMode::RootsOfUnity,
            points: (0..n).map(|j| root_of_unity(j, n)).collect(),
        })
    }

    /// Chebyshev-Gauss points `cos(pi*(2j+1)/(2n))`, all real and distinct.
    pub fn chebyshev(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("grid needs at least one point".into()));
        }
        let points = (0..n)
            .map(|j| {
                let x = (std::f64::consts::PI * (2 * j + 1) as f64 / (2 * n) as f64).cos();
                C64::new(x, 0.0)
            })
            .collect();
        Ok(EvaluationGrid {
            mode: GridMode::Chebyshev,
            points,
        })
    }

    /// Caller-supplied points; must be pairwise distinct.
    pub fn explicit(points: Vec<C64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Parameter("grid needs at least one point".into()));
        }
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                if points[i] == points[j] {
                    return Err(Error::Parameter(format!(
                        "grid points {i} and {j} coincide at {}",
                        points[i]
                    )));
                }
            }
        }
        Ok(EvaluationGrid {
            mode: GridMode::Explicit,
            points,
        })
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, j: usize) -> C64 {
        self.points[j]
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }
}

/// A polynomial with matrix coefficients, stored densely from degree 0 up.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixPoly {
    coeffs: Vec<Array2<C64>>,
}

impl MatrixPoly {
    pub fn new(coeffs: Vec<Array2<C64>>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Parameter("polynomial needs at least one coefficient".into()));
        }
        let shape = coeffs[0].dim();
        if coeffs.iter().any(|c| c.dim() != shape) {
            return Err(Error::Parameter(
                "all coefficient blocks must share one shape".into(),
            ));
        }
        Ok(MatrixPoly { coeffs })
    }

    pub fn from_real(coeffs: Vec<Array2<f64>>) -> Result<Self> {
        Self::new(
            coeffs
                .into_iter()
                .map(|c| c.mapv(|v| C64::new(v, 0.0)))
                .collect(),
        )
    }

    pub fn zero(degree: usize, shape: (usize, usize)) -> Self {
        MatrixPoly {
            coeffs: (0..=degree).map(|_| Array2::zeros(shape)).collect(),
        }
    }

    /// Structural degree: index of the last stored coefficient.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn shape(&self) -> (usize, usize) {
        self.coeffs[0].dim()
    }

    pub fn coeffs(&self) -> &[Array2<C64>] {
        &self.coeffs
    }

    /// Coefficient of `x^k`, or a zero block past the stored degree.
    pub fn coeff(&self, k: usize) -> Array2<C64> {
        self.coeffs
            .get(k)
            .cloned()
            .unwrap_or_else(|| Array2::zeros(self.shape()))
    }

    /// Horner evaluation.
    pub fn eval(&self, x: C64) -> Array2<C64> {
        let mut acc = self.coeffs[self.coeffs.len() - 1].clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc.mapv_inplace(|v| v * x);
            acc += c;
        }
        acc
    }

    /// Largest `|Im|` over all coefficients.
    pub fn max_imag(&self) -> f64 {
        self.coeffs
            .iter()
            .flat_map(|c| c.iter())
            .map(|v| v.im.abs())
            .fold(0.0, f64::max)
    }

    /// Real parts of all coefficients.
    pub fn real_coeffs(&self) -> Vec<Array2<f64>> {
        self.coeffs.iter().map(|c| c.mapv(|v| v.re)).collect()
    }
}

/// Outcome of a decode-side interpolation.
#[derive(Clone, Debug)]
pub struct Interpolation {
    pub poly: MatrixPoly,
    /// Largest relative residual at the sample points beyond the first
    /// `degree+1` (a cross-check; `None` when every sample was used).
    pub unused_residual: Option<f64>,
}

/// Monomial coefficients via Newton divided differences: numerically sound
/// for arbitrary distinct points at the moderate degrees real grids can
/// support at all (coefficient extraction on a real interval is intrinsically
/// exponentially conditioned in the degree).
fn newton_coefficients(points: &[C64], values: &[&Array2<C64>]) -> Vec<Array2<C64>> {
    let k = points.len();
    let shape = values[0].dim();
    let mut dd: Vec<Array2<C64>> = values.iter().map(|v| (*v).clone()).collect();
    for level in 1..k {
        for j in (level..k).rev() {
            let denom = points[j] - points[j - level];
            let prev = dd[j - 1].clone();
            let cur = &mut dd[j];
            *cur -= &prev;
            cur.mapv_inplace(|v| v / denom);
        }
    }
    // expand the Newton form innermost-out: poly <- poly*(x - x_j) + dd[j]
    let mut coeffs: Vec<Array2<C64>> = vec![Array2::zeros(shape); k];
    coeffs[0] = dd[k - 1].clone();
    for (step, j) in (0..k - 1).rev().enumerate() {
        let len = step + 1;
        let xj = points[j];
        coeffs[len] = coeffs[len - 1].clone();
        for q in (1..len).rev() {
            let lower = coeffs[q - 1].clone();
            let cur = &mut coeffs[q];
            cur.mapv_inplace(|v| -(v * xj));
            *cur += &lower;
        }
        coeffs[0].mapv_inplace(|v| -(v * xj));
        coeffs[0] += &dd[j];
    }
    coeffs
}

/// Maps every point onto an index of the `n`-point root-of-unity grid, if all
/// points lie (to within `1e-9`) on distinct such roots.
fn match_unit_grid(points: &[C64], n: usize) -> Option<Vec<usize>> {
    let step = TAU / n as f64;
    let mut seen = vec![false; n];
    let mut idx = Vec::with_capacity(points.len());
    for p in points {
        let mut j = (p.arg().rem_euclid(TAU) / step).round() as usize % n;
        // guard against rounding across the wrap
        let mut best = (p - root_of_unity(j, n)).norm();
        for cand in [(j + n - 1) % n, (j + 1) % n] {
            let d = (p - root_of_unity(cand, n)).norm();
            if d < best {
                best = d;
                j = cand;
            }
        }
        if best > 1e-9 || seen[j] {
            return None;
        }
        seen[j] = true;
        idx.push(j);
    }
    Some(idx)
}

/// Recovers the unique degree-`<= degree` matrix polynomial through the first
/// `degree + 1` samples (in the order given). Remaining samples are used only
/// as a residual cross-check.
pub fn interpolate(samples: &[(C64, Array2<C64>)], degree: usize) -> Result<Interpolation> {
    let k = degree + 1;
    if samples.len() < k {
        return Err(Error::InsufficientSamples {
            needed: k,
            got: samples.len(),
        });
    }
    let used = &samples[..k];
    for i in 0..k {
        for j in i + 1..k {
            if used[i].0 == used[j].0 {
                return Err(Error::Parameter(format!(
                    "duplicate evaluation point {} in samples {i} and {j}",
                    used[i].0
                )));
            }
        }
    }
    let shape = used[0].1.dim();
    if used.iter().any(|(_, v)| v.dim() != shape) {
        return Err(Error::Parameter("sample blocks must share one shape".into()));
    }

    let points: Vec<C64> = used.iter().map(|(p, _)| *p).collect();

    // Complete unit-circle grids invert exactly by DFT; anything else goes
    // through Newton divided differences.
    let coeffs: Vec<Array2<C64>> = match match_unit_grid(&points, k) {
        Some(idx) => {
            let mut ordered: Vec<Array2<C64>> = vec![Array2::zeros(shape); k];
            for (slot, (_, v)) in idx.into_iter().zip(used) {
                ordered[slot] = v.clone();
            }
            // c_q = (1/k) * sum_t v_t * exp(-2*pi*i*q*t/k): a forward DFT
            let mut planner = FftPlanner::new();
            let fft = planner.plan_fft_forward(k);
            let mut coeffs = vec![Array2::<C64>::zeros(shape); k];
            let mut buf = vec![C64::new(0.0, 0.0); k];
            for r in 0..shape.0 {
                for c in 0..shape.1 {
                    for (t, cv) in ordered.iter().enumerate() {
                        buf[t] = cv[(r, c)];
                    }
                    fft.process(&mut buf);
                    for (q, co) in coeffs.iter_mut().enumerate() {
                        co[(r, c)] = buf[q] / k as f64;
                    }
                }
            }
            coeffs
        }
        None => {
            let values: Vec<&Array2<C64>> = used.iter().map(|(_, v)| v).collect();
            newton_coefficients(&points, &values)
        }
    };
    let poly = MatrixPoly::new(coeffs)?;

    let unused_residual = if samples.len() > k {
        let mut worst = 0.0f64;
        for (p, v) in &samples[k..] {
            let got = poly.eval(*p);
            let scale = v.iter().map(|z| z.norm()).fold(1.0, f64::max);
            for (g, want) in got.iter().zip(v.iter()) {
                worst = worst.max((g - want).norm() / scale);
            }
        }
        Some(worst)
    } else {
        None
    };

    Ok(Interpolation {
        poly,
        unused_residual,
    })
}

/// Erasure-style coefficient recovery when the sample points are a subset of
/// the `n`-point root-of-unity grid. With `Lambda(x) = prod (x - theta_miss)`
/// over the missing grid points, `Q(x) = P(x) * Lambda(x)` has degree `n - 1`,
/// vanishes at every missing point and equals `value * Lambda(theta)` at the
/// received ones, so its coefficients follow from one exact size-`n` inverse
/// transform; deflating the `n - k` locator roots returns `P`. No linear
/// system, machine-precision for arbitrary subsets.
///
/// `samples` holds `(grid index, value)`; exactly the first `degree + 1`
/// entries are used.
pub fn interpolate_unit_subgrid(
    samples: &[(usize, Array2<C64>)],
    n: usize,
    degree: usize,
) -> Result<MatrixPoly> {
    let k = degree + 1;
    if samples.len() < k {
        return Err(Error::InsufficientSamples {
            needed: k,
            got: samples.len(),
        });
    }
    if k > n {
        return Err(Error::Parameter(format!(
            "degree {degree} needs {k} points but the grid only has {n}"
        )));
    }
    let used = &samples[..k];
    let mut present = vec![false; n];
    for (idx, _) in used {
        if *idx >= n {
            return Err(Error::Parameter(format!(
                "grid index {idx} outside the {n}-point grid"
            )));
        }
        if present[*idx] {
            return Err(Error::Parameter(format!("duplicate grid index {idx}")));
        }
        present[*idx] = true;
    }
    let shape = used[0].1.dim();
    if used.iter().any(|(_, v)| v.dim() != shape) {
        return Err(Error::Parameter("sample blocks must share one shape".into()));
    }

    let roots: Vec<C64> = (0..n).map(|j| root_of_unity(j, n)).collect();
    let missing: Vec<C64> = (0..n).filter(|&t| !present[t]).map(|t| roots[t]).collect();

    // Lambda evaluated at each received point
    let locator: Vec<C64> = used
        .iter()
        .map(|(idx, _)| missing.iter().map(|u| roots[*idx] - u).product())
        .collect();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut coeffs = vec![Array2::<C64>::zeros(shape); k];
    let mut buf = vec![C64::new(0.0, 0.0); n];
    let mut scalars = vec![C64::new(0.0, 0.0); k];

    // one locator-deflation pass over a scalar sample vector
    let solve_entry = |values: &[C64], out: &mut [C64], buf: &mut Vec<C64>| {
        for v in buf.iter_mut() {
            *v = C64::new(0.0, 0.0);
        }
        for (((idx, _), lam), v) in used.iter().zip(&locator).zip(values) {
            buf[*idx] = v * lam;
        }
        fft.process(buf);
        // buf now holds n * coefficients of Q; deflate the locator roots
        for v in buf.iter_mut() {
            *v /= n as f64;
        }
        let mut top = n - 1;
        for root in &missing {
            // synthetic division by the monic factor (x - root)
            let mut carry = buf[top];
            for q in (0..top).rev() {
                let next = buf[q] + root * carry;
                buf[q] = carry;
                carry = next;
            }
            // `carry` is the remainder; exactly zero in infinite precision
            top -= 1;
        }
        out.copy_from_slice(&buf[..k]);
    };

    let mut values = vec![C64::new(0.0, 0.0); k];
    let mut residual = vec![C64::new(0.0, 0.0); k];
    for r in 0..shape.0 {
        for c in 0..shape.1 {
            for (v, (_, block)) in values.iter_mut().zip(used) {
                *v = block[(r, c)];
            }
            solve_entry(&values, &mut scalars, &mut buf);
            if !missing.is_empty() {
                // one refinement step: re-interpolate the residual at the
                // received points and correct; this removes most of the
                // deflation rounding when the erased points cluster
                for (slot, (res, (idx, _))) in residual.iter_mut().zip(used).enumerate() {
                    let x = roots[*idx];
                    let mut acc = scalars[k - 1];
                    for q in (0..k - 1).rev() {
                        acc = acc * x + scalars[q];
                    }
                    *res = values[slot] - acc;
                }
                let correction = {
                    let mut corr = vec![C64::new(0.0, 0.0); k];
                    solve_entry(&residual, &mut corr, &mut buf);
                    corr
                };
                for (s, corr) in scalars.iter_mut().zip(&correction) {
                    *s += corr;
                }
            }
            for (q, co) in coeffs.iter_mut().enumerate() {
                co[(r, c)] = scalars[q];
            }
        }
    }
    MatrixPoly::new(coeffs)
}

/// Lagrange basis over the integer nodes `1..=d`, evaluated at `omega`:
/// `L_l(omega) = prod_{i != l} (omega - i) / (l - i)`. Cardinal at the nodes.
pub fn lagrange_basis(d: usize, omega: C64) -> Vec<C64> {
    (1..=d)
        .map(|l| {
            let mut w = C64::new(1.0, 0.0);
            for i in 1..=d {
                if i != l {
                    w *= (omega - i as f64) / (l as f64 - i as f64);
                }
            }
            w
        })
        .collect()
}
