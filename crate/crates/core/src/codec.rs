//! The three coding layers applied before sending work to the workers.
//!
//! Layer 1 (entangled polynomial): block-columns of `A` ride on powers `x^k`,
//! block-rows of `B` on reversed powers `x^{p-1-k}`, so that the coefficient
//! of `x^{p-1}` in any entry of the product is the true block of `C`.
//!
//! Layer 2 (count-sketch): the `m` block-rows of `A_hat(x)` are folded into
//! `b'` buckets of a polynomial in a fresh variable `alpha`, once per hash
//! pair; same for the `n` block-columns of `B_hat(x)`.
//!
//! Layer 3 (Lagrange): the `d` sketch polynomials are tied into one
//! polynomial in a third variable `omega` that restores each of them at the
//! integer nodes `omega = 1..d`.
//!
//! Workers only ever see the single-variable collapse `alpha = x^p`,
//! `omega = x^{2pb'-1}` evaluated at their own point.

use ndarray::{concatenate, s, Array2, Axis};

use crate::block::BlockMatrix;
use crate::error::{Error, Result};
use crate::hashing::{HashFn, SignFn};
use crate::poly::{lagrange_basis, MatrixPoly};
use crate::C64;

/// Builds the entangled pair `A_hat(x) = sum_k x^k A_k` (block-columns of `A`)
/// and `B_hat(x) = sum_k x^{p-1-k} B_k` (block-rows of `B`). `a` must be
/// partitioned `m x p`, `b` partitioned `p x n` with matching inner dimension.
pub fn layer_entangled(a: &BlockMatrix, b: &BlockMatrix) -> Result<(MatrixPoly, MatrixPoly)> {
    let p = a.grid_cols();
    if b.grid_rows() != p {
        return Err(Error::Parameter(format!(
            "operands disagree on p: A has {p} block-columns, B has {} block-rows",
            b.grid_rows()
        )));
    }
    if a.cols() != b.rows() {
        return Err(Error::Parameter(format!(
            "inner dimensions differ: A is {}x{}, B is {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let m = a.grid_rows();
    let n = b.grid_cols();

    let mut a_coeffs = Vec::with_capacity(p);
    for k in 0..p {
        let col: Vec<_> = (0..m).map(|i| a.block(i, k).view()).collect();
        a_coeffs.push(
            concatenate(Axis(0), &col)
                .expect("uniform block shapes")
                .mapv(|v| C64::new(v, 0.0)),
        );
    }

    let mut b_coeffs = vec![Array2::<C64>::zeros((b.rows() / p, b.cols())); p];
    for k in 0..p {
        let row: Vec<_> = (0..n).map(|j| b.block(k, j).view()).collect();
        b_coeffs[p - 1 - k] = concatenate(Axis(1), &row)
            .expect("uniform block shapes")
            .mapv(|v| C64::new(v, 0.0));
    }

    Ok((MatrixPoly::new(a_coeffs)?, MatrixPoly::new(b_coeffs)?))
}

/// A bivariate sketch polynomial `sum_beta alpha^beta * q_beta(x)` with
/// matrix-polynomial bucket contents.
#[derive(Clone, Debug)]
pub struct SketchPoly {
    parts: Vec<MatrixPoly>, // index = power of alpha; length = b'
}

impl SketchPoly {
    pub fn from_parts(parts: Vec<MatrixPoly>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Parameter("sketch polynomial needs >= 1 bucket".into()));
        }
        let shape = parts[0].shape();
        if parts.iter().any(|p| p.shape() != shape) {
            return Err(Error::Parameter("bucket polynomials must share one shape".into()));
        }
        Ok(SketchPoly { parts })
    }

    /// Number of alpha buckets, `b'`.
    pub fn bucket_count(&self) -> usize {
        self.parts.len()
    }

    pub fn part(&self, beta: usize) -> &MatrixPoly {
        &self.parts[beta]
    }

    pub fn shape(&self) -> (usize, usize) {
        self.parts[0].shape()
    }

    /// Largest x-degree with a nonzero coefficient, scanning all buckets.
    pub fn x_degree(&self) -> usize {
        let mut deg = 0;
        for part in &self.parts {
            for (k, c) in part.coeffs().iter().enumerate() {
                if c.iter().any(|v| v.norm_sqr() > 0.0) {
                    deg = deg.max(k);
                }
            }
        }
        deg
    }

    /// Evaluates at `(x, alpha)`; Horner over alpha of Horner over x.
    pub fn eval(&self, x: C64, alpha: C64) -> Array2<C64> {
        let mut acc = self.parts[self.parts.len() - 1].eval(x);
        for part in self.parts.iter().rev().skip(1) {
            acc.mapv_inplace(|v| v * alpha);
            acc += &part.eval(x);
        }
        acc
    }

    fn add_scaled(&mut self, w: C64, other: &SketchPoly) {
        debug_assert_eq!(self.parts.len(), other.parts.len());
        for (mine, theirs) in self.parts.iter_mut().zip(&other.parts) {
            let deg = mine.degree().max(theirs.degree());
            let shape = mine.shape();
            let mut coeffs = Vec::with_capacity(deg + 1);
            for k in 0..=deg {
                let mut c = mine.coeff(k);
                c.scaled_add(w, &theirs.coeff(k));
                coeffs.push(c);
            }
            *mine = MatrixPoly::new(coeffs).expect("same shape");
            debug_assert_eq!(shape, mine.shape());
        }
    }
}

fn check_family(hashes: &[HashFn], signs: &[SignFn], domain: usize) -> Result<usize> {
    if hashes.is_empty() || hashes.len() != signs.len() {
        return Err(Error::Parameter(format!(
            "need equally many hashes and signs (>= 1), got {} and {}",
            hashes.len(),
            signs.len()
        )));
    }
    let bprime = hashes[0].range();
    for (h, s) in hashes.iter().zip(signs) {
        if h.domain() != domain || s.domain() != domain {
            return Err(Error::Parameter(format!(
                "hash/sign domain {} / {} does not match the {domain} blocks",
                h.domain(),
                s.domain()
            )));
        }
        if h.range() != bprime {
            return Err(Error::Parameter("all hashes must share one range".into()));
        }
    }
    Ok(bprime)
}

/// Sketches the `m` block-rows of `a_hat` once per hash pair:
/// `F_l(x, alpha) = sum_i s_l(i) * A_hat_i(x) * alpha^{h_l(i)}`.
pub fn sketch_rows(
    a_hat: &MatrixPoly,
    hashes: &[HashFn],
    signs: &[SignFn],
) -> Result<Vec<SketchPoly>> {
    let m = hashes[0].domain();
    let bprime = check_family(hashes, signs, m)?;
    let (rows, cols) = a_hat.shape();
    if rows % m != 0 {
        return Err(Error::Parameter(format!(
            "cannot split {rows} rows into {m} blocks"
        )));
    }
    let br = rows / m;
    let deg = a_hat.degree();
    let mut out = Vec::with_capacity(hashes.len());
    for (h, sg) in hashes.iter().zip(signs) {
        let mut buckets = vec![vec![Array2::<C64>::zeros((br, cols)); deg + 1]; bprime];
        for i in 0..m {
            let beta = h.eval(i);
            let sign = C64::new(sg.eval(i), 0.0);
            for (k, coeff) in a_hat.coeffs().iter().enumerate() {
                buckets[beta][k].scaled_add(sign, &coeff.slice(s![i * br..(i + 1) * br, ..]));
            }
        }
        let parts: Vec<MatrixPoly> = buckets
            .into_iter()
            .map(|c| MatrixPoly::new(c).expect("nonempty"))
            .collect();
        out.push(SketchPoly::from_parts(parts)?);
    }
    Ok(out)
}

/// Sketches the `n` block-columns of `b_hat` once per hash pair:
/// `G_l(x, alpha) = sum_j s~_l(j) * B_hat_j(x) * alpha^{h~_l(j)}`.
pub fn sketch_cols(
    b_hat: &MatrixPoly,
    hashes: &[HashFn],
    signs: &[SignFn],
) -> Result<Vec<SketchPoly>> {
    let n = hashes[0].domain();
    let bprime = check_family(hashes, signs, n)?;
    let (rows, cols) = b_hat.shape();
    if cols % n != 0 {
        return Err(Error::Parameter(format!(
            "cannot split {cols} columns into {n} blocks"
        )));
    }
    let bc = cols / n;
    let deg = b_hat.degree();
    let mut out = Vec::with_capacity(hashes.len());
    for (h, sg) in hashes.iter().zip(signs) {
        let mut buckets = vec![vec![Array2::<C64>::zeros((rows, bc)); deg + 1]; bprime];
        for j in 0..n {
            let beta = h.eval(j);
            let sign = C64::new(sg.eval(j), 0.0);
            for (k, coeff) in b_hat.coeffs().iter().enumerate() {
                buckets[beta][k].scaled_add(sign, &coeff.slice(s![.., j * bc..(j + 1) * bc]));
            }
        }
        let parts: Vec<MatrixPoly> = buckets
            .into_iter()
            .map(|c| MatrixPoly::new(c).expect("nonempty"))
            .collect();
        out.push(SketchPoly::from_parts(parts)?);
    }
    Ok(out)
}

/// The Lagrange layer over the `d` sketch polynomials, kept in nodal form:
/// evaluated at `omega` it is `sum_l F_l(x, alpha) * L_l(omega)` with nodes
/// `1..=d`, so `omega = eta` restores `F_eta` exactly.
#[derive(Clone, Debug)]
pub struct CombinedPoly {
    components: Vec<SketchPoly>,
}

/// Ties `d` sketch polynomials together; identity for `d = 1`.
pub fn lagrange_combine(components: Vec<SketchPoly>) -> Result<CombinedPoly> {
    if components.is_empty() {
        return Err(Error::Parameter("need at least one sketch polynomial".into()));
    }
    let shape = components[0].shape();
    let buckets = components[0].bucket_count();
    if components
        .iter()
        .any(|c| c.shape() != shape || c.bucket_count() != buckets)
    {
        return Err(Error::Parameter(
            "all sketch polynomials must share shape and bucket count".into(),
        ));
    }
    Ok(CombinedPoly { components })
}

impl CombinedPoly {
    /// Number of tied sketches, `d`.
    pub fn count(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, l: usize) -> &SketchPoly {
        &self.components[l]
    }

    /// Collapses the omega variable at a fixed scalar.
    pub fn eval_at_omega(&self, omega: C64) -> SketchPoly {
        let weights = lagrange_basis(self.components.len(), omega);
        let shape = self.components[0].shape();
        let buckets = self.components[0].bucket_count();
        let zero =
            SketchPoly::from_parts(vec![MatrixPoly::zero(0, shape); buckets]).expect("nonempty");
        let mut acc = zero;
        for (w, comp) in weights.iter().zip(&self.components) {
            acc.add_scaled(*w, comp);
        }
        acc
    }

    /// The single-variable collapse a worker's share is built from:
    /// `F(theta, theta^p, theta^{2pb'-1})`.
    pub fn substitute_and_eval(&self, theta: C64, p: usize, bprime: usize) -> Result<Array2<C64>> {
        if bprime != self.components[0].bucket_count() {
            return Err(Error::Parameter(format!(
                "bucket count {} does not match b' = {bprime}",
                self.components[0].bucket_count()
            )));
        }
        let alpha = theta.powu(p as u32);
        let omega = theta.powu((2 * p * bprime - 1) as u32);
        let weights = lagrange_basis(self.components.len(), omega);
        let mut acc = Array2::<C64>::zeros(self.components[0].shape());
        for (w, comp) in weights.iter().zip(&self.components) {
            acc.scaled_add(*w, &comp.eval(theta, alpha));
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::partition;
    use crate::hashing::{make_hash_family, make_sign_family};
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    fn assert_close(a: &Array2<C64>, b: &Array2<C64>, tol: f64) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).norm() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn entangled_p1_is_identity() {
        let a = random_matrix(4, 3, 1);
        let b = random_matrix(3, 6, 2);
        let (ah, bh) = layer_entangled(
            &partition(&a, 2, 1).unwrap(),
            &partition(&b, 1, 3).unwrap(),
        )
        .unwrap();
        assert_eq!(ah.degree(), 0);
        assert_eq!(bh.degree(), 0);
        assert_close(&ah.coeff(0), &a.mapv(c), 0.0);
        assert_close(&bh.coeff(0), &b.mapv(c), 0.0);
    }

    #[test]
    fn entangled_p4_coefficient_layout() {
        // A_hat coefficient k is block-column k of A; B_hat carries block-row k
        // of B at power p-1-k.
        let a = random_matrix(8, 8, 3);
        let b = random_matrix(8, 8, 4);
        let ab = partition(&a, 4, 4).unwrap();
        let bb = partition(&b, 4, 4).unwrap();
        let (ah, bh) = layer_entangled(&ab, &bb).unwrap();
        assert_eq!(ah.degree(), 3);
        assert_eq!(ah.shape(), (8, 2));
        assert_eq!(bh.shape(), (2, 8));
        for k in 0..4 {
            for i in 0..4 {
                let got = ah.coeff(k);
                let slice = got.slice(s![i * 2..(i + 1) * 2, ..]);
                assert_close(
                    &slice.to_owned(),
                    &ab.block(i, k).mapv(c),
                    0.0,
                );
            }
            for j in 0..4 {
                let got = bh.coeff(3 - k);
                let slice = got.slice(s![.., j * 2..(j + 1) * 2]);
                assert_close(
                    &slice.to_owned(),
                    &bb.block(k, j).mapv(c),
                    0.0,
                );
            }
        }
    }

    #[test]
    fn product_middle_coefficient_is_the_true_block_product() {
        // p=3, m=n=2: the x^2 coefficient of A_hat_i(x) * B_hat_j(x) equals
        // block (i,j) of A*B, computed here by direct block multiplication.
        let a = random_matrix(4, 6, 5);
        let b = random_matrix(6, 4, 6);
        let ab = partition(&a, 2, 3).unwrap();
        let bb = partition(&b, 3, 2).unwrap();
        let (ah, bh) = layer_entangled(&ab, &bb).unwrap();
        let c_exact = a.dot(&b);
        let cb = partition(&c_exact, 2, 2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                // x^2 coefficient of the (i,j) entry of the product polynomial
                let mut acc = Array2::<C64>::zeros((2, 2));
                for k1 in 0..=2usize {
                    let k2 = 2 - k1;
                    if k2 > 2 {
                        continue;
                    }
                    let ai = ah.coeff(k1);
                    let ai = ai.slice(s![i * 2..(i + 1) * 2, ..]);
                    let bj = bh.coeff(k2);
                    let bj = bj.slice(s![.., j * 2..(j + 1) * 2]);
                    acc += &ai.dot(&bj);
                }
                assert_close(&acc, &cb.block(i, j).mapv(c), 1e-12);
            }
        }
    }

    #[test]
    fn single_row_sketch_has_one_term() {
        let a = random_matrix(2, 4, 7);
        let ab = partition(&a, 1, 2).unwrap();
        let bb = partition(&random_matrix(4, 2, 8), 2, 1).unwrap();
        let (ah, _) = layer_entangled(&ab, &bb).unwrap();
        let hashes = make_hash_family(9, 2, 1, 3).unwrap();
        let signs = make_sign_family(10, 2, 1).unwrap();
        let sketches = sketch_rows(&ah, &hashes, &signs).unwrap();
        for (l, f) in sketches.iter().enumerate() {
            let beta = hashes[l].eval(0);
            for b in 0..3 {
                for k in 0..=f.part(b).degree() {
                    let coeff = f.part(b).coeff(k);
                    if b == beta {
                        let mut want = ah.coeff(k);
                        want.mapv_inplace(|v| v * c(signs[l].eval(0)));
                        assert_close(&coeff, &want, 0.0);
                    } else {
                        assert!(coeff.iter().all(|v| v.norm() == 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn sketch_matches_defining_formula() {
        // F_l(x, alpha) = sum_i s_l(i) A_hat_i(x) alpha^{h_l(i)}, checked by
        // rebuilding each bucket from scratch; every row lands exactly once.
        let m = 4;
        let a = random_matrix(8, 6, 11);
        let ab = partition(&a, m, 3).unwrap();
        let bb = partition(&random_matrix(6, 4, 12), 3, 2).unwrap();
        let (ah, _) = layer_entangled(&ab, &bb).unwrap();
        let d = 3;
        let bprime = 2;
        let hashes = make_hash_family(13, d, m, bprime).unwrap();
        let signs = make_sign_family(14, d, m).unwrap();
        let sketches = sketch_rows(&ah, &hashes, &signs).unwrap();
        assert_eq!(sketches.len(), d);
        let mut assignments = 0;
        for l in 0..d {
            for beta in 0..bprime {
                for k in 0..=ah.degree() {
                    let mut want = Array2::<C64>::zeros((2, 2));
                    for i in 0..m {
                        if hashes[l].eval(i) == beta {
                            let coeff = ah.coeff(k);
                            want.scaled_add(
                                c(signs[l].eval(i)),
                                &coeff.slice(s![i * 2..(i + 1) * 2, ..]),
                            );
                        }
                    }
                    assert_close(&sketches[l].part(beta).coeff(k), &want, 0.0);
                }
            }
            for i in 0..m {
                let _ = hashes[l].eval(i);
                assignments += 1;
            }
        }
        assert_eq!(assignments, d * m); // every block-row hashed once per l
    }

    #[test]
    fn combine_is_cardinal_at_the_nodes() {
        let a = random_matrix(4, 4, 15);
        let ab = partition(&a, 2, 2).unwrap();
        let bb = partition(&random_matrix(4, 4, 16), 2, 2).unwrap();
        let (ah, _) = layer_entangled(&ab, &bb).unwrap();
        let d = 3;
        let hashes = make_hash_family(17, d, 2, 2).unwrap();
        let signs = make_sign_family(18, d, 2).unwrap();
        let sketches = sketch_rows(&ah, &hashes, &signs).unwrap();
        let combined = lagrange_combine(sketches.clone()).unwrap();
        for eta in 1..=d {
            let restored = combined.eval_at_omega(c(eta as f64));
            for beta in 0..2 {
                for k in 0..=sketches[eta - 1].part(beta).degree() {
                    assert_close(
                        &restored.part(beta).coeff(k),
                        &sketches[eta - 1].part(beta).coeff(k),
                        1e-12,
                    );
                }
            }
        }
    }

    #[test]
    fn substitute_at_one_selects_the_first_sketch() {
        // theta = 1 collapses all powers, and L_l(1) picks l = 1.
        let a = random_matrix(4, 4, 19);
        let ab = partition(&a, 2, 2).unwrap();
        let bb = partition(&random_matrix(4, 4, 20), 2, 2).unwrap();
        let (ah, _) = layer_entangled(&ab, &bb).unwrap();
        let hashes = make_hash_family(21, 2, 2, 2).unwrap();
        let signs = make_sign_family(22, 2, 2).unwrap();
        let sketches = sketch_rows(&ah, &hashes, &signs).unwrap();
        let combined = lagrange_combine(sketches.clone()).unwrap();
        let got = combined.substitute_and_eval(c(1.0), 2, 2).unwrap();
        let want = sketches[0].eval(c(1.0), c(1.0));
        assert_close(&got, &want, 1e-12);
    }

    #[test]
    fn substitute_at_zero_keeps_constant_terms_only() {
        let a = random_matrix(4, 4, 23);
        let ab = partition(&a, 2, 2).unwrap();
        let bb = partition(&random_matrix(4, 4, 24), 2, 2).unwrap();
        let (ah, _) = layer_entangled(&ab, &bb).unwrap();
        let d = 3;
        let hashes = make_hash_family(25, d, 2, 2).unwrap();
        let signs = make_sign_family(26, d, 2).unwrap();
        let sketches = sketch_rows(&ah, &hashes, &signs).unwrap();
        let combined = lagrange_combine(sketches.clone()).unwrap();
        let got = combined.substitute_and_eval(c(0.0), 2, 2).unwrap();
        let weights = lagrange_basis(d, c(0.0));
        let mut want = Array2::<C64>::zeros((2, 2));
        for (w, f) in weights.iter().zip(&sketches) {
            want.scaled_add(*w, &f.part(0).coeff(0));
        }
        assert_close(&got, &want, 1e-12);
    }

    /// Expands the combined polynomial into one full univariate polynomial in
    /// x (alpha = x^p, omega = x^{2pb'-1} substituted symbolically) and checks
    /// that evaluating it agrees with `substitute_and_eval`: the result must
    /// not depend on the expansion order.
    #[test]
    fn substitution_matches_slow_expansion_oracle() {
        let p = 2;
        let bprime = 2;
        let d = 3;
        let a = random_matrix(4, 4, 27);
        let ab = partition(&a, 2, p).unwrap();
        let bb = partition(&random_matrix(4, 4, 28), p, 2).unwrap();
        let (ah, _) = layer_entangled(&ab, &bb).unwrap();
        let hashes = make_hash_family(29, d, 2, bprime).unwrap();
        let signs = make_sign_family(30, d, 2).unwrap();
        let sketches = sketch_rows(&ah, &hashes, &signs).unwrap();
        let combined = lagrange_combine(sketches.clone()).unwrap();

        // scalar coefficients of L_l(omega) by explicit product expansion
        let lagrange_coeffs: Vec<Vec<f64>> = (1..=d)
            .map(|l| {
                let mut poly = vec![1.0f64];
                for i in 1..=d {
                    if i == l {
                        continue;
                    }
                    let denom = (l as f64) - (i as f64);
                    let mut next = vec![0.0; poly.len() + 1];
                    for (k, &coeff) in poly.iter().enumerate() {
                        next[k] += coeff * (-(i as f64)) / denom;
                        next[k + 1] += coeff / denom;
                    }
                    poly = next;
                }
                poly
            })
            .collect();

        let period = 2 * p * bprime - 1;
        let max_exp = (p - 1) + p * (bprime - 1) + period * (d - 1);
        let mut full = vec![Array2::<C64>::zeros((2, 2)); max_exp + 1];
        for (l, f) in sketches.iter().enumerate() {
            for beta in 0..bprime {
                for k in 0..=f.part(beta).degree() {
                    for (q, &lam) in lagrange_coeffs[l].iter().enumerate() {
                        let e = k + p * beta + period * q;
                        full[e].scaled_add(c(lam), &f.part(beta).coeff(k));
                    }
                }
            }
        }
        let full_poly = MatrixPoly::new(full).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let theta = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let got = combined.substitute_and_eval(theta, p, bprime).unwrap();
            let want = full_poly.eval(theta);
            assert_close(&got, &want, 1e-10);
        }
    }

    /// The worked example's first sketch polynomial has bucket 0 equal to
    /// -A_hat_0 + A_hat_1 + A_hat_3 and bucket 1 equal to -A_hat_2.
    #[test]
    fn worked_example_first_sketch_structure() {
        let a = random_matrix(8, 8, 50);
        let b = random_matrix(8, 8, 51);
        let ab = partition(&a, 4, 4).unwrap();
        let bb = partition(&b, 4, 4).unwrap();
        let (ah, _) = layer_entangled(&ab, &bb).unwrap();
        let fam = crate::golden::golden_family();
        let sketches = sketch_rows(&ah, &fam.row_hashes()[..1], &fam.row_signs()[..1]).unwrap();
        let f1 = &sketches[0];
        let row = |i: usize, k: usize| {
            let c = ah.coeff(k);
            c.slice(s![i * 2..(i + 1) * 2, ..]).to_owned()
        };
        for k in 0..=3 {
            let want0 = -row(0, k) + row(1, k) + row(3, k);
            let want1 = -row(2, k);
            assert_close(&f1.part(0).coeff(k), &want0, 0.0);
            assert_close(&f1.part(1).coeff(k), &want1, 0.0);
        }
    }

    /// With every top bucket forced nonzero, the substituted polynomials hit
    /// their degree bounds exactly: deg F = (pb'-1) + (2pb'-1)(d-1) and
    /// deg F*G = (2pb'-1)(2d-1) - 1.
    #[test]
    fn degree_bookkeeping_with_forced_leading_terms() {
        use crate::hashing::{HashFn, SignFn};
        let p = 2;
        let bprime = 3;
        let d = 3;
        let m = 2;
        let a = random_matrix(4, 4, 40);
        let b = random_matrix(4, 4, 41);
        let ab = partition(&a, m, p).unwrap();
        let bb = partition(&b, p, 2).unwrap();
        let (ah, bh) = layer_entangled(&ab, &bb).unwrap();
        // row 1 goes to the top bucket in every sketch
        let tables = [vec![0u32, 2], vec![1, 2], vec![2, 2]];
        let hashes: Vec<HashFn> = tables
            .iter()
            .map(|t| HashFn::from_table(t.clone(), bprime).unwrap())
            .collect();
        let signs: Vec<SignFn> = (0..d)
            .map(|_| SignFn::from_table(&[1, 1]).unwrap())
            .collect();
        let f_sketches = sketch_rows(&ah, &hashes, &signs).unwrap();
        let g_sketches = sketch_cols(&bh, &hashes, &signs).unwrap();

        let period = 2 * p * bprime - 1;
        let expand = |sketches: &[SketchPoly]| -> usize {
            // top x-exponent of sum_l F_l(x, x^p) L_l(x^period), bucket-wise
            let lagrange_coeffs: Vec<Vec<f64>> = (1..=d)
                .map(|l| {
                    let mut poly = vec![1.0f64];
                    for i in 1..=d {
                        if i == l {
                            continue;
                        }
                        let denom = (l as f64) - (i as f64);
                        let mut next = vec![0.0; poly.len() + 1];
                        for (k, &c0) in poly.iter().enumerate() {
                            next[k] += c0 * (-(i as f64)) / denom;
                            next[k + 1] += c0 / denom;
                        }
                        poly = next;
                    }
                    poly
                })
                .collect();
            let mut top = 0usize;
            for (l, f) in sketches.iter().enumerate() {
                for beta in 0..bprime {
                    for k in 0..=f.part(beta).degree() {
                        if f.part(beta).coeff(k).iter().any(|v| v.norm() > 0.0) {
                            for (q, &lam) in lagrange_coeffs[l].iter().enumerate() {
                                if lam != 0.0 {
                                    top = top.max(k + p * beta + period * q);
                                }
                            }
                        }
                    }
                }
            }
            top
        };
        let deg_f = expand(&f_sketches);
        let deg_g = expand(&g_sketches);
        let bound = (p - 1) + p * (bprime - 1) + period * (d - 1);
        assert_eq!(deg_f, bound);
        assert_eq!(deg_g, bound);
        assert_eq!(deg_f + deg_g, period * (2 * d - 1) - 1);
    }

    #[test]
    fn mismatched_p_rejected() {
        let a = partition(&random_matrix(4, 4, 32), 2, 2).unwrap();
        let b = partition(&random_matrix(4, 4, 33), 4, 1).unwrap();
        assert!(layer_entangled(&a, &b).is_err());
    }
}
