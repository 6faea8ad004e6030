//! Count-sketch compression and median recovery for plain vectors.
//!
//! A vector `a` of length `n` is folded into a `d x b'` table: row `t` adds
//! `s_t(i) * a_i` into bucket `h_t(i)`. An entry is recovered as the median
//! over rows of the signed bucket it hashed to. The estimate is unbiased with
//! per-row variance at most `|a|_2^2 / b'`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::{HashFn, SignFn};

/// A `d x b'` count-sketch table together with the family that built it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CountSketchTable {
    values: Vec<Vec<f64>>,
    hashes: Vec<HashFn>,
    signs: Vec<SignFn>,
}

impl CountSketchTable {
    /// Number of rows `d`.
    pub fn depth(&self) -> usize {
        self.values.len()
    }

    /// Bucket count `b'`.
    pub fn width(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t]
    }

    /// Elementwise sum of two tables built from the same family.
    pub fn add(&self, other: &CountSketchTable) -> Result<CountSketchTable> {
        if self.hashes != other.hashes || self.depth() != other.depth() || self.width() != other.width() {
            return Err(Error::Parameter(
                "tables must share the same family and shape to be added".into(),
            ));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(r1, r2)| r1.iter().zip(r2).map(|(a, b)| a + b).collect())
            .collect();
        Ok(CountSketchTable {
            values,
            hashes: self.hashes.clone(),
            signs: self.signs.clone(),
        })
    }
}

/// Builds the count-sketch of `a` under the given hash/sign family.
pub fn count_sketch(a: &[f64], hashes: &[HashFn], signs: &[SignFn]) -> Result<CountSketchTable> {
    if hashes.len() != signs.len() || hashes.is_empty() {
        return Err(Error::Parameter(format!(
            "need equally many hashes and signs (>= 1), got {} and {}",
            hashes.len(),
            signs.len()
        )));
    }
    let n = a.len();
    for (t, (h, s)) in hashes.iter().zip(signs).enumerate() {
        if h.domain() != n || s.domain() != n {
            return Err(Error::Parameter(format!(
                "family row {t} has domain {} / {} but the vector has length {n}",
                h.domain(),
                s.domain()
            )));
        }
    }
    let width = hashes[0].range();
    if hashes.iter().any(|h| h.range() != width) {
        return Err(Error::Parameter("all hashes must share one range".into()));
    }
    let mut values = vec![vec![0.0; width]; hashes.len()];
    for (t, (h, s)) in hashes.iter().zip(signs).enumerate() {
        let row = &mut values[t];
        for (i, &ai) in a.iter().enumerate() {
            row[h.eval(i)] += s.eval(i) * ai;
        }
    }
    Ok(CountSketchTable {
        values,
        hashes: hashes.to_vec(),
        signs: signs.to_vec(),
    })
}

/// Median convention used throughout: for even counts, the mean of the two
/// middle order statistics. The worked examples in the literature use odd `d`,
/// which is also what configurations should prefer.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).expect("median input must not contain NaN"));
    let d = values.len();
    if d % 2 == 1 {
        values[d / 2]
    } else {
        0.5 * (values[d / 2 - 1] + values[d / 2])
    }
}

/// Recovers entry `j`: the median over rows of `s_t(j) * C[t, h_t(j)]`.
pub fn recover(table: &CountSketchTable, j: usize) -> Result<f64> {
    let n = table.hashes[0].domain();
    if j >= n {
        return Err(Error::Parameter(format!(
            "index {j} outside the sketched domain [0, {n})"
        )));
    }
    let mut estimates: Vec<f64> = table
        .hashes
        .iter()
        .zip(&table.signs)
        .zip(&table.values)
        .map(|((h, s), row)| s.eval(j) * row[h.eval(j)])
        .collect();
    Ok(median(&mut estimates))
}

/// Recovers every entry of the sketched vector.
pub fn recover_all(table: &CountSketchTable) -> Vec<f64> {
    let n = table.hashes[0].domain();
    (0..n).map(|j| recover(table, j).expect("index in range")).collect()
}

/// l2-norm of `a` after removing its `k` largest-magnitude entries
/// (ties broken towards the lower index).
pub fn tail_norm(a: &[f64], k: usize) -> Result<f64> {
    if k > a.len() {
        return Err(Error::Parameter(format!(
            "k={k} exceeds the vector length {}",
            a.len()
        )));
    }
    let mut order: Vec<usize> = (0..a.len()).collect();
    // sort by magnitude descending; ties resolved by lower index first
    order.sort_by(|&i, &j| {
        a[j].abs()
            .partial_cmp(&a[i].abs())
            .expect("tail_norm input must not contain NaN")
            .then(i.cmp(&j))
    });
    let sum_sq: f64 = order[k..].iter().map(|&i| a[i] * a[i]).sum();
    Ok(sum_sq.sqrt())
}
