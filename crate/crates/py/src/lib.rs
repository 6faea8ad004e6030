//! Python bindings: scheme parameters, threshold arithmetic, the end-to-end
//! approximate-multiplication pipeline and a simulated straggler round.
//!
//! Matrices cross the boundary as lists of equal-length rows.

use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use codedsketch::engine;
use codedsketch::error::Error;
use codedsketch::hashing::{make_hash_family, make_sign_family};
use codedsketch::poly::EvaluationGrid;
use codedsketch::sim::{run_round, DelayModel};
use codedsketch::sketch;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Parameter(_) | Error::Partition(_) | Error::Config(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix_from_rows(rows: Vec<Vec<f64>>, name: &str) -> PyResult<Array2<f64>> {
    if rows.is_empty() {
        return Err(PyValueError::new_err(format!("{name}: empty matrix")));
    }
    let width = rows[0].len();
    if width == 0 || rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err(format!(
            "{name}: rows must be nonempty and equally long"
        )));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((flat.len() / width, width), flat)
        .map_err(|e| PyValueError::new_err(format!("{name}: {e}")))
}

fn matrix_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Scheme parameters: block grid (p, m, n), sketch shape (b', d), workers N.
#[pyclass(name = "SchemeParams", skip_from_py_object)]
#[derive(Clone)]
struct PySchemeParams {
    inner: engine::SchemeParams,
}

#[pymethods]
impl PySchemeParams {
    /// `workers = 0` means exactly the recovery threshold.
    #[new]
    #[pyo3(signature = (p, m, n, bprime, d, workers = 0))]
    fn new(p: usize, m: usize, n: usize, bprime: usize, d: usize, workers: usize) -> PyResult<Self> {
        Ok(PySchemeParams {
            inner: engine::SchemeParams::new(p, m, n, bprime, d, workers).map_err(to_py_err)?,
        })
    }

    /// Derives `(b', d) = (ceil(3/epsilon^2), ceil(log(1/delta)))`.
    #[staticmethod]
    #[pyo3(signature = (p, m, n, epsilon, delta, log_base = 2.0, workers = 0))]
    fn from_accuracy(
        p: usize,
        m: usize,
        n: usize,
        epsilon: f64,
        delta: f64,
        log_base: f64,
        workers: usize,
    ) -> PyResult<Self> {
        Ok(PySchemeParams {
            inner: engine::SchemeParams::from_accuracy(p, m, n, epsilon, delta, log_base, workers)
                .map_err(to_py_err)?,
        })
    }

    /// The number of worker results decoding waits for.
    fn threshold(&self) -> usize {
        self.inner.threshold()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn bprime(&self) -> usize {
        self.inner.bprime
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn workers(&self) -> usize {
        self.inner.workers
    }

    fn __repr__(&self) -> String {
        format!(
            "SchemeParams(p={}, m={}, n={}, bprime={}, d={}, workers={})",
            self.inner.p, self.inner.m, self.inner.n, self.inner.bprime, self.inner.d,
            self.inner.workers
        )
    }
}

/// Operational recovery threshold `(2pb'-1)(2d-1)`.
#[pyfunction]
fn threshold_cs(p: usize, bprime: usize, d: usize) -> usize {
    engine::threshold_cs(p, bprime, d)
}

/// Exact entangled-code threshold `pmn + p - 1`, for comparison.
#[pyfunction]
fn threshold_exact(p: usize, m: usize, n: usize) -> u64 {
    engine::threshold_exact(p, m, n)
}

/// The printed first-term bound for accuracy targets `(epsilon, delta)`.
#[pyfunction]
#[pyo3(signature = (epsilon, delta, p, log_base = 2.0))]
fn accuracy_bound(epsilon: f64, delta: f64, p: usize, log_base: f64) -> PyResult<u64> {
    engine::sketch_threshold_bound(epsilon, delta, p, log_base).map_err(to_py_err)
}

/// `(ceil(3/epsilon^2), ceil(log(1/delta)))`.
#[pyfunction]
#[pyo3(signature = (epsilon, delta, log_base = 2.0))]
fn derive_sketch_dims(epsilon: f64, delta: f64, log_base: f64) -> PyResult<(usize, usize)> {
    engine::derive_sketch_dims(epsilon, delta, log_base).map_err(to_py_err)
}

/// Full pipeline under a fresh seed-derived hash family: encode, run all `N`
/// workers, decode from the first threshold results, median-recover.
#[pyfunction]
fn approximate_multiply(
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    params: &PySchemeParams,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let a = matrix_from_rows(a, "a")?;
    let b = matrix_from_rows(b, "b")?;
    let report = engine::approximate_multiply(&a, &b, &params.inner, seed).map_err(to_py_err)?;
    Ok(matrix_to_rows(&report.c_tilde))
}

/// One simulated round where the listed workers are dropped; the fastest
/// threshold-many of the rest are decoded. Returns `(estimate, wall_clock)`.
#[pyfunction]
#[pyo3(signature = (a, b, params, seed, drop = vec![]))]
fn simulate_round(
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    params: &PySchemeParams,
    seed: u64,
    drop: Vec<usize>,
) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let a = matrix_from_rows(a, "a")?;
    let b = matrix_from_rows(b, "b")?;
    let p = &params.inner;
    let family =
        engine::SketchFamily::from_seed(seed, p.m, p.n, p.bprime, p.d).map_err(to_py_err)?;
    let grid = EvaluationGrid::roots_of_unity(p.workers).map_err(to_py_err)?;
    let shares = engine::encode(&a, &b, p, &family, &grid).map_err(to_py_err)?;
    let model = DelayModel::adversarial(drop, f64::INFINITY, seed);
    let outcome = run_round(&shares, &model, p.threshold()).map_err(to_py_err)?;
    let sketches = engine::decode(&outcome.delivered, p, &family).map_err(to_py_err)?;
    let report = engine::median_recover(&sketches, p).map_err(to_py_err)?;
    Ok((matrix_to_rows(&report.c_tilde), outcome.wall_clock))
}

/// Count-sketches a vector with `d` hash pairs of width `bprime` and
/// recovers every entry by signed-bucket median.
#[pyfunction]
fn sketch_and_recover(a: Vec<f64>, d: usize, bprime: usize, seed: u64) -> PyResult<Vec<f64>> {
    let n = a.len();
    let seeds = codedsketch::hashing::derive_seeds(seed, 2);
    let hashes = make_hash_family(seeds[0], d, n, bprime).map_err(to_py_err)?;
    let signs = make_sign_family(seeds[1], d, n).map_err(to_py_err)?;
    let table = sketch::count_sketch(&a, &hashes, &signs).map_err(to_py_err)?;
    Ok(sketch::recover_all(&table))
}

/// l2-norm of the vector with its `k` largest-magnitude entries removed.
#[pyfunction]
fn tail_norm(a: Vec<f64>, k: usize) -> PyResult<f64> {
    sketch::tail_norm(&a, k).map_err(to_py_err)
}

#[pymodule]
fn codedsketch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchemeParams>()?;
    m.add_function(wrap_pyfunction!(threshold_cs, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_exact, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy_bound, m)?)?;
    m.add_function(wrap_pyfunction!(derive_sketch_dims, m)?)?;
    m.add_function(wrap_pyfunction!(approximate_multiply, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_round, m)?)?;
    m.add_function(wrap_pyfunction!(sketch_and_recover, m)?)?;
    m.add_function(wrap_pyfunction!(tail_norm, m)?)?;
    Ok(())
}
