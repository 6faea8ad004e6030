//! CodedSketch: straggler-resistant distributed computation of an unbiased
//! (epsilon, delta)-accurate approximation of `C = A * B`.
//!
//! The master compresses the rows of `A` and columns of `B` with count-sketches,
//! protects the inner dimension with an entangled polynomial layer, and ties the
//! independent sketches together with a Lagrange layer. Every worker receives one
//! evaluation of the resulting matrix polynomials, multiplies its two blocks, and
//! the master decodes from any `(2pb'-1)(2d-1)` of the `N` answers by polynomial
//! interpolation, exponent regrouping and signed-median recovery.
//!
//! Modules:
//! - [`hashing`], [`sketch`]: pairwise-independent families and plain count-sketch.
//! - [`block`], [`poly`], [`codec`]: block partitioning, matrix polynomials,
//!   evaluation grids, interpolation, and the entangled/sketch/Lagrange layers.
//! - [`engine`]: the end-to-end scheme (encode, worker compute, decode, recover)
//!   plus recovery-threshold arithmetic.
//! - [`sim`]: deterministic master-worker round simulation with delay models.
//! - [`config`], [`runner`], [`report`], [`matio`]: experiment configuration,
//!   execution, machine-readable reports and matrix file I/O.

pub mod block;
pub mod codec;
pub mod config;
pub mod engine;
pub mod error;
pub mod golden;
pub mod hashing;
pub mod matio;
pub mod poly;
pub mod report;
pub mod runner;
pub mod sim;
pub mod sketch;

pub use error::{Error, Result};

/// Complex scalar used on the evaluation side of the pipeline.
pub type C64 = num_complex::Complex64;
