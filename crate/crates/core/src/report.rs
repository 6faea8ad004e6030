//! Machine-readable run reports: JSON for tooling, CSV for sweep tables.
//!
//! Everything except `run_meta` is deterministic for a fixed config and root
//! seed; comparisons should ignore that one field.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Mode, ReportFormat};
use crate::engine::SchemeParams;
use crate::error::Result;
use crate::sim::SweepRow;

pub const SCHEMA_VERSION: u32 = 1;

/// The three threshold figures every report carries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// `(2pb'-1)(2d-1)`: what decoding actually waits for.
    pub operational: u64,
    /// `pmn + p - 1`: the exact entangled-code threshold, for comparison.
    pub exact_entangled: u64,
    /// The printed bound `(2p*ceil(3/eps^2)-1)(2*ceil(log 1/delta)-1) - 1`,
    /// when accuracy targets are configured. One below `operational` by
    /// construction; decoding never attempts the smaller count.
    pub accuracy_bound: Option<u64>,
    /// `min(accuracy_bound, exact_entangled)`.
    pub accuracy_bound_min: Option<u64>,
    /// Set when `(b', d)` were derived from `(epsilon, delta)`.
    pub derived_bprime: Option<usize>,
    pub derived_d: Option<usize>,
}

/// Per-trial outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub family_seed: u64,
    pub decode_ok: bool,
    /// `max_ij |C~ - C|` over `|C|_F`; absent when the trial failed to decode.
    pub max_rel_err: Option<f64>,
    /// Entries with `|C~ - C| >= epsilon * |C|_F`, when epsilon is set.
    pub exceeded_entries: Option<usize>,
    pub entries: usize,
    /// K-th order statistic of the simulated delays.
    pub kth_delay: Option<f64>,
    pub max_imag_residue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnbiasednessStats {
    pub entries_within_4se: usize,
    pub entries: usize,
    pub max_abs_z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials_succeeded: usize,
    /// Fraction of (trial, entry) pairs exceeding `epsilon * |C|_F`.
    pub exceedance_rate: Option<f64>,
    /// The worst per-entry exceedance rate across entries.
    pub max_entry_exceedance_rate: Option<f64>,
    /// Absent when no trial decoded.
    pub err_p50: Option<f64>,
    pub err_p90: Option<f64>,
    pub err_max: Option<f64>,
    pub unbiasedness: Option<UnbiasednessStats>,
    /// Sparse mode: fraction of trials with `max_rel_err <= 1e-9`.
    pub exact_recovery_rate: Option<f64>,
}

/// One named pass/fail check the run performed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Volatile run metadata, excluded from determinism comparisons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub timestamp_unix: u64,
    pub elapsed_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub mode: Mode,
    pub config: ExperimentConfig,
    pub params: SchemeParams,
    pub thresholds: Thresholds,
    pub trials: Vec<TrialRow>,
    pub sweep: Option<Vec<SweepRow>>,
    pub aggregate: Option<Aggregate>,
    pub assertions: Vec<Assertion>,
    pub passed: bool,
    pub run_meta: RunMeta,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// CSV view: the sweep table in sweep mode, the trial table otherwise.
    /// Floats print in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(sweep) = &self.sweep {
            out.push_str(
                "p,m,n,bprime,d,workers,threshold,trials,success_rate,err_p50,err_p90,err_max,kth_delay_p50\n",
            );
            for r in sweep {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.p,
                    r.m,
                    r.n,
                    r.bprime,
                    r.d,
                    r.workers,
                    r.threshold,
                    r.trials,
                    r.success_rate,
                    r.err_p50.map_or(String::new(), |v| v.to_string()),
                    r.err_p90.map_or(String::new(), |v| v.to_string()),
                    r.err_max.map_or(String::new(), |v| v.to_string()),
                    r.kth_delay_p50
                )
                .expect("string write");
            }
        } else {
            out.push_str(
                "trial,family_seed,decode_ok,max_rel_err,exceeded_entries,entries,kth_delay,max_imag_residue\n",
            );
            for t in &self.trials {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    t.trial,
                    t.family_seed,
                    t.decode_ok,
                    t.max_rel_err.map_or(String::new(), |v| v.to_string()),
                    t.exceeded_entries.map_or(String::new(), |v| v.to_string()),
                    t.entries,
                    t.kth_delay.map_or(String::new(), |v| v.to_string()),
                    t.max_imag_residue
                )
                .expect("string write");
            }
        }
        out
    }
}

/// Serialises the report to the requested format, into a file or stdout.
pub fn emit_report(report: &Report, format: ReportFormat, out: Option<&Path>) -> Result<()> {
    let body = match format {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Csv => report.to_csv(),
    };
    match out {
        Some(path) => std::fs::write(path, body.as_bytes())?,
        None => println!("{body}"),
    }
    Ok(())
}
