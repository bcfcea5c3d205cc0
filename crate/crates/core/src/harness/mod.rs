//! Experiment plumbing: multi-seed runs, parameter sweeps, probes, and the
//! fixed two-batch privacy example. All tabular output goes through the CSV
//! writers here so that repeated invocations produce identical bytes.

mod dp_demo;
mod probes;
mod sweep;

pub use dp_demo::{dp_demo, DpCase, DpDemoReport};
pub use probes::{lower_bound_probe, lower_bound_threshold};
pub use sweep::{run_sweep, SweepAlgorithm, SweepAxis, SweepRow, SweepSpec, SweepTable};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{RunConfig, RunResult};

/// Formats a float with 17 significant digits so it parses back exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Runs `f` for seeds `cfg.seed .. cfg.seed + seeds` in parallel and returns
/// the outcomes in seed order.
pub fn run_seeds<F>(cfg: &RunConfig, seeds: usize, f: F) -> Vec<Result<RunResult>>
where
    F: Fn(&RunConfig) -> Result<RunResult> + Sync,
{
    (0..seeds as u64)
        .into_par_iter()
        .map(|i| f(&cfg.clone().with_seed(cfg.seed.wrapping_add(i))))
        .collect()
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

/// Columns: seed, T, m, d, sq_error, max_encoding_error, compliance_ok.
pub fn mean_csv(cfg: &RunConfig, results: &[RunResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seed", "T", "m", "d", "sq_error", "max_encoding_error", "compliance_ok"])
        .map_err(csv_err)?;
    for r in results {
        w.write_record([
            r.seed.to_string(),
            cfg.t.to_string(),
            cfg.m.to_string(),
            cfg.d.to_string(),
            fmt_f64(r.squared_error),
            fmt_f64(r.max_encoding_error()),
            r.compliance_ok.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish_csv(w)
}

/// Columns: seed, T, m, d, k, param_sq_error, worst_case_pred_error,
/// singular_groups, compliance_ok. Over the unit ball the worst squared
/// prediction error equals the squared parameter error.
pub fn regression_csv(cfg: &RunConfig, results: &[RunResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "seed",
        "T",
        "m",
        "d",
        "k",
        "param_sq_error",
        "worst_case_pred_error",
        "singular_groups",
        "compliance_ok",
    ])
    .map_err(csv_err)?;
    for r in results {
        w.write_record([
            r.seed.to_string(),
            cfg.t.to_string(),
            cfg.m.to_string(),
            cfg.d.to_string(),
            cfg.k().to_string(),
            fmt_f64(r.squared_error),
            fmt_f64(r.squared_error),
            r.singular_groups.to_string(),
            r.compliance_ok.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish_csv(w)
}

/// Columns: t, mean_L, bound.
pub fn sgd_csv(mean: &[f64], bound: impl Fn(u64) -> f64) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "mean_L", "bound"]).map_err(csv_err)?;
    for (i, l) in mean.iter().enumerate() {
        let t = i as u64 + 1;
        w.write_record([t.to_string(), fmt_f64(*l), fmt_f64(bound(t))])
            .map_err(csv_err)?;
    }
    finish_csv(w)
}

/// Generic two-column-plus table writer used by the probes.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    finish_csv(w)
}
