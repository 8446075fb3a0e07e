//! CSV and manifest output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{ExperimentConfig, ExperimentResult, TrialFailure};
use crate::error::{Error, Result};

pub const TRAINING_CURVE_HEADER: &str = "epoch,field,mean_acc,std_acc";
pub const SPARSITY_SWEEP_HEADER: &str = "sparsity_fraction,field,mean_acc,std_acc,n_trials";
pub const TRIALS_HEADER: &str =
    "seed,round,kept,total,sparsity_fraction,real_relative_sparsity,accuracy,epochs,stopped_early";

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    parallel: bool,
    config: &'a ExperimentConfig,
    seeds: Vec<u64>,
    completed_trials: usize,
    failures: &'a [TrialFailure],
    parameters: usize,
    prunable_weights: usize,
    real_reference_prunable_weights: usize,
    wall_time_s: f64,
    files: [&'static str; 3],
}

pub fn training_curve_csv(r: &ExperimentResult) -> String {
    let mut s = format!("{TRAINING_CURVE_HEADER}\n");
    for p in &r.aggregate.curve {
        let _ = writeln!(s, "{},{},{:.6},{:.6}", p.epoch, r.aggregate.field, p.mean, p.std);
    }
    s
}

pub fn sparsity_sweep_csv(r: &ExperimentResult) -> String {
    let mut s = format!("{SPARSITY_SWEEP_HEADER}\n");
    for p in &r.aggregate.sweep {
        let _ = writeln!(
            s,
            "{:.6},{},{:.6},{:.6},{}",
            p.sparsity,
            r.aggregate.field,
            p.mean,
            p.std,
            p.values.len()
        );
    }
    s
}

fn trials_csv(r: &ExperimentResult) -> String {
    let mut s = format!("{TRIALS_HEADER}\n");
    for t in &r.trials {
        for (i, round) in t.rounds.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6},{:.6},{:.6},{},{}",
                t.seed,
                round.round,
                round.kept,
                round.total,
                round.sparsity(),
                round.kept as f64 / r.real_prunable.max(1) as f64,
                round.accuracy,
                t.epochs_per_round.get(i).copied().unwrap_or(0),
                t.stopped_early.get(i).copied().unwrap_or(false),
            );
        }
    }
    s
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, contents).map_err(|e| Error::io(p, e))
}

/// Writes `training_curve.csv`, `sparsity_sweep.csv`, `trials.csv` and
/// `manifest.json` into `dir`, creating it if needed.
pub fn emit_results(r: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(dir, "training_curve.csv", &training_curve_csv(r))?;
    write(dir, "sparsity_sweep.csv", &sparsity_sweep_csv(r))?;
    write(dir, "trials.csv", &trials_csv(r))?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        parallel: crate::par::is_parallel(),
        config: &r.config,
        seeds: (0..r.config.trials as u64).map(|i| r.config.seed + i).collect(),
        completed_trials: r.trials.len(),
        failures: &r.failures,
        parameters: r.parameters,
        prunable_weights: r.prunable,
        real_reference_prunable_weights: r.real_prunable,
        wall_time_s: r.wall_time_s,
        files: ["training_curve.csv", "sparsity_sweep.csv", "trials.csv"],
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::State(e.to_string()))?;
    write(dir, "manifest.json", &(json + "\n"))
}

fn rows<'a>(text: &'a str, header: &str, cols: usize) -> Result<Vec<Vec<&'a str>>> {
    let here = Path::new("<csv>");
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(Error::format(here, 0, format!("expected header `{header}`")));
    }
    let mut offset = header.len() + 1;
    let mut out = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols {
            return Err(Error::format(here, offset as u64, format!("expected {cols} fields, got {}", f.len())));
        }
        offset += line.len() + 1;
        out.push(f);
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format(Path::new("<csv>"), 0, format!("bad number `{s}`")))
}

/// `(epoch, field, mean_acc, std_acc)` rows.
pub fn parse_training_curve(text: &str) -> Result<Vec<(usize, String, f64, f64)>> {
    rows(text, TRAINING_CURVE_HEADER, 4)?
        .into_iter()
        .map(|f| Ok((num(f[0])?, f[1].to_string(), num(f[2])?, num(f[3])?)))
        .collect()
}

/// `(sparsity_fraction, field, mean_acc, std_acc, n_trials)` rows.
pub type SweepRow = (f64, String, f64, f64, usize);

pub fn parse_sparsity_sweep(text: &str) -> Result<Vec<SweepRow>> {
    rows(text, SPARSITY_SWEEP_HEADER, 5)?
        .into_iter()
        .map(|f| Ok((num(f[0])?, f[1].to_string(), num(f[2])?, num(f[3])?, num(f[4])?)))
        .collect()
}
