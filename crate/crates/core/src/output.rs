//! CSV and JSON emission.
//!
//! Column sets are versioned by [`CSV_SCHEMA_VERSION`]; any change to a
//! header constant below must bump it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::model::HypothesisReport;
use crate::scenario::ScenarioFile;
use crate::solver::{ContractionParams, SolutionTrajectory, WindowRecord};
use crate::wellposed::{DependenceReport, OperatorConvergenceRow};

pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const DIAGNOSTICS_COLUMNS: [&str; 8] = [
    "t",
    "window",
    "l2",
    "h2",
    "iterations",
    "contraction_ratio",
    "gronwall_bound",
    "h2_ratio",
];

pub const DEPENDENCE_COLUMNS: [&str; 5] = [
    "epsilon",
    "input_distance",
    "output_distance",
    "time_derivative_distance",
    "ratio",
];

pub const OPERATOR_COLUMNS: [&str; 5] = ["epsilon", "measured", "bound", "squared_bound", "holds"];

pub const WINDOW_COLUMNS: [&str; 9] = [
    "index", "t0", "t1", "steps", "t_prime", "kappa", "mu", "iterations", "max_ratio",
];

/// Header of the trajectory file of `layer`.
pub fn trajectory_columns(layer: usize) -> [String; 3] {
    ["t".into(), "x".into(), format!("u_{layer}")]
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One `layer_<i>.csv` per layer, keeping every `every`-th time and always
/// the last one.
pub fn write_trajectory(dir: &Path, tr: &SolutionTrajectory, every: usize) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let every = every.max(1);
    let n = tr.raw(0).len();
    let last = tr.len() - 1;
    let mut paths = Vec::with_capacity(n);
    for i in 0..n {
        let path = dir.join(format!("layer_{i}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(trajectory_columns(i))?;
        for k in (0..tr.len()).filter(|k| k % every == 0 || *k == last) {
            let t = tr.times[k].to_string();
            for (j, u) in tr.raw(k)[i].iter().enumerate() {
                w.write_record([t.clone(), tr.grid().x(j).to_string(), u.to_string()])?;
            }
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn write_diagnostics(path: &Path, tr: &SolutionTrajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(DIAGNOSTICS_COLUMNS)?;
    for d in &tr.diagnostics {
        w.write_record([
            d.t.to_string(),
            d.window.to_string(),
            d.l2.to_string(),
            d.h2.to_string(),
            d.iterations.to_string(),
            d.contraction_ratio.to_string(),
            opt(d.gronwall_bound),
            opt(d.h2_ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_windows(path: &Path, windows: &[WindowRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(WINDOW_COLUMNS)?;
    for r in windows {
        let max_ratio = r.ratios.iter().copied().fold(0.0, f64::max);
        w.write_record([
            r.index.to_string(),
            r.t0.to_string(),
            r.t1.to_string(),
            r.steps.to_string(),
            r.params.t_prime.to_string(),
            r.params.kappa.to_string(),
            r.params.mu.to_string(),
            r.iterations.to_string(),
            max_ratio.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dependence(path: &Path, report: &DependenceReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(DEPENDENCE_COLUMNS)?;
    for r in &report.rows {
        w.write_record([
            r.epsilon.to_string(),
            r.input_distance.to_string(),
            r.output_distance.to_string(),
            r.time_derivative_distance.to_string(),
            r.ratio.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_operator_rows(path: &Path, rows: &[OperatorConvergenceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(OPERATOR_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.epsilon.to_string(),
            r.measured.to_string(),
            r.bound.to_string(),
            r.squared_bound.to_string(),
            r.holds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub csv_schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub method: Option<String>,
    pub forced: bool,
    pub scenario: &'a ScenarioFile,
    pub report: Option<&'a HypothesisReport>,
    pub window: Option<&'a ContractionParams>,
    pub files: Vec<String>,
    pub notes: Vec<String>,
}

impl<'a> Manifest<'a> {
    pub fn new(command: &str, scenario: &'a ScenarioFile) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            csv_schema_version: CSV_SCHEMA_VERSION,
            command: command.to_string(),
            seed: scenario.sampling.seed,
            threads: rayon::current_num_threads(),
            method: None,
            forced: false,
            scenario,
            report: None,
            window: None,
            files: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }
}
