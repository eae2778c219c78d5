//! Report rows and the files written per run.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use gwve_core::EnvSpec;
use serde::Serialize;

use crate::config::{ExperimentConfig, Tolerances};

/// One comparison. `std_error` is the standard error of `empirical`; for distance
/// statistics (TV, KS, mutual information) it is the statistic's expected size when
/// sampling is exact.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub quantity: String,
    /// Abscissa of the comparison: a limit time t or a Laplace argument λ.
    pub at: Option<f64>,
    pub empirical: f64,
    pub std_error: f64,
    pub target: f64,
    /// None marks an informational row, which always passes.
    pub tolerance: Option<f64>,
    /// Formula or oracle the target comes from.
    pub provenance: String,
    /// Soft rows are flagged on failure but do not fail the report.
    pub soft: bool,
    pub pass: bool,
}

impl ReportRow {
    /// Hard check |empirical − target| ≤ tolerance.
    pub fn check(
        quantity: impl Into<String>,
        at: Option<f64>,
        (empirical, std_error): (f64, f64),
        target: f64,
        tolerance: f64,
        provenance: impl Into<String>,
    ) -> Self {
        ReportRow {
            quantity: quantity.into(),
            at,
            empirical,
            std_error,
            target,
            tolerance: Some(tolerance),
            provenance: provenance.into(),
            soft: false,
            pass: (empirical - target).abs() <= tolerance,
        }
    }

    pub fn soft(mut self) -> Self {
        self.soft = true;
        self
    }

    pub fn info(quantity: impl Into<String>, empirical: f64, target: f64, provenance: impl Into<String>) -> Self {
        ReportRow {
            quantity: quantity.into(),
            at: None,
            empirical,
            std_error: 0.0,
            target,
            tolerance: None,
            provenance: provenance.into(),
            soft: false,
            pass: true,
        }
    }
}

/// Everything that determines the results; output location and worker count are excluded.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Params {
    pub environment: EnvSpec,
    pub n: usize,
    pub k: usize,
    pub theta: f64,
    pub replicas: u64,
    pub seed: u64,
    pub t_grid: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub experiment: String,
    pub params: Params,
    pub rows: Vec<ReportRow>,
    pub pass: bool,
    /// Set when the run stopped early; rows then cover only what completed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl Report {
    pub fn new(config: &ExperimentConfig, rows: Vec<ReportRow>, failure: Option<String>) -> Self {
        let lambda_grid =
            (config.experiment == crate::ExperimentKind::BushLaplace).then(|| config.lambda_grid.clone());
        let params = Params {
            environment: config.environment.clone(),
            n: config.n,
            k: config.k,
            theta: config.theta,
            replicas: config.replicas,
            seed: config.seed,
            t_grid: config.t_grid.clone(),
            lambda_grid,
            tolerances: config.tolerances.clone(),
        };
        let pass = failure.is_none() && !rows.is_empty() && rows.iter().all(|r| r.soft || r.pass);
        Report { experiment: config.experiment.name().to_string(), params, rows, pass, failure }
    }

    /// Rows that failed and count against the report.
    pub fn failed_rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| !r.pass && !r.soft)
    }

    pub fn flagged_rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| !r.pass && r.soft)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

#[derive(Serialize)]
struct ResultLine<'a> {
    quantity: &'a str,
    at: Option<f64>,
    empirical: f64,
    std_error: f64,
}

#[derive(Serialize)]
struct TheoryLine<'a> {
    quantity: &'a str,
    at: Option<f64>,
    target: f64,
    provenance: &'a str,
}

/// A theory curve sampled on a dense grid, written to theory.csv after the row targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub quantity: String,
    pub provenance: String,
    pub points: Vec<(f64, f64)>,
}

pub(crate) fn write_results_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    if rows.is_empty() {
        w.write_record(["quantity", "at", "empirical", "std_error"])?;
    }
    for r in rows {
        w.serialize(ResultLine { quantity: &r.quantity, at: r.at, empirical: r.empirical, std_error: r.std_error })?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn write_theory_csv(path: &Path, rows: &[ReportRow], curves: &[Curve]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    if rows.is_empty() && curves.iter().all(|c| c.points.is_empty()) {
        w.write_record(["quantity", "at", "target", "provenance"])?;
    }
    for r in rows {
        w.serialize(TheoryLine { quantity: &r.quantity, at: r.at, target: r.target, provenance: &r.provenance })?;
    }
    for c in curves {
        for &(at, target) in &c.points {
            w.serialize(TheoryLine { quantity: &c.quantity, at: Some(at), target, provenance: &c.provenance })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn write_report(path: &Path, report: &Report) -> Result<()> {
    fs::write(path, report.to_json()?).with_context(|| format!("writing {}", path.display()))
}
