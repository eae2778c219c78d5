//! Experiment configuration as read from JSON.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use gwve_core::{EnvSpec, Environment};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Z_n/a_n under survival conditioning against Exp(1).
    Yaglom,
    /// Q(ψ₁ ≥ S_n(t)) under θ_n = θ/a_n against its limit.
    Psi1Tail,
    /// Tail of a uniformly permuted sample split time B̃ against the mixture integral.
    CoalescentTimes,
    /// First-split sizes and next-block-to-split frequencies of a uniform k-sample.
    Topology,
    /// Exact identities and sampler-to-oracle distances on a small instance.
    OracleVerify,
    /// Q[e^{−(λ−θ) Z_n / a_n}] against the ratio of discounted factorial moments.
    BushLaplace,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Yaglom => "yaglom",
            ExperimentKind::Psi1Tail => "psi1-tail",
            ExperimentKind::CoalescentTimes => "coalescent-times",
            ExperimentKind::Topology => "topology",
            ExperimentKind::OracleVerify => "oracle-verify",
            ExperimentKind::BushLaplace => "bush-laplace",
        }
    }
}

/// Pass thresholds. Finite-n error bars are not available from theory, so these are
/// configuration; the defaults are the acceptance values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Total variation between sampled and exact outcome laws.
    pub tv: f64,
    /// Kolmogorov–Smirnov distance, also used for single CDF points.
    pub ks: f64,
    pub psi1_tail: f64,
    pub joint_tail: f64,
    pub first_split: f64,
    pub next_block: f64,
    pub laplace: f64,
    /// Absolute slack for identities that hold exactly up to rounding.
    pub identity: f64,
    /// Soft threshold (nats); exceeding it flags the row without failing the run.
    pub mutual_information: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tv: 0.01,
            ks: 0.02,
            psi1_tail: 0.02,
            joint_tail: 0.03,
            first_split: 0.02,
            next_block: 0.03,
            laplace: 0.02,
            identity: 1e-10,
            mutual_information: 0.01,
        }
    }
}

/// One experiment. `theta` and `lambda_grid` are on the a_n scale (the measure uses
/// θ/a_n) for psi1-tail and bush-laplace, and raw discounts for oracle-verify.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub environment: EnvSpec,
    pub n: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub theta: f64,
    pub replicas: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Worker threads; 0 lets the pool pick. Never affects results.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_k() -> usize {
    2
}

fn default_t_grid() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}

fn default_lambda_grid() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 4.0]
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text).context("parsing experiment config")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn environment(&self) -> Result<Environment> {
        Environment::new(self.environment.clone()).context("building environment")
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.replicas >= 1, "replicas must be at least 1");
        ensure!(self.n >= 1, "n must be at least 1");
        ensure!(self.theta.is_finite() && self.theta >= 0.0, "theta must be finite and non-negative, got {}", self.theta);
        for &t in &self.t_grid {
            ensure!(t > 0.0 && t < 1.0, "t-grid value {t} outside (0,1)");
        }
        let mut sorted = self.t_grid.clone();
        sorted.sort_by(f64::total_cmp);
        ensure!(sorted.windows(2).all(|w| w[0] < w[1]), "t-grid values must be distinct");
        let min_k = match self.experiment {
            ExperimentKind::Yaglom => 0,
            ExperimentKind::OracleVerify | ExperimentKind::BushLaplace => 1,
            ExperimentKind::Psi1Tail | ExperimentKind::CoalescentTimes | ExperimentKind::Topology => 2,
        };
        ensure!(self.k >= min_k, "{} needs k ≥ {min_k}, got {}", self.experiment.name(), self.k);
        if matches!(
            self.experiment,
            ExperimentKind::Yaglom | ExperimentKind::Psi1Tail | ExperimentKind::CoalescentTimes
        ) {
            ensure!(!self.t_grid.is_empty(), "{} needs a non-empty t-grid", self.experiment.name());
        }
        if self.experiment == ExperimentKind::BushLaplace {
            ensure!(!self.lambda_grid.is_empty(), "bush-laplace needs a non-empty lambda grid");
            for &l in &self.lambda_grid {
                ensure!(l.is_finite() && l >= self.theta, "lambda {l} must be finite and at least theta");
            }
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tv", t.tv),
            ("ks", t.ks),
            ("psi1_tail", t.psi1_tail),
            ("joint_tail", t.joint_tail),
            ("first_split", t.first_split),
            ("next_block", t.next_block),
            ("laplace", t.laplace),
            ("identity", t.identity),
            ("mutual_information", t.mutual_information),
        ] {
            ensure!(v.is_finite() && v > 0.0, "tolerance {name} must be positive, got {v}");
        }
        Ok(())
    }
}
