use std::path::Path;

use serde::{Deserialize, Serialize};

use super::plan::ExperimentPlan;
use crate::error::{Error, Result};
use crate::theory::Regime;

/// Mean and standard error of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl Stat {
    pub fn from_slice(xs: &[f64]) -> Option<Self> {
        let n = xs.len();
        if n < 2 {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Some(Self {
            mean,
            se: (var / n as f64).sqrt(),
            count: n,
        })
    }
}

/// Per-replicate quantities for one eigen-index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub j: usize,
    /// `‖φ̂_j − φ_j‖²` after sign alignment.
    pub l2_error: f64,
    /// `λ̂_j − λ_j`.
    pub eig_abs: f64,
    /// `(λ̂_j − λ_j) / λ_j`.
    pub eig_rel: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub crude_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bessel: Option<bool>,
}

/// One successful replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub config: usize,
    pub replicate: usize,
    pub seed: u64,
    pub hs_norm: f64,
    pub in_omega: bool,
    pub orthonormality_defect: f64,
    /// Count of materially negative eigenvalues of the estimate.
    pub negative_eigenvalues: usize,
    pub targets: Vec<TargetRecord>,
}

impl ReplicateRecord {
    pub fn target(&self, j: usize) -> Option<&TargetRecord> {
        self.targets.iter().find(|t| t.j == j)
    }
}

/// A replicate that raised an error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub config: usize,
    pub replicate: usize,
    pub message: String,
}

/// Aggregates over replicates for one `(config, j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub config: usize,
    pub n: usize,
    pub n_obs: usize,
    pub h: f64,
    pub j: usize,
    pub exact: bool,
    pub regime: Regime,
    pub out_of_theory: bool,
    /// Mean `‖φ̂_j − φ_j‖²` over all replicates.
    pub mse: Stat,
    /// Same, restricted to the event `‖Δ‖_HS ≤ η_m / 2`.
    pub mse_omega: Option<Stat>,
    pub omega_fraction: f64,
    pub eig_abs: Stat,
    pub eig_rel: Stat,
    pub crude_ratio: Option<Stat>,
    pub rate_bound: f64,
}

/// Fitted log-log slope attached to a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub name: String,
    pub slope: f64,
    pub ci: (f64, f64),
    pub points: usize,
}

/// Outcome of a named pass/fail check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub pass: bool,
    /// The design lies outside the rate assumptions.
    #[serde(default)]
    pub out_of_theory: bool,
    pub detail: String,
}

/// Invariants tracked across every replicate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantSummary {
    pub max_orthonormality_defect: f64,
    pub bessel_violations: usize,
    pub negative_eigenvalue_replicates: usize,
}

/// Deterministic output of a Monte Carlo run.
///
/// Wall-clock data lives in [`RuntimeInfo`] so that the serialized report
/// depends only on the plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub plan: ExperimentPlan,
    pub spec_hash: u64,
    pub rows: Vec<SummaryRow>,
    pub invariants: InvariantSummary,
    pub failures: Vec<FailureRecord>,
    #[serde(default)]
    pub fits: Vec<FitRecord>,
    #[serde(default)]
    pub checks: Vec<CheckRecord>,
    pub replicates: Vec<ReplicateRecord>,
}

/// Non-deterministic run metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeInfo {
    pub elapsed_seconds: f64,
    pub threads: usize,
    pub replicates_run: usize,
}

impl ExperimentReport {
    pub fn row(&self, config: usize, j: usize) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.config == config && r.j == j)
    }

    /// Replicates of one design point, in replicate order.
    pub fn replicates_of(&self, config: usize) -> impl Iterator<Item = &ReplicateRecord> {
        self.replicates.iter().filter(move |r| r.config == config)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let text = self.to_json().map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}
