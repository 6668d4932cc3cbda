use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::ProcessSpec;
use crate::smoother::{check_bandwidth, Boundary, KernelSpec, DEFAULT_GRID};
use crate::theory::{self, Assumption, RateInputs, Thresholds};

/// Bandwidth rule applied to each design point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum BandwidthPolicy {
    Fixed { h: f64 },
    /// `h_opt(m)` evaluated at every `(n, N)`.
    CorollaryOne { m: usize },
}

/// Which estimator path the replicates use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    /// Exact path when `n·N² ≤ 10⁶`, binned otherwise.
    #[default]
    Auto,
    Exact,
    Binned,
}

/// Largest `n·N²` routed to the exact path under [`EstimatorChoice::Auto`].
pub const AUTO_EXACT_LIMIT: usize = 1_000_000;

/// One `(n, N)` design point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignPoint {
    pub n: usize,
    pub n_obs: usize,
}

fn default_replicates() -> usize {
    100
}
fn default_grid() -> usize {
    DEFAULT_GRID
}
fn default_targets() -> Vec<usize> {
    vec![1]
}

/// Declarative Monte Carlo experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    #[serde(default)]
    pub spec: ProcessSpec,
    pub configs: Vec<DesignPoint>,
    pub bandwidth: BandwidthPolicy,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Eigen-indices recorded per replicate.
    #[serde(default = "default_targets")]
    pub targets: Vec<usize>,
    #[serde(default)]
    pub base_seed: u64,
    /// Worker threads; 0 uses the global pool.
    #[serde(default)]
    pub parallel: usize,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    #[serde(default)]
    pub estimator: EstimatorChoice,
    /// Index `m` of the event `‖Δ‖_HS ≤ η_m / 2`; defaults to the largest target.
    #[serde(default)]
    pub omega_m: Option<usize>,
    /// Also compute projections, Bessel checks and crude-bound ratios.
    #[serde(default)]
    pub diagnostics: bool,
    #[serde(default)]
    pub thresholds: Thresholds,
}

impl ExperimentPlan {
    pub fn new(spec: ProcessSpec, configs: Vec<DesignPoint>, bandwidth: BandwidthPolicy, replicates: usize) -> Self {
        Self {
            spec,
            configs,
            bandwidth,
            replicates,
            targets: default_targets(),
            base_seed: 0,
            parallel: 0,
            kernel: KernelSpec::default(),
            boundary: Boundary::default(),
            grid_size: DEFAULT_GRID,
            estimator: EstimatorChoice::Auto,
            omega_m: None,
            diagnostics: false,
            thresholds: Thresholds::default(),
        }
    }

    pub fn with_targets(mut self, targets: Vec<usize>) -> Self {
        self.targets = targets;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.replicates < 2 {
            return Err(invalid("replicates", "at least 2 replicates are required"));
        }
        if self.configs.is_empty() {
            return Err(invalid("configs", "at least one design point is required"));
        }
        if self.targets.is_empty() {
            return Err(invalid("targets", "at least one eigen-index is required"));
        }
        if let Some(&j) = self.targets.iter().find(|&&j| j == 0 || j > self.spec.truncation_j) {
            return Err(invalid(
                "targets",
                format!("index {j} outside 1..={}", self.spec.truncation_j),
            ));
        }
        if self.grid_size < 8 {
            return Err(invalid("grid_size", "need at least 8 grid points"));
        }
        for c in &self.configs {
            if c.n == 0 {
                return Err(invalid("configs", "n must be positive"));
            }
            if c.n_obs < 2 {
                return Err(crate::error::Error::DegenerateDesign);
            }
        }
        match self.bandwidth {
            BandwidthPolicy::Fixed { h } => check_bandwidth(h)?,
            BandwidthPolicy::CorollaryOne { m } => {
                if m == 0 {
                    return Err(invalid("bandwidth", "m must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Bandwidth used at a design point.
    pub fn bandwidth_for(&self, point: &DesignPoint) -> Result<f64> {
        match self.bandwidth {
            BandwidthPolicy::Fixed { h } => Ok(h),
            BandwidthPolicy::CorollaryOne { m } => theory::optimal_bandwidth(
                point.n,
                point.n_obs,
                m,
                self.spec.decay_a,
                self.spec.freq_c(),
            ),
        }
    }

    /// Estimator path for a design point.
    pub fn use_exact(&self, point: &DesignPoint) -> bool {
        match self.estimator {
            EstimatorChoice::Exact => true,
            EstimatorChoice::Binned => false,
            EstimatorChoice::Auto => point.n.saturating_mul(point.n_obs * point.n_obs) <= AUTO_EXACT_LIMIT,
        }
    }

    pub fn omega_index(&self) -> usize {
        self.omega_m
            .unwrap_or_else(|| self.targets.iter().copied().max().unwrap_or(1))
    }

    /// Rate inputs for a design point and index.
    pub fn rate_inputs(&self, point: &DesignPoint, j: usize) -> Result<RateInputs> {
        Ok(RateInputs {
            n: point.n,
            n_obs: point.n_obs,
            h: self.bandwidth_for(point)?,
            j,
            a: self.spec.decay_a,
            c: self.spec.freq_c(),
        })
    }

    /// Whether `(n, N, h, m)` violates the rate assumptions at this point.
    pub fn out_of_theory(&self, point: &DesignPoint) -> Result<bool> {
        let m = self.omega_index();
        let inputs = self.rate_inputs(point, m)?;
        Ok(!theory::validate_assumptions(&inputs, m, Assumption::M1, self.thresholds)?.pass())
    }
}
