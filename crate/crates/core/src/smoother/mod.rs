//! Kernels, the smoothing operator and the pooled covariance estimators.

mod estimator;
mod grid;
mod kernel;
mod operator;

use serde::{Deserialize, Serialize};

pub use estimator::{
    estimate_covariance, estimate_covariance_binned, estimate_covariance_exact,
    expected_estimate_oracle, CovarianceEstimate, Method, Smoothing,
};
pub use grid::{Grid, DEFAULT_GRID};
pub use kernel::{KernelFamily, KernelSpec};
pub use operator::{apply_th, SmoothingOperator};
pub(crate) use operator::check_bandwidth;

/// How kernel windows behave near the ends of `[0, 1]`.
///
/// `Periodic` measures distances on the circle, so no kernel mass is lost at
/// the edges; `Truncated` evaluates the raw kernel and lets mass outside
/// `[0, 1]` drop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Periodic,
    Truncated,
}

impl Boundary {
    /// Signed distance `x − y` under this boundary convention.
    #[inline]
    pub fn distance(self, x: f64, y: f64) -> f64 {
        let d = x - y;
        match self {
            Boundary::Truncated => d,
            Boundary::Periodic => d - d.round(),
        }
    }
}
