//! Monte Carlo experiments: plans, replicate runs, rate fits and checks.

pub mod checks;
pub mod fit;
pub mod plan;
pub mod report;
pub mod run;
pub mod suites;

pub use checks::{
    bias_check, bias_from_report, normality_check, normality_stats, oracle_small_instance, select_kappa, BiasCheck,
    KappaSelection, NormalityStats, NormalityThresholds, OracleComparison,
};
pub use fit::{fit_log_log, fit_rate_exponent, LineFit, RateFit, RatePoint};
pub use plan::{BandwidthPolicy, DesignPoint, EstimatorChoice, ExperimentPlan};
pub use report::{CheckRecord, ExperimentReport, FitRecord, RuntimeInfo, Stat, SummaryRow};
pub use run::{replicate_seed, run_replicates, run_replicates_timed};
