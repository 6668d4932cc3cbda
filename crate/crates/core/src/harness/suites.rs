//! Named verification suites shared by the `verify` command and the
//! acceptance tests. Defaults reproduce the full-size acceptance settings.

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::checks::{self, BiasCheck, NormalityStats, NormalityThresholds};
use super::fit::{fit_log_log, fit_rate_exponent, RatePoint};
use super::plan::{BandwidthPolicy, DesignPoint, EstimatorChoice, ExperimentPlan};
use super::report::{CheckRecord, ExperimentReport, FitRecord};
use super::run::run_replicates;
use crate::error::Result;
use crate::model::{simulate, ProcessSpec, SamplingDesign};
use crate::smoother::{
    estimate_covariance_binned, estimate_covariance_exact, expected_estimate_oracle, Boundary, CovarianceEstimate,
    Grid, KernelSpec, Smoothing, SmoothingOperator,
};
use crate::spectral::{self, align_signs, eigendecompose};

/// Result of one suite.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub checks: Vec<CheckRecord>,
    pub fits: Vec<FitRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bias: Vec<BiasCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<u8>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub normality: Vec<(String, NormalityStats)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reports: Vec<ExperimentReport>,
}

impl SuiteOutcome {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            ..Self::default()
        }
    }

    fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.check_flagged(name, pass, false, detail);
    }

    fn check_flagged(&mut self, name: impl Into<String>, pass: bool, flagged: bool, detail: impl Into<String>) {
        let rec = CheckRecord {
            name: name.into(),
            pass,
            out_of_theory: flagged,
            detail: detail.into(),
        };
        info!("{} {}: {}", if rec.pass { "PASS" } else { "FAIL" }, rec.name, rec.detail);
        self.checks.push(rec);
    }

    /// Every check passed.
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Every check passed, ignoring failures on out-of-theory designs.
    pub fn pass_ignoring_flagged(&self) -> bool {
        self.checks.iter().all(|c| c.pass || c.out_of_theory)
    }

    /// One line per check.
    pub fn summary(&self) -> String {
        self.checks
            .iter()
            .map(|c| format!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Shared execution settings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteContext {
    /// Worker threads for Monte Carlo suites; 0 uses the global pool.
    pub parallel: usize,
    /// Constant chosen by an earlier eigenvalue-bias suite.
    pub kappa: Option<u8>,
}

// ---------------------------------------------------------------------------

/// Exact path against a brute-force oracle on tiny instances, and the binned
/// path against the exact path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSuite {
    pub tiny_instances: usize,
    pub tiny_tol: f64,
    pub binned_n: usize,
    pub binned_n_obs: usize,
    pub binned_grid: usize,
    pub binned_h: f64,
    pub binned_tol: f64,
    pub seed: u64,
}

impl Default for EstimatorSuite {
    fn default() -> Self {
        Self {
            tiny_instances: 60,
            tiny_tol: 1e-12,
            binned_n: 200,
            binned_n_obs: 10,
            binned_grid: 256,
            binned_h: 0.1,
            binned_tol: 1e-2,
            seed: 101,
        }
    }
}

impl EstimatorSuite {
    pub fn run(&self) -> Result<SuiteOutcome> {
        let mut out = SuiteOutcome::new("estimator");
        let spec = ProcessSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let kernels = [KernelSpec::EPANECHNIKOV, KernelSpec::UNIFORM, KernelSpec::QUARTIC];
        let mut worst = 0.0f64;
        for i in 0..self.tiny_instances {
            let n = rng.random_range(1..=3);
            let n_obs = rng.random_range(2..=4);
            let g = rng.random_range(2..=8);
            let h = rng.random_range(0.05..0.45);
            let boundary = if i % 2 == 0 { Boundary::Periodic } else { Boundary::Truncated };
            let sm = Smoothing::new(kernels[i % 3], h).with_boundary(boundary);
            let (data, _) = simulate(&spec, &SamplingDesign::new(n, n_obs, rng.random()))?;
            let grid = Grid::new(g)?;
            let oracle = checks::brute_force_estimate(&data, &sm, &grid)?;
            let exact = estimate_covariance_exact(&data, &sm, &grid)?;
            for a in 0..g {
                for b in 0..g {
                    worst = worst.max((exact.matrix[(a, b)] - oracle[a * g + b]).abs());
                }
            }
        }
        out.check(
            "exact_vs_oracle",
            worst <= self.tiny_tol,
            format!("max |Δ| = {worst:.3e} over {} instances (tol {:.0e})", self.tiny_instances, self.tiny_tol),
        );
        let (data, _) = simulate(&spec, &SamplingDesign::new(self.binned_n, self.binned_n_obs, self.seed))?;
        let grid = Grid::new(self.binned_grid)?;
        let sm = Smoothing::new(KernelSpec::default(), self.binned_h);
        let exact = estimate_covariance_exact(&data, &sm, &grid)?;
        let binned = estimate_covariance_binned(&data, &sm, &grid)?;
        let rel = binned.relative_frobenius(&exact);
        out.check(
            "binned_vs_exact",
            rel <= self.binned_tol,
            format!("relative Frobenius {rel:.3e} (tol {:.0e})", self.binned_tol),
        );
        Ok(out)
    }
}

// ---------------------------------------------------------------------------

/// Slopes of `log‖T_hφ_j − φ_j‖²` in `log h` and in `log j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingLawSuite {
    pub bandwidths: Vec<f64>,
    pub max_j: usize,
    pub h_slope: f64,
    pub h_tol: f64,
    pub j_values: Vec<usize>,
    pub j_bandwidth: f64,
    pub j_slope: f64,
    pub j_tol: f64,
    pub grid: usize,
}

impl Default for SmoothingLawSuite {
    fn default() -> Self {
        Self {
            bandwidths: vec![0.1, 0.05, 0.025, 0.0125],
            max_j: 8,
            h_slope: 4.0,
            h_tol: 0.1,
            j_values: vec![2, 4, 8, 16, 32],
            j_bandwidth: 0.0125,
            j_slope: 4.0,
            j_tol: 0.3,
            grid: 4097,
        }
    }
}

fn smoothing_residual(op: &SmoothingOperator, grid: &Grid, j: usize) -> f64 {
    let phi = grid.sample(|t| crate::model::fourier(j, t));
    grid.dist2(&op.apply(&phi), &phi)
}

impl SmoothingLawSuite {
    pub fn run(&self) -> Result<SuiteOutcome> {
        let mut out = SuiteOutcome::new("smoothing_law");
        let grid = Grid::new(self.grid)?;
        let kernel = KernelSpec::default();
        let ops = self
            .bandwidths
            .iter()
            .map(|&h| SmoothingOperator::new(kernel, h, &grid, Boundary::Periodic))
            .collect::<Result<Vec<_>>>()?;
        for j in 1..=self.max_j {
            let ys: Vec<f64> = ops.iter().map(|op| smoothing_residual(op, &grid, j)).collect();
            let fit = fit_log_log(&self.bandwidths, &ys)?;
            out.fits.push(FitRecord {
                name: format!("h_slope_j{j}"),
                slope: fit.slope,
                ci: (fit.slope - 2.0 * fit.slope_se, fit.slope + 2.0 * fit.slope_se),
                points: ys.len(),
            });
            out.check(
                format!("h_slope_j{j}"),
                (fit.slope - self.h_slope).abs() <= self.h_tol,
                format!("slope {:.4} (target {} ± {})", fit.slope, self.h_slope, self.h_tol),
            );
        }
        let op = SmoothingOperator::new(kernel, self.j_bandwidth, &grid, Boundary::Periodic)?;
        let js: Vec<f64> = self.j_values.iter().map(|&j| j as f64).collect();
        let ys: Vec<f64> = self.j_values.iter().map(|&j| smoothing_residual(&op, &grid, j)).collect();
        let fit = fit_log_log(&js, &ys)?;
        out.fits.push(FitRecord {
            name: "j_slope".into(),
            slope: fit.slope,
            ci: (fit.slope - 2.0 * fit.slope_se, fit.slope + 2.0 * fit.slope_se),
            points: ys.len(),
        });
        out.check(
            "j_slope",
            (fit.slope - self.j_slope).abs() <= self.j_tol,
            format!(
                "slope {:.4} at h = {} (target {} ± {})",
                fit.slope, self.j_bandwidth, self.j_slope, self.j_tol
            ),
        );
        Ok(out)
    }
}

// ---------------------------------------------------------------------------

/// Eigendecomposition of the discretized true covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpectrumSuite {
    pub grid: usize,
    pub count: usize,
    pub eigenvalue_tol: f64,
    pub eigenfunction_tol: f64,
}

impl Default for OracleSpectrumSuite {
    fn default() -> Self {
        Self {
            grid: 512,
            count: 5,
            eigenvalue_tol: 1e-4,
            eigenfunction_tol: 1e-3,
        }
    }
}

impl OracleSpectrumSuite {
    pub fn run(&self) -> Result<SuiteOutcome> {
        let mut out = SuiteOutcome::new("oracle_spectrum");
        let spec = ProcessSpec::default();
        let grid = Grid::new(self.grid)?;
        let truth = CovarianceEstimate::truth(&spec, &grid);
        let sys = align_signs(eigendecompose(&truth)?, &spec, self.count);
        let mut worst_val = 0.0f64;
        let mut worst_fn = 0.0f64;
        for j in 1..=self.count {
            worst_val = worst_val.max(spectral::eigenvalue_error(&sys, &spec, j)?.1.abs());
            worst_fn = worst_fn.max(spectral::l2_error(&sys, &spec, j)?.sqrt());
        }
        out.check(
            "eigenvalues",
            worst_val <= self.eigenvalue_tol,
            format!("max relative error {worst_val:.3e} (tol {:.0e})", self.eigenvalue_tol),
        );
        out.check(
            "eigenfunctions",
            worst_fn <= self.eigenfunction_tol,
            format!("max L2 error {worst_fn:.3e} (tol {:.0e})", self.eigenfunction_tol),
        );
        Ok(out)
    }
}

// ---------------------------------------------------------------------------

/// `‖EĈ − C‖²_HS` against `h` from the quadrature oracle, restricted to the
/// interior `[h_max, 1 − h_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasLawSuite {
    pub decay_a: f64,
    pub bandwidths: Vec<f64>,
    pub grid: usize,
    pub slope: f64,
    pub tol: f64,
}

impl Default for BiasLawSuite {
    fn default() -> Self {
        Self {
            decay_a: 3.0,
            bandwidths: vec![0.1, 0.05, 0.025, 0.0125],
            grid: 256,
            slope: 4.0,
            tol: 0.3,
        }
    }
}

impl BiasLawSuite {
    pub fn run(&self) -> Result<SuiteOutcome> {
        let mut out = SuiteOutcome::new("bias_law");
        let spec = ProcessSpec {
            decay_a: self.decay_a,
            ..ProcessSpec::default()
        };
        let grid = Grid::new(self.grid)?;
        let h_max = self.bandwidths.iter().copied().fold(0.0, f64::max);
        let interior = grid.indices_within(h_max, 1.0 - h_max);
        let truth = CovarianceEstimate::truth(&spec, &grid);
        let ys = self
            .bandwidths
            .iter()
            .map(|&h| {
                let sm = Smoothing::new(KernelSpec::default(), h).with_boundary(Boundary::Truncated);
                expected_estimate_oracle(&spec, &sm, &grid)?.hs_dist2(&truth, Some(&interior))
            })
            .collect::<Result<Vec<f64>>>()?;
        let fit = fit_log_log(&self.bandwidths, &ys)?;
        out.fits.push(FitRecord {
            name: "bias_h_slope".into(),
            slope: fit.slope,
            ci: (fit.slope - 2.0 * fit.slope_se, fit.slope + 2.0 * fit.slope_se),
            points: ys.len(),
        });
        out.check(
            "bias_h_slope",
            (fit.slope - self.slope).abs() <= self.tol,
            format!("slope {:.4} (target {} ± {})", fit.slope, self.slope, self.tol),
        );
        Ok(out)
    }
}

// ---------------------------------------------------------------------------

/// Slope of the mean eigenfunction error against `n` at `h = h_opt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSuite {
    pub targets: Vec<usize>,
    /// Observations per curve; `None` uses `4⌈jᵃ⌉`.
    pub n_obs: Option<usize>,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub slope: f64,
    pub tol: f64,
    pub grid: usize,
    pub estimator: EstimatorChoice,
    pub seed: u64,
}

/// Optional overrides applied on top of [`RateSuite::dense`] or
/// [`RateSuite::sparse`] when reading configuration files.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RateOverrides {
    targets: Option<Vec<usize>>,
    n_obs: Option<usize>,
    sample_sizes: Option<Vec<usize>>,
    replicates: Option<usize>,
    slope: Option<f64>,
    tol: Option<f64>,
    grid: Option<usize>,
    estimator: Option<EstimatorChoice>,
    seed: Option<u64>,
}

impl RateOverrides {
    fn apply(self, mut base: RateSuite) -> RateSuite {
        base.targets = self.targets.unwrap_or(base.targets);
        base.n_obs = self.n_obs.or(base.n_obs);
        base.sample_sizes = self.sample_sizes.unwrap_or(base.sample_sizes);
        base.replicates = self.replicates.unwrap_or(base.replicates);
        base.slope = self.slope.unwrap_or(base.slope);
        base.tol = self.tol.unwrap_or(base.tol);
        base.grid = self.grid.unwrap_or(base.grid);
        base.estimator = self.estimator.unwrap_or(base.estimator);
        base.seed = self.seed.unwrap_or(base.seed);
        base
    }
}

fn dense_overrides<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<RateSuite, D::Error> {
    Ok(RateOverrides::deserialize(d)?.apply(RateSuite::dense()))
}

fn sparse_overrides<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<RateSuite, D::Error> {
    Ok(RateOverrides::deserialize(d)?.apply(RateSuite::sparse()))
}

impl RateSuite {
    /// Dense design `N = 4⌈jᵃ⌉`.
    pub fn dense() -> Self {
        Self {
            targets: vec![1, 2],
            n_obs: None,
            sample_sizes: vec![500, 2000, 8000],
            replicates: 200,
            slope: -1.0,
            tol: 0.2,
            grid: 256,
            estimator: EstimatorChoice::Auto,
            seed: 2024,
        }
    }

    /// Sparse design `N = 3`.
    pub fn sparse() -> Self {
        Self {
            targets: vec![1],
            n_obs: Some(3),
            sample_sizes: vec![2000, 8000, 32000],
            replicates: 200,
            slope: -0.8,
            tol: 0.2,
            grid: 256,
            estimator: EstimatorChoice::Auto,
            seed: 2025,
        }
    }

    pub fn run(&self, name: &str, ctx: &SuiteContext) -> Result<SuiteOutcome> {
        let mut out = SuiteOutcome::new(name);
        let spec = ProcessSpec::default();
        for &j in &self.targets {
            let n_obs = self
                .n_obs
                .unwrap_or_else(|| 4 * (j as f64).powf(spec.decay_a).ceil() as usize);
            let configs = self.sample_sizes.iter().map(|&n| DesignPoint { n, n_obs }).collect();
            let mut plan = ExperimentPlan::new(spec.clone(), configs, BandwidthPolicy::CorollaryOne { m: j }, self.replicates)
                .with_targets(vec![j])
                .with_seed(self.seed);
            plan.parallel = ctx.parallel;
            plan.grid_size = self.grid;
            plan.estimator = self.estimator;
            let mut report = run_replicates(&plan)?;
            let points: Vec<RatePoint> = report
                .rows
                .iter()
                .map(|r| RatePoint {
                    x: r.n as f64,
                    mean: r.mse.mean,
                    se: r.mse.se,
                })
                .collect();
            let fit = fit_rate_exponent(&points)?;
            let flagged = report.rows.iter().any(|r| r.out_of_theory);
            let omega: Vec<String> = report
                .rows
                .iter()
                .map(|r| format!("{:.2}", r.omega_fraction))
                .collect();
            let rec = FitRecord {
                name: format!("n_slope_j{j}"),
                slope: fit.slope,
                ci: fit.ci,
                points: fit.points,
            };
            report.fits.push(rec.clone());
            out.fits.push(rec);
            let pass = (fit.slope - self.slope).abs() <= self.tol;
            let check = CheckRecord {
                name: format!("n_slope_j{j}"),
                pass,
                out_of_theory: flagged,
                detail: format!(
                    "N = {n_obs}, slope {:.4} [95% CI {:.3}, {:.3}] (target {} ± {}), Ω fractions {}",
                    fit.slope,
                    fit.ci.0,
                    fit.ci.1,
                    self.slope,
                    self.tol,
                    omega.join("/")
                ),
            };
            report.checks.push(check.clone());
            out.check_flagged(check.name, check.pass, check.out_of_theory, check.detail);
            out.reports.push(report);
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------

/// Empirical eigenvalue bias against both constants, and its `h²` scaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenvalueBiasSuite {
    pub j: usize,
    pub n: usize,
    pub n_obs: usize,
    pub bandwidths: Vec<f64>,
    pub replicates: usize,
    pub grid: usize,
    pub seed: u64,
}

impl Default for EigenvalueBiasSuite {
    fn default() -> Self {
        Self {
            j: 1,
            n: 2000,
            n_obs: 50,
            bandwidths: vec![0.05, 0.1],
            replicates: 1000,
            grid: 256,
            seed: 7001,
        }
    }
}

impl EigenvalueBiasSuite {
    pub fn run(&self, ctx: &SuiteContext) -> Result<SuiteOutcome> {
        let mut out = SuiteOutcome::new("eigenvalue_bias");
        let spec = ProcessSpec::default();
        let mut biases = Vec::new();
        for &h in &self.bandwidths {
            let mut plan = ExperimentPlan::new(
                spec.clone(),
                vec![DesignPoint {
                    n: self.n,
                    n_obs: self.n_obs,
                }],
                BandwidthPolicy::Fixed { h },
                self.replicates,
            )
            .with_targets(vec![self.j])
            .with_seed(self.seed);
            plan.parallel = ctx.parallel;
            plan.grid_size = self.grid;
            let report = run_replicates(&plan)?;
            biases.push(checks::bias_from_report(&report, 0, self.j)?);
            out.reports.push(report);
        }
        for b in &biases {
            out.check(
                format!("negative_h{}", b.h),
                b.empirical < 0.0,
                format!("mean bias {:.5} ± {:.5}", b.empirical, b.se),
            );
        }
        if biases.len() >= 2 {
            let (lo, hi) = (&biases[0], &biases[biases.len() - 1]);
            let expected = (hi.h / lo.h).powi(2);
            let ratio = hi.empirical / lo.empirical;
            // Delta-method SE of the ratio of two means.
            let ratio_se = ratio.abs() * ((hi.se / hi.empirical).powi(2) + (lo.se / lo.empirical).powi(2)).sqrt();
            out.check(
                "h2_scaling",
                (ratio - expected).abs() <= 2.0 * ratio_se,
                format!("bias ratio {ratio:.3} ± {ratio_se:.3} vs (h₂/h₁)² = {expected:.3}"),
            );
        }
        let sel = checks::select_kappa(&biases)?;
        for b in &biases {
            out.check(
                format!("kappa_h{}", b.h),
                b.within_two_se() == vec![sel.kappa],
                format!(
                    "empirical {:.5} ± {:.5}; κ=1 predicts {:.5} (z {:.2}); κ=2 predicts {:.5} (z {:.2})",
                    b.empirical, b.se, b.predicted[0], b.z[0], b.predicted[1], b.z[1]
                ),
            );
        }
        info!(
            "selected κ = {} (Σz² = {:.2} vs {:.2})",
            sel.kappa, sel.sum_z2[0], sel.sum_z2[1]
        );
        out.kappa = Some(sel.kappa);
        out.bias = biases;
        Ok(out)
    }
}

// ---------------------------------------------------------------------------

/// Normality of the standardized eigenvalue statistic, plus the null-path
/// calibration on exact normal draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalitySuite {
    pub j: usize,
    pub n: usize,
    pub n_obs: usize,
    pub h: f64,
    pub replicates: usize,
    pub grid: usize,
    /// Bias constant; falls back to the context, then to 1.
    pub kappa: Option<u8>,
    pub thresholds: NormalityThresholds,
    pub seed: u64,
}

impl Default for NormalitySuite {
    fn default() -> Self {
        Self {
            j: 1,
            n: 4000,
            n_obs: 50,
            h: 0.03,
            replicates: 1000,
            grid: 256,
            kappa: None,
            thresholds: NormalityThresholds::default(),
            seed: 8001,
        }
    }
}

fn normality_detail(s: &NormalityStats) -> String {
    format!(
        "mean {:.4}, var {:.4}, skew {:.4}, KS {:.4} (R = {})",
        s.mean, s.variance, s.skewness, s.ks, s.count
    )
}

impl NormalitySuite {
    pub fn run(&self, ctx: &SuiteContext) -> Result<SuiteOutcome> {
        let mut out = SuiteOutcome::new("normality");
        let kappa = self.kappa.or(ctx.kappa).unwrap_or(1);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let null: Vec<f64> = (0..self.replicates).map(|_| StandardNormal.sample(&mut rng)).collect();
        let null_stats = checks::normality_stats(&null)?;
        out.check("null_path", null_stats.passes(self.thresholds), normality_detail(&null_stats));
        out.normality.push(("null_path".into(), null_stats));

        let mut plan = ExperimentPlan::new(
            ProcessSpec::default(),
            vec![DesignPoint {
                n: self.n,
                n_obs: self.n_obs,
            }],
            BandwidthPolicy::Fixed { h: self.h },
            self.replicates,
        )
        .with_targets(vec![self.j])
        .with_seed(self.seed);
        plan.parallel = ctx.parallel;
        plan.grid_size = self.grid;
        let report = run_replicates(&plan)?;
        let stats = checks::normality_check(&report, 0, self.j, f64::from(kappa))?;
        let t = self.thresholds;
        out.check(
            "mean",
            stats.mean.abs() <= t.mean,
            format!("|{:.4}| ≤ {} with κ = {kappa}", stats.mean, t.mean),
        );
        out.check(
            "variance",
            (stats.variance - 1.0).abs() <= t.variance,
            format!("|{:.4} − 1| ≤ {}", stats.variance, t.variance),
        );
        out.check("ks", stats.ks <= t.ks, format!("{:.4} ≤ {}", stats.ks, t.ks));
        out.normality.push(("statistic".into(), stats));
        out.kappa = Some(kappa);
        out.reports.push(report);
        Ok(out)
    }
}

// ---------------------------------------------------------------------------

/// Structural invariants on a small Monte Carlo run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvariantSuite {
    pub n: usize,
    pub n_obs: usize,
    pub h: f64,
    pub replicates: usize,
    pub targets: Vec<usize>,
    pub grid: usize,
    pub widths: Vec<usize>,
    pub orthonormality_tol: f64,
    pub seed: u64,
}

impl Default for InvariantSuite {
    fn default() -> Self {
        Self {
            n: 200,
            n_obs: 10,
            h: 0.08,
            replicates: 12,
            targets: vec![1, 2, 3, 4],
            grid: 128,
            widths: vec![1, 4],
            orthonormality_tol: 1e-10,
            seed: 9001,
        }
    }
}

impl InvariantSuite {
    pub fn run(&self) -> Result<SuiteOutcome> {
        let mut out = SuiteOutcome::new("invariants");
        let spec = ProcessSpec::default();
        let mut plan = ExperimentPlan::new(
            spec.clone(),
            vec![
                DesignPoint {
                    n: self.n,
                    n_obs: self.n_obs,
                },
                DesignPoint {
                    n: self.n / 2,
                    n_obs: 2,
                },
            ],
            BandwidthPolicy::Fixed { h: self.h },
            self.replicates,
        )
        .with_targets(self.targets.clone())
        .with_seed(self.seed);
        plan.grid_size = self.grid;
        plan.diagnostics = true;
        let mut texts = Vec::new();
        let mut first = None;
        for &w in &self.widths {
            plan.parallel = w;
            let report = run_replicates(&plan)?;
            texts.push(report.to_json()?);
            first.get_or_insert(report);
        }
        let report = first.expect("at least one width");
        out.check(
            "determinism",
            texts.windows(2).all(|w| w[0] == w[1]),
            format!("report JSON identical across widths {:?}", self.widths),
        );
        out.check(
            "orthonormality",
            report.invariants.max_orthonormality_defect <= self.orthonormality_tol,
            format!("max defect {:.3e}", report.invariants.max_orthonormality_defect),
        );
        out.check(
            "bessel",
            report.invariants.bessel_violations == 0,
            format!("{} violations", report.invariants.bessel_violations),
        );

        let grid = Grid::new(self.grid)?;
        let (data, _) = simulate(&spec, &SamplingDesign::new(self.n, self.n_obs, self.seed))?;
        let sm = Smoothing::new(KernelSpec::default(), self.h);
        let mut asym = 0.0f64;
        for est in [
            estimate_covariance_exact(&data, &sm, &grid)?,
            estimate_covariance_binned(&data, &sm, &grid)?,
        ] {
            asym = asym.max(est.max_asymmetry());
        }
        out.check("symmetry", asym <= 1e-12, format!("max asymmetry {asym:.3e}"));

        let est = estimate_covariance_binned(&data, &sm, &grid)?;
        let k = self.targets.iter().copied().max().unwrap_or(1);
        let once = align_signs(eigendecompose(&est)?, &spec, k);
        let twice = align_signs(once.clone(), &spec, k);
        let same = once.eigenfunctions == twice.eigenfunctions;
        let nonneg = (1..=k).all(|j| {
            let f = once.eigenfunction(j).expect("j within range");
            grid.inner(&f, &grid.sample(|t| crate::model::fourier(j, t))) >= 0.0
        });
        out.check(
            "sign_alignment",
            same && nonneg,
            format!("idempotent: {same}, non-negative overlaps: {nonneg}"),
        );
        out.reports.push(report);
        Ok(out)
    }
}

// ---------------------------------------------------------------------------

/// Mean crude-bound ratio across indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrudeBoundSuite {
    pub n: usize,
    pub n_obs: usize,
    pub max_j: usize,
    pub bandwidth: BandwidthPolicy,
    pub replicates: usize,
    pub grid: usize,
    pub seed: u64,
}

impl Default for CrudeBoundSuite {
    fn default() -> Self {
        Self {
            n: 2000,
            n_obs: 50,
            max_j: 6,
            bandwidth: BandwidthPolicy::CorollaryOne { m: 6 },
            replicates: 200,
            grid: 256,
            seed: 10_001,
        }
    }
}

impl CrudeBoundSuite {
    pub fn run(&self, ctx: &SuiteContext) -> Result<SuiteOutcome> {
        let mut out = SuiteOutcome::new("crude_bound");
        let mut plan = ExperimentPlan::new(
            ProcessSpec::default(),
            vec![DesignPoint {
                n: self.n,
                n_obs: self.n_obs,
            }],
            self.bandwidth,
            self.replicates,
        )
        .with_targets((1..=self.max_j).collect())
        .with_seed(self.seed);
        plan.parallel = ctx.parallel;
        plan.grid_size = self.grid;
        plan.diagnostics = true;
        let report = run_replicates(&plan)?;
        let means: Vec<f64> = (1..=self.max_j)
            .map(|j| {
                report
                    .row(0, j)
                    .and_then(|r| r.crude_ratio)
                    .map_or(f64::NAN, |s| s.mean)
            })
            .collect();
        let monotone = means.windows(2).all(|w| w[1] < w[0]);
        out.check(
            "monotone_decrease",
            monotone,
            format!(
                "mean ratios {}",
                means.iter().map(|m| format!("{m:.4e}")).collect::<Vec<_>>().join(", ")
            ),
        );
        out.reports.push(report);
        Ok(out)
    }
}

// ---------------------------------------------------------------------------

/// Any suite, tagged by name in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "suite", rename_all = "snake_case")]
pub enum Suite {
    Estimator(EstimatorSuite),
    SmoothingLaw(SmoothingLawSuite),
    OracleSpectrum(OracleSpectrumSuite),
    BiasLaw(BiasLawSuite),
    DenseRate(#[serde(deserialize_with = "dense_overrides")] RateSuite),
    SparseRate(#[serde(deserialize_with = "sparse_overrides")] RateSuite),
    EigenvalueBias(EigenvalueBiasSuite),
    Normality(NormalitySuite),
    Invariants(InvariantSuite),
    CrudeBound(CrudeBoundSuite),
}

impl Suite {
    /// All suites at their full-size settings, in dependency order.
    pub fn full() -> Vec<Suite> {
        vec![
            Suite::Estimator(EstimatorSuite::default()),
            Suite::SmoothingLaw(SmoothingLawSuite::default()),
            Suite::OracleSpectrum(OracleSpectrumSuite::default()),
            Suite::BiasLaw(BiasLawSuite::default()),
            Suite::DenseRate(RateSuite::dense()),
            Suite::SparseRate(RateSuite::sparse()),
            Suite::EigenvalueBias(EigenvalueBiasSuite::default()),
            Suite::Normality(NormalitySuite::default()),
            Suite::Invariants(InvariantSuite::default()),
            Suite::CrudeBound(CrudeBoundSuite::default()),
        ]
    }

    /// Runs the suite, recording a selected bias constant in `ctx`.
    pub fn run(&self, ctx: &mut SuiteContext) -> Result<SuiteOutcome> {
        let out = match self {
            Suite::Estimator(s) => s.run(),
            Suite::SmoothingLaw(s) => s.run(),
            Suite::OracleSpectrum(s) => s.run(),
            Suite::BiasLaw(s) => s.run(),
            Suite::DenseRate(s) => s.run("dense_rate", ctx),
            Suite::SparseRate(s) => s.run("sparse_rate", ctx),
            Suite::EigenvalueBias(s) => s.run(ctx),
            Suite::Normality(s) => s.run(ctx),
            Suite::Invariants(s) => s.run(),
            Suite::CrudeBound(s) => s.run(ctx),
        }?;
        if matches!(self, Suite::EigenvalueBias(_)) {
            ctx.kappa = out.kappa;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_parse_with_partial_overrides() {
        let s: Suite = serde_json::from_str(r#"{"suite": "dense_rate", "replicates": 5}"#).unwrap();
        match s {
            Suite::DenseRate(r) => assert_eq!(r.replicates, 5),
            other => panic!("{other:?}"),
        }
        assert!(serde_json::from_str::<Suite>(r#"{"suite": "estimator", "bogus": 1}"#).is_err());
    }

    #[test]
    fn quick_deterministic_suites_pass() {
        let est = EstimatorSuite {
            tiny_instances: 10,
            ..EstimatorSuite::default()
        };
        assert!(est.run().unwrap().pass());
        let spec = OracleSpectrumSuite {
            grid: 256,
            ..OracleSpectrumSuite::default()
        };
        assert!(spec.run().unwrap().pass());
    }

    #[test]
    fn invariant_suite_passes() {
        let out = InvariantSuite {
            replicates: 4,
            ..InvariantSuite::default()
        }
        .run()
        .unwrap();
        assert!(out.pass(), "{}", out.summary());
    }
}
