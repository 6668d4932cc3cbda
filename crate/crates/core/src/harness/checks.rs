use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::plan::ExperimentPlan;
use super::report::{ExperimentReport, Stat};
use super::run::run_replicates;
use crate::error::{invalid, Error, Result};
use crate::model::FunctionalDataset;
use crate::smoother::{
    estimate_covariance_binned, estimate_covariance_exact, Boundary, Grid, KernelFamily, Smoothing,
};
use crate::theory;

/// Minimum replicate count for [`bias_check`].
pub const MIN_BIAS_REPLICATES: usize = 500;

/// Empirical eigenvalue bias against the two candidate constants `κ ∈ {1, 2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasCheck {
    pub config: usize,
    pub j: usize,
    pub h: f64,
    /// Mean of `λ̂_j − λ_j`.
    pub empirical: f64,
    pub se: f64,
    /// Predictions for `κ = 1` and `κ = 2`.
    pub predicted: [f64; 2],
    /// `(empirical − predicted) / se` for both constants.
    pub z: [f64; 2],
}

impl BiasCheck {
    /// Constants whose prediction lies within two standard errors.
    pub fn within_two_se(&self) -> Vec<u8> {
        [1u8, 2].into_iter().filter(|&k| self.z[k as usize - 1].abs() <= 2.0).collect()
    }
}

/// Bias summary for one `(config, j)` row of a finished report.
pub fn bias_from_report(report: &ExperimentReport, config: usize, j: usize) -> Result<BiasCheck> {
    let row = report.row(config, j).ok_or(Error::IndexOutOfRange {
        index: j,
        available: report.plan.spec.truncation_j,
    })?;
    let plan = &report.plan;
    let p1 = theory::eigenvalue_bias(&plan.spec, plan.kernel, row.h, j, 1.0)?;
    let p2 = theory::eigenvalue_bias(&plan.spec, plan.kernel, row.h, j, 2.0)?;
    let Stat { mean, se, .. } = row.eig_abs;
    if !(se > 0.0) {
        return Err(Error::ZeroDenominator("bias standard error"));
    }
    Ok(BiasCheck {
        config,
        j,
        h: row.h,
        empirical: mean,
        se,
        predicted: [p1, p2],
        z: [(mean - p1) / se, (mean - p2) / se],
    })
}

/// Runs `plan` and compares the empirical bias of `λ̂_j` with both
/// predictions at every design point.
pub fn bias_check(plan: &ExperimentPlan, j: usize) -> Result<Vec<BiasCheck>> {
    if plan.replicates < MIN_BIAS_REPLICATES {
        return Err(invalid(
            "replicates",
            format!("bias checks need at least {MIN_BIAS_REPLICATES}, got {}", plan.replicates),
        ));
    }
    let mut plan = plan.clone();
    if !plan.targets.contains(&j) {
        plan.targets.push(j);
    }
    let report = run_replicates(&plan)?;
    (0..plan.configs.len()).map(|c| bias_from_report(&report, c, j)).collect()
}

/// Constant chosen across a set of bias checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaSelection {
    pub kappa: u8,
    /// `Σ z²` for `κ = 1` and `κ = 2`.
    pub sum_z2: [f64; 2],
    /// Every check has exactly the selected constant within two SE.
    pub unique: bool,
}

/// Picks the constant with the smaller `Σ z²`.
pub fn select_kappa(checks: &[BiasCheck]) -> Result<KappaSelection> {
    if checks.is_empty() {
        return Err(invalid("checks", "no bias checks given"));
    }
    let sum_z2 = [0, 1].map(|k| checks.iter().map(|c| c.z[k] * c.z[k]).sum::<f64>());
    let kappa = if sum_z2[0] <= sum_z2[1] { 1 } else { 2 };
    let unique = checks.iter().all(|c| c.within_two_se() == vec![kappa]);
    Ok(KappaSelection { kappa, sum_z2, unique })
}

/// Moments and Kolmogorov–Smirnov distance of a standardized sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalityStats {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// `sup |F_R − Φ|`.
    pub ks: f64,
}

/// Pass limits for [`NormalityStats`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalityThresholds {
    pub mean: f64,
    pub variance: f64,
    pub ks: f64,
}

impl Default for NormalityThresholds {
    fn default() -> Self {
        Self {
            mean: 0.08,
            variance: 0.12,
            ks: 0.035,
        }
    }
}

impl NormalityStats {
    pub fn passes(&self, t: NormalityThresholds) -> bool {
        self.mean.abs() <= t.mean && (self.variance - 1.0).abs() <= t.variance && self.ks <= t.ks
    }
}

/// Summary statistics of `z` against the standard normal.
///
/// This is also the null-path hook: feeding it `N(0, 1)` draws exercises the
/// same code as the Monte Carlo check.
pub fn normality_stats(z: &[f64]) -> Result<NormalityStats> {
    let n = z.len();
    if n < 3 {
        return Err(invalid("sample", "need at least 3 values"));
    }
    let nf = n as f64;
    let mean = z.iter().sum::<f64>() / nf;
    let m2 = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    let m3 = z.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / nf;
    let variance = m2 * nf / (nf - 1.0);
    let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let phi = Normal::standard();
    let ks = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = phi.cdf(x);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    Ok(NormalityStats {
        count: n,
        mean,
        variance,
        skewness,
        ks,
    })
}

/// `((λ̂_j − λ_j)/λ_j − b/λ_j) / √Σₙ` for every replicate of a design point,
/// where `b` is the predicted bias for `kappa`.
pub fn standardized_statistics(report: &ExperimentReport, config: usize, j: usize, kappa: f64) -> Result<Vec<f64>> {
    let plan = &report.plan;
    let point = plan.configs.get(config).ok_or(Error::IndexOutOfRange {
        index: config,
        available: plan.configs.len(),
    })?;
    let h = plan.bandwidth_for(point)?;
    let lambda = plan.spec.eigenvalue(j)?;
    let bias = theory::eigenvalue_bias(&plan.spec, plan.kernel, h, j, kappa)? / lambda;
    let vc = theory::variance_components(&plan.spec, j, point.n, point.n_obs)?;
    let var = theory::sigma_n(&vc)?;
    if !(var > 0.0) {
        return Err(Error::ZeroDenominator("Σₙ"));
    }
    let sd = var.sqrt();
    report
        .replicates_of(config)
        .map(|r| {
            r.target(j)
                .map(|t| (t.eig_rel - bias) / sd)
                .ok_or(Error::IndexOutOfRange {
                    index: j,
                    available: plan.spec.truncation_j,
                })
        })
        .collect()
}

/// Normality of the standardized eigenvalue statistic at one design point.
pub fn normality_check(report: &ExperimentReport, config: usize, j: usize, kappa: f64) -> Result<NormalityStats> {
    normality_stats(&standardized_statistics(report, config, j, kappa)?)
}

/// Agreement between the estimator paths and a brute-force evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    /// `max |Ĉ_exact − Ĉ_oracle|`.
    pub exact_max_abs: f64,
    /// `‖Ĉ_binned − Ĉ_oracle‖_F / ‖Ĉ_oracle‖_F`.
    pub binned_rel_frobenius: f64,
}

fn oracle_kernel(family: KernelFamily, u: f64) -> f64 {
    if u.abs() > 1.0 {
        return 0.0;
    }
    match family {
        KernelFamily::Epanechnikov => 0.75 * (1.0 - u * u),
        KernelFamily::Uniform => 0.5,
        KernelFamily::Quartic => 15.0 / 16.0 * (1.0 - u * u) * (1.0 - u * u),
    }
}

fn oracle_distance(boundary: Boundary, x: f64, y: f64) -> f64 {
    let d = x - y;
    match boundary {
        Boundary::Truncated => d,
        Boundary::Periodic => {
            let r = d.rem_euclid(1.0);
            if r > 0.5 {
                r - 1.0
            } else {
                r
            }
        }
    }
}

/// Brute-force estimate: every grid pair, subject and ordered pair `j ≠ l`.
pub fn brute_force_estimate(data: &FunctionalDataset, smoothing: &Smoothing, grid: &Grid) -> Result<Vec<f64>> {
    data.validate()?;
    let g = grid.len();
    let pts = grid.points();
    let h = smoothing.h;
    let k = |s: f64, t: f64| oracle_kernel(smoothing.kernel.family, oracle_distance(smoothing.boundary, s, t) / h) / h;
    let mut out = vec![0.0; g * g];
    let mut total = 0.0;
    for sub in &data.subjects {
        let m = sub.times.len();
        if m < 2 {
            return Err(Error::DegenerateDesign);
        }
        let norm = 1.0 / (m * (m - 1)) as f64;
        for a in 0..g {
            for b in 0..g {
                let mut acc = 0.0;
                for j in 0..m {
                    for l in 0..m {
                        if j != l {
                            acc += k(pts[a], sub.times[j]) * k(pts[b], sub.times[l]) * sub.values[j] * sub.values[l];
                        }
                    }
                }
                out[a * g + b] += norm * acc;
            }
        }
        total += 1.0;
    }
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// Compares both estimator paths with [`brute_force_estimate`].
pub fn oracle_small_instance(data: &FunctionalDataset, smoothing: &Smoothing, grid: &Grid) -> Result<OracleComparison> {
    let oracle = brute_force_estimate(data, smoothing, grid)?;
    let g = grid.len();
    let exact = estimate_covariance_exact(data, smoothing, grid)?;
    let binned = estimate_covariance_binned(data, smoothing, grid)?;
    let mut exact_max_abs = 0.0f64;
    let (mut diff2, mut norm2) = (0.0, 0.0);
    for a in 0..g {
        for b in 0..g {
            let o = oracle[a * g + b];
            exact_max_abs = exact_max_abs.max((exact.matrix[(a, b)] - o).abs());
            diff2 += (binned.matrix[(a, b)] - o).powi(2);
            norm2 += o * o;
        }
    }
    if norm2 == 0.0 {
        return Err(Error::ZeroDenominator("oracle Frobenius norm"));
    }
    Ok(OracleComparison {
        exact_max_abs,
        binned_rel_frobenius: (diff2 / norm2).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate, ProcessSpec, SamplingDesign};
    use crate::smoother::KernelSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn null_path_passes_on_normal_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z: Vec<f64> = (0..4000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = normality_stats(&z).unwrap();
        assert!(s.passes(NormalityThresholds::default()), "{s:?}");
        assert!(s.skewness.abs() < 0.15);
    }

    #[test]
    fn shifted_sample_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z: Vec<f64> = (0..2000).map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            0.3 + x
        }).collect();
        assert!(!normality_stats(&z).unwrap().passes(NormalityThresholds::default()));
    }

    #[test]
    fn ks_of_a_point_mass() {
        let s = normality_stats(&[0.0; 10]).unwrap();
        assert!((s.ks - 0.5).abs() < 1e-12);
    }

    #[test]
    fn oracle_agrees_with_exact_path() {
        let spec = ProcessSpec::default();
        let (data, _) = simulate(&spec, &SamplingDesign::new(20, 5, 9)).unwrap();
        let grid = Grid::new(32).unwrap();
        for boundary in [Boundary::Periodic, Boundary::Truncated] {
            for kernel in [KernelSpec::EPANECHNIKOV, KernelSpec::UNIFORM, KernelSpec::QUARTIC] {
                let sm = Smoothing::new(kernel, 0.2).with_boundary(boundary);
                let cmp = oracle_small_instance(&data, &sm, &grid).unwrap();
                assert!(cmp.exact_max_abs <= 1e-10, "{kernel:?} {boundary:?} {cmp:?}");
            }
        }
    }

    #[test]
    fn kappa_selection_prefers_smaller_residual() {
        let c = BiasCheck {
            config: 0,
            j: 1,
            h: 0.1,
            empirical: -1.0,
            se: 0.1,
            predicted: [-1.05, -2.0],
            z: [0.5, 10.0],
        };
        let sel = select_kappa(&[c.clone(), c]).unwrap();
        assert_eq!(sel.kappa, 1);
        assert!(sel.unique);
    }
}
