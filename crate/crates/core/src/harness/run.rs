use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use super::plan::{DesignPoint, ExperimentPlan};
use super::report::{
    ExperimentReport, FailureRecord, InvariantSummary, ReplicateRecord, RuntimeInfo, Stat, SummaryRow, TargetRecord,
};
use crate::error::{Error, Result};
use crate::model::{simulate, SamplingDesign};
use crate::rng::derive_seed;
use crate::smoother::{estimate_covariance, CovarianceEstimate, Grid, Method, Smoothing};
use crate::spectral::{self, align_signs, eigendecompose};
use crate::theory;

/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

/// Tolerance used for the per-replicate Bessel check.
const BESSEL_TOL: f64 = 1e-8;

/// Seed of replicate `r` at design point `(n, N)`. Independent of the
/// bandwidth, so plans differing only in `h` see identical data.
pub fn replicate_seed(base: u64, point: &DesignPoint, r: usize) -> u64 {
    derive_seed(base, &[point.n as u64, point.n_obs as u64, r as u64])
}

struct ConfigContext {
    point: DesignPoint,
    smoothing: Smoothing,
    method: Method,
}

fn one_replicate(
    plan: &ExperimentPlan,
    ctx: &ConfigContext,
    grid: &Grid,
    truth: &CovarianceEstimate,
    config: usize,
    r: usize,
) -> Result<ReplicateRecord> {
    let seed = replicate_seed(plan.base_seed, &ctx.point, r);
    let design = SamplingDesign::new(ctx.point.n, ctx.point.n_obs, seed);
    let (data, _) = simulate(&plan.spec, &design)?;
    let est = estimate_covariance(&data, &ctx.smoothing, grid, ctx.method)?;
    let max_j = plan.targets.iter().copied().max().unwrap_or(1);
    let sys = align_signs(eigendecompose(&est)?, &plan.spec, max_j);
    let hs_norm = est.hs_dist2(truth, None)?.sqrt();
    let mut targets = Vec::with_capacity(plan.targets.len());
    for &j in &plan.targets {
        let l2_error = spectral::l2_error(&sys, &plan.spec, j)?;
        let (eig_abs, eig_rel) = spectral::eigenvalue_error(&sys, &plan.spec, j)?;
        let (crude_ratio, bessel) = if plan.diagnostics {
            let diag = spectral::diagnostics(&est, truth, &plan.spec, j, None)?;
            let crude = spectral::crude_bound_ratio(&diag, &sys, &plan.spec, j)?;
            (Some(crude.ratio), Some(diag.bessel_holds(BESSEL_TOL)))
        } else {
            (None, None)
        };
        targets.push(TargetRecord {
            j,
            l2_error,
            eig_abs,
            eig_rel,
            crude_ratio,
            bessel,
        });
    }
    Ok(ReplicateRecord {
        config,
        replicate: r,
        seed,
        hs_norm,
        in_omega: spectral::omega_event(hs_norm, &plan.spec, plan.omega_index()),
        orthonormality_defect: sys.orthonormality_defect(max_j),
        negative_eigenvalues: sys.flags.negative,
        targets,
    })
}

/// Runs every replicate of every design point and aggregates the results.
///
/// Replicates are written into pre-indexed slots, so the report is
/// identical for any thread count.
pub fn run_replicates(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    Ok(run_replicates_timed(plan)?.0)
}

/// [`run_replicates`] plus wall-clock metadata.
pub fn run_replicates_timed(plan: &ExperimentPlan) -> Result<(ExperimentReport, RuntimeInfo)> {
    plan.validate()?;
    let start = Instant::now();
    let grid = Grid::new(plan.grid_size)?;
    let truth = CovarianceEstimate::truth(&plan.spec, &grid);
    let contexts = plan
        .configs
        .iter()
        .map(|p| {
            let h = plan.bandwidth_for(p)?;
            Ok(ConfigContext {
                point: *p,
                smoothing: Smoothing::new(plan.kernel, h).with_boundary(plan.boundary),
                method: if plan.use_exact(p) { Method::Exact } else { Method::Binned },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for (c, ctx) in contexts.iter().enumerate() {
        info!(
            "config {c}: n={} N={} h={:.5} method={:?}",
            ctx.point.n, ctx.point.n_obs, ctx.smoothing.h, ctx.method
        );
    }
    let r_count = plan.replicates;
    let total = contexts.len() * r_count;
    let work = || -> Vec<Result<ReplicateRecord>> {
        (0..total)
            .into_par_iter()
            .map(|slot| {
                let (c, r) = (slot / r_count, slot % r_count);
                one_replicate(plan, &contexts[c], &grid, &truth, c, r)
            })
            .collect()
    };
    let (results, threads) = if plan.parallel > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(plan.parallel)
            .build()
            .map_err(|e| crate::error::invalid("parallel", e.to_string()))?;
        (pool.install(work), plan.parallel)
    } else {
        (work(), rayon::current_num_threads())
    };

    let mut replicates = Vec::with_capacity(total);
    let mut failures = Vec::new();
    for (slot, res) in results.into_iter().enumerate() {
        match res {
            Ok(rec) => replicates.push(rec),
            Err(e) => failures.push(FailureRecord {
                config: slot / r_count,
                replicate: slot % r_count,
                message: e.to_string(),
            }),
        }
    }
    if !failures.is_empty() {
        warn!("{} of {total} replicates failed", failures.len());
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total,
        });
    }

    let mut rows = Vec::new();
    for (c, ctx) in contexts.iter().enumerate() {
        let out_of_theory = plan.out_of_theory(&ctx.point)?;
        if out_of_theory {
            warn!("config {c} (n={}, N={}) is outside the rate assumptions", ctx.point.n, ctx.point.n_obs);
        }
        let recs: Vec<&ReplicateRecord> = replicates.iter().filter(|r| r.config == c).collect();
        for &j in &plan.targets {
            let pick = |f: &dyn Fn(&TargetRecord) -> f64, only_omega: bool| -> Vec<f64> {
                recs.iter()
                    .filter(|r| !only_omega || r.in_omega)
                    .filter_map(|r| r.target(j).map(f))
                    .collect()
            };
            let mse = pick(&|t| t.l2_error, false);
            let inputs = plan.rate_inputs(&ctx.point, j)?;
            let crude: Vec<f64> = recs
                .iter()
                .filter_map(|r| r.target(j).and_then(|t| t.crude_ratio))
                .collect();
            let omega_count = recs.iter().filter(|r| r.in_omega).count();
            let Some(mse_stat) = Stat::from_slice(&mse) else {
                return Err(Error::TooManyFailures {
                    failed: r_count - mse.len(),
                    total: r_count,
                });
            };
            rows.push(SummaryRow {
                config: c,
                n: ctx.point.n,
                n_obs: ctx.point.n_obs,
                h: ctx.smoothing.h,
                j,
                exact: ctx.method == Method::Exact,
                regime: theory::regime_classify(&inputs, 1.0)?,
                out_of_theory,
                mse: mse_stat,
                mse_omega: Stat::from_slice(&pick(&|t| t.l2_error, true)),
                omega_fraction: omega_count as f64 / recs.len() as f64,
                eig_abs: Stat::from_slice(&pick(&|t| t.eig_abs, false)).expect("same count as mse"),
                eig_rel: Stat::from_slice(&pick(&|t| t.eig_rel, false)).expect("same count as mse"),
                crude_ratio: Stat::from_slice(&crude),
                rate_bound: theory::rate_bound(&inputs)?,
            });
        }
    }

    let invariants = InvariantSummary {
        max_orthonormality_defect: replicates
            .iter()
            .map(|r| r.orthonormality_defect)
            .fold(0.0, f64::max),
        bessel_violations: replicates
            .iter()
            .flat_map(|r| &r.targets)
            .filter(|t| t.bessel == Some(false))
            .count(),
        negative_eigenvalue_replicates: replicates.iter().filter(|r| r.negative_eigenvalues > 0).count(),
    };
    // The width is a runtime property and stays out of the report.
    let mut recorded = plan.clone();
    recorded.parallel = 0;
    let report = ExperimentReport {
        plan: recorded,
        spec_hash: plan.spec.fingerprint(),
        rows,
        invariants,
        failures,
        fits: Vec::new(),
        checks: Vec::new(),
        replicates,
    };
    let runtime = RuntimeInfo {
        elapsed_seconds: start.elapsed().as_secs_f64(),
        threads,
        replicates_run: total,
    };
    Ok((report, runtime))
}
