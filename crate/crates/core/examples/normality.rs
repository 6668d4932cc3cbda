//! Standardized eigenvalue statistic against the normal law, next to the
//! null-path calibration on exact normal draws.

use discrete_fpca::harness::{normality_check, normality_stats, run_replicates, BandwidthPolicy, DesignPoint, ExperimentPlan};
use discrete_fpca::model::ProcessSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> discrete_fpca::Result<()> {
    let plan = ExperimentPlan::new(
        ProcessSpec::default(),
        vec![DesignPoint { n: 1000, n_obs: 20 }],
        BandwidthPolicy::Fixed { h: 0.05 },
        200,
    )
    .with_seed(1);
    let report = run_replicates(&plan)?;
    let stats = normality_check(&report, 0, 1, 1.0)?;
    println!("statistic: {stats:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let z: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
    println!("null path: {:?}", normality_stats(&z)?);
    Ok(())
}
