//! Theory evaluations: bandwidth, rate terms, regimes, assumptions, the
//! eigenvalue variance Σₙ and the predicted eigenvalue bias.

use discrete_fpca::model::ProcessSpec;
use discrete_fpca::smoother::KernelSpec;
use discrete_fpca::theory::{
    eigenvalue_bias, limiting_variance, optimal_bandwidth, rate_terms, regime_classify, sigma_n, validate_assumptions,
    variance_components, Assumption, LimitThresholds, RateInputs, Thresholds,
};

fn main() -> discrete_fpca::Result<()> {
    let spec = ProcessSpec::default();
    for (n, n_obs) in [(2000, 3), (2000, 16), (2000, 200)] {
        let h = optimal_bandwidth(n, n_obs, 2, spec.decay_a, spec.freq_c())?;
        let inputs = RateInputs {
            n,
            n_obs,
            h,
            j: 2,
            a: spec.decay_a,
            c: spec.freq_c(),
        };
        let terms = rate_terms(&inputs)?;
        let m1 = validate_assumptions(&inputs, 2, Assumption::M1, Thresholds::default())?;
        println!(
            "n = {n}, N = {n_obs}: h_opt = {h:.4}, bound = {:.2e} ({:?}), M.1 holds: {}",
            terms.total(),
            regime_classify(&inputs, 1.0)?,
            m1.pass()
        );
    }
    let vc = variance_components(&spec, 1, 4000, 50)?;
    let (regime, limit) = limiting_variance(&vc, LimitThresholds::default())?;
    println!("Σₙ(j=1, n=4000, N=50) = {:.3e}; limit regime {regime:?}, n·Σ → {limit:.3}", sigma_n(&vc)?);
    for h in [0.05, 0.1] {
        println!(
            "predicted bias of λ̂_1 at h = {h}: κ=1 {:.4}, κ=2 {:.4}",
            eigenvalue_bias(&spec, KernelSpec::default(), h, 1, 1.0)?,
            eigenvalue_bias(&spec, KernelSpec::default(), h, 1, 2.0)?
        );
    }
    Ok(())
}
