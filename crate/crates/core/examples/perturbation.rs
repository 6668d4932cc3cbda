//! Perturbation diagnostics: projections of Δφ_j, the first-order resolvent
//! term and the crude bound η_j⁻²‖Δ‖²_HS.

use discrete_fpca::model::{simulate, ProcessSpec, SamplingDesign};
use discrete_fpca::smoother::{estimate_covariance_binned, CovarianceEstimate, Grid, KernelSpec, Smoothing};
use discrete_fpca::spectral::{align_signs, crude_bound_ratio, diagnostics, eigendecompose, l2_error, omega_event};

fn main() -> discrete_fpca::Result<()> {
    let spec = ProcessSpec::default();
    let (data, _) = simulate(&spec, &SamplingDesign::new(1500, 40, 11))?;
    let grid = Grid::new(256)?;
    let est = estimate_covariance_binned(&data, &Smoothing::new(KernelSpec::default(), 0.04), &grid)?;
    let truth = CovarianceEstimate::truth(&spec, &grid);
    let sys = align_signs(eigendecompose(&est)?, &spec, 5);
    for j in 1..=5 {
        let diag = diagnostics(&est, &truth, &spec, j, None)?;
        let first = grid.norm2(&diag.first_order_error);
        let crude = crude_bound_ratio(&diag, &sys, &spec, j)?;
        println!(
            "j = {j}: error {:.2e}, first-order {:.2e}, crude ratio {:.2e}, Bessel {}",
            l2_error(&sys, &spec, j)?,
            first,
            crude.ratio,
            diag.bessel_holds(1e-8)
        );
    }
    let hs = est.hs_dist2(&truth, None)?.sqrt();
    println!("‖Δ‖_HS = {hs:.4}; in Ω_1: {}, in Ω_3: {}", omega_event(hs, &spec, 1), omega_event(hs, &spec, 3));
    Ok(())
}
