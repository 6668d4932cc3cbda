//! The smoothing operator T_h on Fourier functions: ‖T_hφ_j − φ_j‖² shrinks
//! like h⁴ and grows like j⁴.

use discrete_fpca::harness::fit_log_log;
use discrete_fpca::model::fourier;
use discrete_fpca::smoother::{Boundary, Grid, KernelSpec, SmoothingOperator};

fn main() -> discrete_fpca::Result<()> {
    let grid = Grid::new(2049)?;
    let bandwidths = [0.04, 0.02, 0.01, 0.005];
    for j in [1, 2, 4] {
        let phi = grid.sample(|t| fourier(j, t));
        let ys = bandwidths
            .iter()
            .map(|&h| {
                let op = SmoothingOperator::new(KernelSpec::default(), h, &grid, Boundary::Periodic)?;
                Ok(grid.dist2(&op.apply(&phi), &phi))
            })
            .collect::<discrete_fpca::Result<Vec<f64>>>()?;
        let fit = fit_log_log(&bandwidths, &ys)?;
        let shown: Vec<String> = ys.iter().map(|y| format!("{y:.3e}")).collect();
        println!("j = {j}: residuals [{}], slope in h {:.3}", shown.join(", "), fit.slope);
    }
    let op = SmoothingOperator::new(KernelSpec::default(), 0.3, &grid, Boundary::Truncated)?;
    let one = op.apply(&vec![1.0; grid.len()]);
    println!("truncated T_h 1 at x = 0: {:.3}, at x = 0.5: {:.3}", one[0], one[grid.len() / 2]);
    Ok(())
}
