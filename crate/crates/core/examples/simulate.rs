//! Draws curves from the Fourier Karhunen–Loève model and compares the
//! empirical covariance of the scores with the model eigenvalues.

use discrete_fpca::model::{simulate, true_covariance, ProcessSpec, SamplingDesign};

fn main() -> discrete_fpca::Result<()> {
    let spec = ProcessSpec {
        decay_a: 2.0,
        noise_sd: 0.3,
        ..ProcessSpec::default()
    };
    let design = SamplingDesign::new(2000, 6, 42);
    let (data, scores) = simulate(&spec, &design)?;
    println!("{} curves, {} points each", data.n(), data.n_obs());
    println!("first curve: {:?}", &data.subjects[0].times[..3]);

    for k in 1..=4 {
        let xi = scores.column(k);
        let var = xi.iter().map(|x| x * x).sum::<f64>() / xi.len() as f64;
        println!("λ_{k} = {:.4}, empirical E ξ² = {:.4}", spec.eigenvalue(k)?, var);
    }
    println!("C(0.2, 0.7) = {:.5}", true_covariance(&spec, 0.2, 0.7)?);
    println!("tail variance beyond J: {:.4}", spec.tail_variance_fraction());
    Ok(())
}
