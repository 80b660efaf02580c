//! Closed-form bias and variance of the soft-thresholding gradient estimator
//! as a function of the finite-difference step.

use sugar::oracles::log_grid;
use sugar::st_analytics::{st_mse_surface, Mu0Model, DEFAULT_LAMBDA};

fn main() -> sugar::Result<()> {
    let sigma = 1.0;
    let steps = log_grid(1e-3, 1.95 * DEFAULT_LAMBDA, 40);
    let surface = st_mse_surface(
        &Mu0Model::default(),
        sigma,
        DEFAULT_LAMBDA,
        &[100, 10_000, 1_000_000],
        &steps,
    )?;
    for cell in &surface.argmin {
        println!(
            "P = {:>8}: best step {:.3} sigma, normalized MSE {:.3e} (bias^2 {:.2e}, variance {:.2e})",
            cell.p, cell.epsilon, cell.mse, cell.bias2, cell.variance
        );
    }
    Ok(())
}
