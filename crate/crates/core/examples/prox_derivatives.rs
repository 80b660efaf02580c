//! Singular value thresholding and its weak derivatives against finite
//! differences.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sugar::prox::{nuclear_prox, nuclear_prox_jac_input, nuclear_prox_jac_theta};

fn main() -> sugar::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = DMatrix::from_fn(12, 6, |_, _| rng.sample::<f64, _>(StandardNormal));
    let dir = DMatrix::from_fn(12, 6, |_, _| rng.sample::<f64, _>(StandardNormal));
    let rho = 2.5;
    let h = 1e-6;

    let fd = (nuclear_prox(&(&x + &dir * h), rho)? - nuclear_prox(&(&x - &dir * h), rho)?) / (2.0 * h);
    let jac = nuclear_prox_jac_input(&x, rho, &dir)?;
    println!(
        "input derivative: relative gap {:.2e}",
        (&fd - &jac).norm() / jac.norm()
    );

    let fd = (nuclear_prox(&x, rho + h)? - nuclear_prox(&x, rho - h)?) / (2.0 * h);
    let jac = nuclear_prox_jac_theta(&x, rho)?;
    println!(
        "threshold derivative: relative gap {:.2e}",
        (&fd - &jac).norm() / jac.norm()
    );

    let rank = nuclear_prox(&x, rho)?
        .singular_values()
        .iter()
        .filter(|&&s| s > 1e-12)
        .count();
    println!("rank after thresholding: {rank} of 6");
    Ok(())
}
