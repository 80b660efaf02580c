//! Adjoint and norm-bound checks for the packaged linear operators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sugar::operators::{
    adjoint_mismatch, gaussian_kernel, lowpass_frequency_mask, make_discrete_gradient, make_mask,
    make_periodic_convolution, make_random_sensing, make_undecimated_wavelet, norm_bound_ratio, LinearMap,
};

fn main() -> sugar::Result<()> {
    let (n1, n2) = (32, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ops: Vec<(&str, Box<dyn LinearMap>)> = vec![
        (
            "mask",
            Box::new(make_mask(n1 * n2, &(0..n1 * n2).step_by(3).collect::<Vec<_>>())?),
        ),
        (
            "blur",
            Box::new(make_periodic_convolution(
                n1,
                n2,
                &gaussian_kernel(n1, n2, 1.4),
                &lowpass_frequency_mask(n1, n2, 1.0),
            )?),
        ),
        ("random sensing", Box::new(make_random_sensing(n1, n2, 0.4, &mut rng)?)),
        ("gradient", Box::new(make_discrete_gradient(n1, n2)?)),
        ("wavelet", Box::new(make_undecimated_wavelet(n1, n2, 2)?)),
    ];
    for (name, op) in &ops {
        println!(
            "{name:>15}: {} -> {}, adjoint mismatch {:.1e}, |Ax|/(bound |x|) <= {:.3}",
            op.in_dim(),
            op.out_dim(),
            adjoint_mismatch(op.as_ref(), 10, &mut rng),
            norm_bound_ratio(op.as_ref(), 10, &mut rng)
        );
    }
    Ok(())
}
