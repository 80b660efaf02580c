//! Randomized degrees of freedom of a linear smoother against its exact
//! trace.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sugar::operators::{make_risk_weight, Identity, RiskMode};
use sugar::oracles::McEstimate;
use sugar::risk::dof_mc;
use sugar::Vector;

fn main() -> sugar::Result<()> {
    let p = 128;
    // Periodic moving average over 5 samples.
    let m = DMatrix::from_fn(p, p, |i, j| {
        let d = (i as isize - j as isize).rem_euclid(p as isize);
        if d <= 2 || d >= p as isize - 2 {
            0.2
        } else {
            0.0
        }
    });
    let weight = make_risk_weight(RiskMode::Prediction, std::sync::Arc::new(Identity::new(p)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for probes in [10, 100, 1000, 10_000] {
        let samples: Vec<f64> = (0..probes)
            .map(|_| {
                let delta = Vector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
                dof_mc(&(&m * &delta), &delta, &weight).expect("matching sizes")
            })
            .collect();
        let est = McEstimate::from_samples(&samples);
        println!(
            "{probes:>6} probes: {:.3} +- {:.3} (exact {:.3})",
            est.mean,
            est.std_error,
            m.trace()
        );
    }
    Ok(())
}
