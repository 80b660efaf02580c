//! End-to-end nuclear-norm matrix completion with automatic choice of the
//! threshold.

use sugar::experiments::{run_matcomp, Experiment, ExperimentConfig};

fn main() -> sugar::Result<()> {
    env_logger::init();
    let mut config = ExperimentConfig::defaults(Experiment::Matcomp);
    config.n1 = 150;
    config.n2 = 30;
    config.grid_points = 5;
    let out = run_matcomp(&config)?;
    let r = &out.record;
    println!(
        "lambda* = {:.4} after {} evaluations ({:?})",
        r.theta_star[0], r.evaluations, r.stop
    );
    println!(
        "relative error {:.3} (least squares {:.3}), rank {}",
        r.quality,
        r.baseline_quality,
        r.rank.unwrap_or(0)
    );
    Ok(())
}
