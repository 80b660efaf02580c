//! Forward-mode Jacobian of a TV deblurring solve in the regularization
//! weight, checked against finite differences of the whole solve.

use sugar::experiments::{build_tv_deblur, jacobian_report, Experiment, ExperimentConfig};

fn main() -> sugar::Result<()> {
    let mut config = ExperimentConfig::defaults(Experiment::TvDeblur);
    config.n1 = 16;
    config.n2 = 16;
    config.rects = 4;
    let problem = build_tv_deblur(&config)?;
    for scale in [0.5, 1.0, 2.0] {
        let theta: Vec<f64> = problem.lambda0.values().iter().map(|l| l * scale).collect();
        let r = jacobian_report("tv", problem.scheme.as_ref(), &problem.y, &theta)?;
        println!(
            "lambda = {:.4}: relative error {:.2e} (pass {})",
            theta[0], r.rel_error, r.pass
        );
    }
    Ok(())
}
