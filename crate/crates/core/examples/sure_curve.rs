//! SURE with a single finite-difference probe next to the true loss, and
//! the gradient estimate, along the soft-thresholding regularization path.

use sugar::experiments::{build_denoise_st, Experiment, ExperimentConfig};

fn main() -> sugar::Result<()> {
    let problem = build_denoise_st(&ExperimentConfig::defaults(Experiment::DenoiseSt))?;
    println!("{:>10} {:>12} {:>12} {:>12}", "lambda", "SURE", "true loss", "gradient");
    for row in problem.risk_curve(0.1, 10.0, 9)? {
        let (_, report) = problem.evaluate(&row.theta, true)?;
        let g = report.sugar_gradient.unwrap_or_default();
        println!(
            "{:>10.4} {:>12.2} {:>12.2} {:>12.2}",
            row.theta[0], row.sure, row.true_loss, g[0]
        );
    }
    Ok(())
}
