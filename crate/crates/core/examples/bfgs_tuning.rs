//! Quasi-Newton tuning of per-scale wavelet thresholds for compressed
//! sensing, driven by the gradient of the risk estimate.

use sugar::experiments::{build_wavelet_cs, Experiment, ExperimentConfig};

fn main() -> sugar::Result<()> {
    let config = ExperimentConfig::defaults(Experiment::WaveletCs);
    let problem = build_wavelet_cs(&config, true)?;
    let (res, _) = problem.tune(&config.tune_config(), false)?;
    for row in &res.trace.rows {
        println!(
            "eval {:>2}  theta {:?}  SURE {:.1}  |grad| {:.2e}{}",
            row.evaluation,
            row.theta.iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>(),
            row.value,
            row.grad_inf,
            if row.accepted { "" } else { "  (rejected)" }
        );
    }
    let (x, _) = problem.evaluate(&res.theta, false)?;
    println!(
        "stopped: {:?}; PSNR {:.2} dB vs least squares {:.2} dB",
        res.trace.stop,
        problem.quality_of(&x),
        problem.quality_of(&problem.x_ls)
    );
    Ok(())
}
