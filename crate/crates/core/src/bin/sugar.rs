use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sugar::experiments::{
    run_denoise_st, run_matcomp, run_oracle_suite, run_st_analytics, run_tv_deblur, run_wavelet_cs, Experiment,
    ExperimentConfig,
};
use sugar::Result;

#[derive(Parser)]
#[command(name = "sugar", version, about = "Risk-driven tuning of regularization parameters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Nuclear-norm matrix completion.
    Matcomp(Common),
    /// Total-variation deblurring.
    TvDeblur(Common),
    /// Multi-scale wavelet analysis for compressed sensing.
    WaveletCs(Common),
    /// Bias/variance study of the soft-thresholding gradient estimator.
    StAnalytics(Common),
    /// Soft-thresholding denoising.
    DenoiseSt(Common),
    /// Brute-force checks of derivatives and risk estimates.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    eps_c: Option<f64>,
    #[arg(long)]
    eps_alpha: Option<f64>,
    /// prediction, projection or estimation.
    #[arg(long)]
    risk_mode: Option<String>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Large problem sizes (slow).
    #[arg(long)]
    full_scale: bool,
    /// Any other configuration key, as `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn load(&self, experiment: Experiment) -> Result<ExperimentConfig> {
        let mut overrides: Vec<(String, String)> = Vec::new();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| sugar::Error::config(format!("--set expects key=value, got {s:?}")))?;
            overrides.push((k.to_string(), v.to_string()));
        }
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                overrides.push((k.to_string(), v));
            }
        };
        push("sigma", self.sigma.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("iters", self.iters.map(|v| v.to_string()));
        push("eps_c", self.eps_c.map(|v| v.to_string()));
        push("eps_alpha", self.eps_alpha.map(|v| v.to_string()));
        push("risk_mode", self.risk_mode.clone());
        overrides.push(("out_dir".into(), self.out_dir.display().to_string()));
        ExperimentConfig::load(experiment, self.full_scale, self.config.as_deref(), &overrides)
    }
}

fn run(cli: Cli) -> Result<()> {
    let (experiment, common) = match &cli.command {
        Command::Matcomp(c) => (Experiment::Matcomp, c),
        Command::TvDeblur(c) => (Experiment::TvDeblur, c),
        Command::WaveletCs(c) => (Experiment::WaveletCs, c),
        Command::StAnalytics(c) => (Experiment::StAnalytics, c),
        Command::DenoiseSt(c) => (Experiment::DenoiseSt, c),
        Command::Oracle(c) => (Experiment::DenoiseSt, c),
    };
    let config = common.load(experiment)?;
    let dir = common.out_dir.clone();
    match cli.command {
        Command::Oracle(_) => {
            let reports = run_oracle_suite(&config)?;
            let mut failed = 0;
            for r in &reports {
                println!("{}", serde_json::to_string(r)?);
                failed += usize::from(!r.pass);
            }
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("oracle.json"), serde_json::to_string_pretty(&reports)?)?;
            if failed > 0 {
                return Err(sugar::Error::numerical(format!("{failed} oracle check(s) failed")));
            }
        }
        Command::StAnalytics(_) => {
            let out = run_st_analytics(&config)?;
            out.write(&dir)?;
            println!("{}", serde_json::to_string_pretty(&out.summary)?);
        }
        cmd => {
            let out = match cmd {
                Command::Matcomp(_) => run_matcomp(&config)?,
                Command::TvDeblur(_) => run_tv_deblur(&config)?,
                Command::WaveletCs(_) => run_wavelet_cs(&config)?,
                _ => run_denoise_st(&config)?,
            };
            out.write(&dir)?;
            println!("{}", serde_json::to_string_pretty(&out.record)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
