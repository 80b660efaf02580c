use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autotune::TuneConfig;
use crate::error::{Error, Result};
use crate::operators::RiskMode;
use crate::solvers::{Estimator, DEFAULT_ITERS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Matcomp,
    TvDeblur,
    WaveletCs,
    StAnalytics,
    DenoiseSt,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Matcomp,
        Experiment::TvDeblur,
        Experiment::WaveletCs,
        Experiment::StAnalytics,
        Experiment::DenoiseSt,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Experiment::Matcomp => "matcomp",
            Experiment::TvDeblur => "tv-deblur",
            Experiment::WaveletCs => "wavelet-cs",
            Experiment::StAnalytics => "st-analytics",
            Experiment::DenoiseSt => "denoise-st",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.tag() == s)
            .ok_or_else(|| Error::config(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sensing {
    Random,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Wavelet,
    Identity,
}

/// Every knob of a pipeline run. Built from per-experiment defaults, then a
/// `key = value` file, then command-line overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n1: usize,
    pub n2: usize,
    /// Signal length for the soft-thresholding experiments.
    pub p: usize,
    /// Decay `mu0_i ~ peak * sigma * i^(-1/gamma)` of the synthetic sequence.
    pub mu0_gamma: f64,
    pub mu0_peak: f64,
    pub scales: usize,
    pub per_scale: bool,
    /// `None` lets the pipeline pick its calibrated level.
    pub sigma: Option<f64>,
    pub observe_ratio: f64,
    pub blur_std: f64,
    pub keep_fraction: f64,
    pub rects: usize,
    pub sensing: Sensing,
    pub transform: Transform,
    pub iters: usize,
    /// GFB step `nu` or primal-dual step; `None` picks a safe default.
    pub step: Option<f64>,
    /// Primal over dual step for the primal-dual solver.
    pub step_ratio: f64,
    pub estimator: Estimator,
    pub eps_c: f64,
    pub eps_alpha: f64,
    pub risk_mode: RiskMode,
    pub alpha_init: f64,
    pub stop_ratio: f64,
    pub step_tol: f64,
    pub max_iters: usize,
    pub multi_start: bool,
    pub grid_points: usize,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub replicates: usize,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let mut c = ExperimentConfig {
            experiment,
            n1: 64,
            n2: 64,
            p: 256,
            mu0_gamma: crate::st_analytics::DEFAULT_GAMMA,
            mu0_peak: crate::st_analytics::DEFAULT_PEAK,
            scales: 1,
            per_scale: true,
            sigma: None,
            observe_ratio: 0.5,
            blur_std: 1.4,
            keep_fraction: 0.2,
            rects: 8,
            sensing: Sensing::Random,
            transform: Transform::Wavelet,
            iters: DEFAULT_ITERS,
            step: None,
            step_ratio: 1.0,
            estimator: Estimator::Fdmc,
            eps_c: 2.0,
            eps_alpha: 0.3,
            risk_mode: RiskMode::Prediction,
            alpha_init: 0.9,
            stop_ratio: 0.02,
            step_tol: 3e-2,
            max_iters: 50,
            multi_start: false,
            grid_points: 12,
            grid_lo: 1e-2,
            grid_hi: 1e2,
            replicates: 100,
            seed: 0,
            input: None,
            out_dir: None,
        };
        match experiment {
            Experiment::Matcomp => {
                c.n1 = 300;
                c.n2 = 60;
                c.observe_ratio = 0.25;
            }
            Experiment::TvDeblur => {
                c.risk_mode = RiskMode::Projection;
                c.sigma = Some(10.0);
            }
            Experiment::WaveletCs => {
                c.sigma = Some(10.0);
                c.scales = 2;
                c.iters = 200;
                c.step_ratio = 100.0;
            }
            Experiment::StAnalytics => {
                c.sigma = Some(1.0);
            }
            Experiment::DenoiseSt => {
                c.sigma = Some(1.0);
                c.mu0_gamma = 2.0;
                c.mu0_peak = 10.0;
            }
        }
        c
    }

    /// Large problems: 1000x100 matrices, 512x512 images. Runtimes are long
    /// (see the README).
    pub fn apply_full_scale(&mut self) {
        match self.experiment {
            Experiment::Matcomp => {
                self.n1 = 1000;
                self.n2 = 100;
            }
            Experiment::TvDeblur | Experiment::WaveletCs => {
                self.n1 = 512;
                self.n2 = 512;
            }
            Experiment::StAnalytics | Experiment::DenoiseSt => self.p = 1 << 14,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::config(format!("invalid value {v:?} for {key}")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(Error::config(format!("invalid boolean {v:?} for {key}"))),
            }
        }
        let v = value.trim();
        match key.trim().replace('-', "_").as_str() {
            "experiment" => {
                let e: Experiment = v.parse()?;
                if e != self.experiment {
                    return Err(Error::config(format!(
                        "config is for {e} but {} was requested",
                        self.experiment
                    )));
                }
            }
            "n1" => self.n1 = num(key, v)?,
            "n2" => self.n2 = num(key, v)?,
            "p" => self.p = num(key, v)?,
            "mu0_gamma" => self.mu0_gamma = num(key, v)?,
            "mu0_peak" => self.mu0_peak = num(key, v)?,
            "scales" => self.scales = num(key, v)?,
            "per_scale" => self.per_scale = flag(key, v)?,
            "sigma" => self.sigma = Some(num(key, v)?),
            "observe_ratio" => self.observe_ratio = num(key, v)?,
            "blur_std" => self.blur_std = num(key, v)?,
            "keep_fraction" => self.keep_fraction = num(key, v)?,
            "rects" => self.rects = num(key, v)?,
            "sensing" => {
                self.sensing = match v {
                    "random" => Sensing::Random,
                    "identity" => Sensing::Identity,
                    _ => return Err(Error::config(format!("unknown sensing {v:?}"))),
                }
            }
            "transform" => {
                self.transform = match v {
                    "wavelet" => Transform::Wavelet,
                    "identity" => Transform::Identity,
                    _ => return Err(Error::config(format!("unknown transform {v:?}"))),
                }
            }
            "iters" => self.iters = num(key, v)?,
            "step" => self.step = Some(num(key, v)?),
            "step_ratio" => self.step_ratio = num(key, v)?,
            "estimator" => {
                self.estimator = match v.to_ascii_lowercase().as_str() {
                    "fdmc" => Estimator::Fdmc,
                    "mc" => Estimator::Mc,
                    _ => return Err(Error::config(format!("unknown estimator {v:?}"))),
                }
            }
            "eps_c" => self.eps_c = num(key, v)?,
            "eps_alpha" => self.eps_alpha = num(key, v)?,
            "risk_mode" => self.risk_mode = v.parse()?,
            "alpha_init" => self.alpha_init = num(key, v)?,
            "stop_ratio" => self.stop_ratio = num(key, v)?,
            "step_tol" => self.step_tol = num(key, v)?,
            "max_iters" => self.max_iters = num(key, v)?,
            "multi_start" => self.multi_start = flag(key, v)?,
            "grid_points" => self.grid_points = num(key, v)?,
            "grid_lo" => self.grid_lo = num(key, v)?,
            "grid_hi" => self.grid_hi = num(key, v)?,
            "replicates" => self.replicates = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "input" => self.input = Some(PathBuf::from(v)),
            "out_dir" => self.out_dir = Some(PathBuf::from(v)),
            other => return Err(Error::config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every non-empty, non-comment `key = value` line.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", no + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Defaults, then the optional full-scale preset, then `file`, then
    /// `overrides` in order.
    pub fn load(
        experiment: Experiment,
        full_scale: bool,
        file: Option<&Path>,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let mut c = Self::defaults(experiment);
        if full_scale {
            c.apply_full_scale();
        }
        if let Some(path) = file {
            c.apply_text(&std::fs::read_to_string(path)?)?;
        }
        for (k, v) in overrides {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 || self.p == 0 || self.scales == 0 || self.iters == 0 {
            return Err(Error::config("sizes, scales and iteration counts must be positive"));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::config(format!("sigma must be positive, got {s}")));
            }
        }
        if !(self.observe_ratio > 0.0 && self.observe_ratio <= 1.0) {
            return Err(Error::config("observe_ratio must lie in (0, 1]"));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::config("keep_fraction must lie in (0, 1]"));
        }
        if !(self.eps_c > 0.0 && self.eps_alpha >= 0.0) {
            return Err(Error::config("epsilon rule needs eps_c > 0 and eps_alpha >= 0"));
        }
        if !(self.step_ratio > 0.0) || !self.step_ratio.is_finite() {
            return Err(Error::config("step_ratio must be positive"));
        }
        if !(self.mu0_gamma > 0.0 && self.mu0_peak >= 0.0) {
            return Err(Error::config("mu0_gamma must be positive and mu0_peak nonnegative"));
        }
        if self.grid_points < 2 || !(self.grid_lo > 0.0 && self.grid_lo < self.grid_hi) {
            return Err(Error::config(
                "risk curve grid needs >= 2 points and 0 < grid_lo < grid_hi",
            ));
        }
        if self.experiment == Experiment::WaveletCs && self.scales > 3 {
            return Err(Error::config("wavelet-cs supports at most 3 scales"));
        }
        self.tune_config().validate()
    }

    pub fn tune_config(&self) -> TuneConfig {
        TuneConfig {
            alpha_init: self.alpha_init,
            stop_ratio: self.stop_ratio,
            step_tol: self.step_tol,
            max_outer_iters: self.max_iters,
            ..TuneConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_cli_over_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.txt");
        std::fs::write(&path, "# comment\nsigma = 3.5\nseed=7\niters = 40 # trailing\n").unwrap();
        let c =
            ExperimentConfig::load(Experiment::TvDeblur, false, Some(&path), &[("seed".into(), "9".into())]).unwrap();
        assert_eq!(c.sigma, Some(3.5));
        assert_eq!(c.seed, 9);
        assert_eq!(c.iters, 40);
        assert_eq!(c.risk_mode, RiskMode::Projection);
    }

    #[test]
    fn rejects_bad_input() {
        let mut c = ExperimentConfig::defaults(Experiment::Matcomp);
        assert!(c.set("nonsense", "1").is_err());
        assert!(c.set("sigma", "abc").is_err());
        assert!(c.set("experiment", "tv-deblur").is_err());
        c.set("sigma", "-1").unwrap();
        assert!(c.validate().is_err());
        assert!(c.apply_text("just words").is_err());
    }

    #[test]
    fn experiment_tags_roundtrip() {
        for e in Experiment::ALL {
            assert_eq!(e.tag().parse::<Experiment>().unwrap(), e);
        }
    }
}
