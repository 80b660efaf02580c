use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, RNG_NAME};
use crate::error::Result;
use crate::oracles::log_grid;
use crate::st_analytics::{
    spearman, st_mse_surface, st_rule_curve, st_sugar_consistency_experiment, ConsistencyRow, EpsRule, MseCell,
    MseSurface, Mu0Model, DEFAULT_LAMBDA,
};

/// Step rules swept over P, as `(label, rule)`.
pub const RULES: [(&str, EpsRule); 4] = [
    ("alpha=0", EpsRule { c: 1.0, alpha: 0.0 }),
    ("alpha=0.3", EpsRule { c: 1.0, alpha: 0.3 }),
    ("alpha=1", EpsRule { c: 1.0, alpha: 1.0 }),
    ("alpha=2", EpsRule { c: 1.0, alpha: 2.0 }),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCurve {
    pub label: String,
    pub rule: EpsRule,
    pub cells: Vec<MseCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyTable {
    pub label: String,
    pub rows: Vec<ConsistencyRow>,
    /// Rank correlation between P and the RMS normalized error.
    pub spearman: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StSummary {
    pub seed: u64,
    pub rng: String,
    pub sigma: f64,
    pub lambda: f64,
    pub mu0: Mu0Model,
    /// `(P, argmin eps / sigma)` for each P of the surface.
    pub argmin: Vec<(usize, f64)>,
    /// Whether the minimizer is strictly inside the step grid.
    pub interior: Vec<bool>,
    /// Max over min of the MSE along each rule curve.
    pub rule_spread: Vec<(String, f64)>,
    pub spearman: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct StAnalyticsOutput {
    pub surface: MseSurface,
    pub rules: Vec<RuleCurve>,
    pub consistency: Vec<ConsistencyTable>,
    pub summary: StSummary,
}

pub fn surface_dims(full_scale: bool) -> Vec<usize> {
    let top = if full_scale { 6 } else { 5 };
    (2..=top).map(|k| 10usize.pow(k)).collect()
}

pub fn run_st_analytics(config: &ExperimentConfig) -> Result<StAnalyticsOutput> {
    let sigma = config.sigma.unwrap_or(1.0);
    let lambda = DEFAULT_LAMBDA * sigma;
    let model = Mu0Model {
        gamma: config.mu0_gamma,
        peak: config.mu0_peak,
    };
    let full = config.p > 1 << 13;
    let dims = surface_dims(full);
    let steps = log_grid(1e-3 * sigma, 1.95 * lambda, 60);
    let surface = st_mse_surface(&model, sigma, lambda, &dims, &steps)?;

    let sweep: Vec<usize> = (4..=10).map(|k| 10f64.powf(k as f64 / 2.0).round() as usize).collect();
    let rules = RULES
        .iter()
        .map(|(label, rule)| {
            Ok(RuleCurve {
                label: label.to_string(),
                rule: *rule,
                cells: st_rule_curve(&model, sigma, lambda, *rule, &sweep)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let ps: Vec<usize> = (8..=14).map(|k| 1usize << k).collect();
    let admissible = EpsRule { c: 2.0, alpha: 0.3 };
    let inadmissible = EpsRule { c: 1.0, alpha: 2.0 };
    let mut consistency = Vec::new();
    for (label, rule) in [("eps=2*sigma*P^-0.3", admissible), ("eps=sigma*P^-2", inadmissible)] {
        let rows = st_sugar_consistency_experiment(
            &model,
            sigma,
            lambda,
            |p| rule.eval(sigma, p),
            &ps,
            config.replicates,
            config.seed,
        )?;
        let x: Vec<f64> = rows.iter().map(|r| r.p as f64).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.rms).collect();
        consistency.push(ConsistencyTable {
            label: label.to_string(),
            spearman: spearman(&x, &y),
            rows,
        });
    }

    let (lo, hi) = (steps[0], steps[steps.len() - 1]);
    let summary = StSummary {
        seed: config.seed,
        rng: RNG_NAME.to_string(),
        sigma,
        lambda,
        mu0: model,
        argmin: surface.argmin.iter().map(|c| (c.p, c.epsilon / sigma)).collect(),
        interior: surface
            .argmin
            .iter()
            .map(|c| c.epsilon > lo && c.epsilon < hi)
            .collect(),
        rule_spread: rules
            .iter()
            .map(|r| {
                let mses: Vec<f64> = r.cells.iter().map(|c| c.mse).collect();
                let max = mses.iter().copied().fold(f64::MIN, f64::max);
                let min = mses.iter().copied().fold(f64::MAX, f64::min);
                (r.label.clone(), max / min)
            })
            .collect(),
        spearman: consistency.iter().map(|t| (t.label.clone(), t.spearman)).collect(),
    };
    Ok(StAnalyticsOutput {
        surface,
        rules,
        consistency,
        summary,
    })
}

impl StAnalyticsOutput {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("result.json"), serde_json::to_string_pretty(&self.summary)?)?;

        let mut w = csv::Writer::from_path(dir.join("mse_surface.csv"))?;
        w.write_record(["p", "epsilon", "bias2", "variance", "mse", "argmin_epsilon"])?;
        for c in &self.surface.cells {
            let best = self
                .surface
                .argmin
                .iter()
                .find(|b| b.p == c.p)
                .map_or(f64::NAN, |b| b.epsilon);
            w.write_record([c.p as f64, c.epsilon, c.bias2, c.variance, c.mse, best].map(|v| format!("{v:e}")))?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("rule_curves.csv"))?;
        w.write_record(["rule", "c", "alpha", "p", "epsilon", "bias2", "variance", "mse"])?;
        for r in &self.rules {
            for c in &r.cells {
                w.write_record([
                    r.label.clone(),
                    format!("{:e}", r.rule.c),
                    format!("{:e}", r.rule.alpha),
                    c.p.to_string(),
                    format!("{:e}", c.epsilon),
                    format!("{:e}", c.bias2),
                    format!("{:e}", c.variance),
                    format!("{:e}", c.mse),
                ])?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("consistency.csv"))?;
        w.write_record([
            "rule",
            "p",
            "epsilon",
            "true_gradient",
            "mean_error",
            "std_error",
            "rms",
            "replicates",
        ])?;
        for t in &self.consistency {
            for r in &t.rows {
                w.write_record([
                    t.label.clone(),
                    r.p.to_string(),
                    format!("{:e}", r.epsilon),
                    format!("{:e}", r.true_gradient),
                    format!("{:e}", r.error.mean),
                    format!("{:e}", r.error.std_error),
                    format!("{:e}", r.rms),
                    r.error.replicates.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
