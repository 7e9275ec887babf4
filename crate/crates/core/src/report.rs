//! Per-run and batch summaries written by the CLI.

use serde::{Deserialize, Serialize};

use crate::analysis::{KeyMetrics, Strategy};
use crate::config::B92Config;
use crate::error::{Error, Result};
use crate::protocol::{analyze, histograms, RunMetadata, RunOutput, StrategyResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
}

impl Stat {
    /// Mean and sample standard deviation.
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        Some(Stat { mean, sd })
    }
}

/// Outcome of one strategy on one run: metrics or the reason it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok(StrategyResult),
    Infeasible(String),
}

impl Outcome {
    pub fn metrics(&self) -> Option<&KeyMetrics> {
        match self {
            Outcome::Ok(r) => Some(&r.metrics),
            Outcome::Infeasible(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub metadata: RunMetadata,
    pub herald_count: usize,
    pub d0_count: usize,
    pub d1_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy_a: Option<Outcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy_b: Option<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub feasible_runs: usize,
    pub key_rate_khz: Option<Stat>,
    pub qber_pct: Option<Stat>,
    pub asymmetry_pct: Option<Stat>,
}

impl StrategySummary {
    fn of<'a>(outcomes: impl Iterator<Item = &'a Outcome>) -> Self {
        let m: Vec<&KeyMetrics> = outcomes.filter_map(Outcome::metrics).collect();
        let col = |f: fn(&KeyMetrics) -> f64| Stat::of(&m.iter().map(|k| f(k)).collect::<Vec<_>>());
        Self {
            feasible_runs: m.len(),
            key_rate_khz: col(|k| k.key_rate_khz),
            qber_pct: col(|k| k.qber_pct),
            asymmetry_pct: col(|k| k.asymmetry_pct),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub master_seed: u64,
    pub iterations: usize,
    pub duration_s: f64,
    pub qber_threshold_pct: f64,
    pub runs: Vec<IterationRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy_a: Option<StrategySummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy_b: Option<StrategySummary>,
}

impl Summary {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serialises");
        s.push('\n');
        s
    }

    /// True when some run had no feasible window for a requested strategy.
    pub fn any_infeasible(&self) -> bool {
        self.runs.iter().any(|r| {
            [&r.strategy_a, &r.strategy_b].iter().any(|o| matches!(o, Some(Outcome::Infeasible(_))))
        })
    }
}

fn outcome(cfg: &B92Config, hist: &crate::analysis::PeakHistograms, s: Strategy) -> Result<Outcome> {
    match analyze(cfg, hist, s) {
        Ok(r) => Ok(Outcome::Ok(r)),
        Err(e @ (Error::Infeasible(_) | Error::PeaksUnresolved(_) | Error::EmptyKey)) => Ok(Outcome::Infeasible(e.to_string())),
        Err(e) => Err(e),
    }
}

/// Analyses every run with the requested strategies.
pub fn summarize(cfg: &B92Config, outputs: &[RunOutput], strategies: &[Strategy]) -> Result<Summary> {
    let mut runs = Vec::with_capacity(outputs.len());
    for (i, out) in outputs.iter().enumerate() {
        let hist = histograms(cfg, out);
        let pick = |s: Strategy| -> Result<Option<Outcome>> {
            if strategies.contains(&s) {
                outcome(cfg, &hist, s).map(Some)
            } else {
                Ok(None)
            }
        };
        runs.push(IterationRecord {
            iteration: i,
            metadata: out.metadata.clone(),
            herald_count: out.alice_herald.len(),
            d0_count: out.bob_d0.len(),
            d1_count: out.bob_d1.len(),
            strategy_a: pick(Strategy::A)?,
            strategy_b: pick(Strategy::B)?,
        });
    }
    let side = |s: Strategy, get: fn(&IterationRecord) -> &Option<Outcome>| {
        strategies.contains(&s).then(|| StrategySummary::of(runs.iter().filter_map(|r| get(r).as_ref())))
    };
    Ok(Summary {
        master_seed: cfg.file.run.seed,
        iterations: outputs.len(),
        duration_s: cfg.file.run.duration_s,
        qber_threshold_pct: cfg.file.analysis.qber_threshold_pct,
        strategy_a: side(Strategy::A, |r| &r.strategy_a),
        strategy_b: side(Strategy::B, |r| &r.strategy_b),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_uses_sample_sd() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.sd - 1.2909944487358056).abs() < 1e-15);
        assert_eq!(Stat::of(&[5.0]).unwrap().sd, 0.0);
        assert!(Stat::of(&[]).is_none());
    }
}
