//! Batch execution of scenarios.

use follow_core::follower::{run_episode, RunRecord, Variant};
use rayon::prelude::*;

use crate::metrics::{compute_metrics, MetricsSummary};
use crate::scenario::{ConfigError, ScenarioConfig};

/// Runs every script and repeat of `cfg` with `variant`, in parallel over episodes.
///
/// Records come back ordered by script, then repeat.
pub fn run_scenario(cfg: &ScenarioConfig, variant: Variant) -> Result<Vec<RunRecord>, ConfigError> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.scripts.len())
        .flat_map(|s| (0..cfg.repeats).map(move |r| (s, r)))
        .collect();
    let setups = jobs
        .iter()
        .map(|&(s, r)| cfg.episode(s, r))
        .collect::<Result<Vec<_>, _>>()?;
    let records = jobs
        .par_iter()
        .zip(setups.par_iter())
        .map(|(&(script, repeat), setup)| {
            let mut rec = run_episode(setup, &cfg.follower, variant);
            rec.scenario = cfg.name.clone();
            rec.script = script;
            rec.repeat = repeat;
            log::debug!(
                "{}/{} script {script} repeat {repeat}: success {} collision {}",
                cfg.name,
                variant,
                rec.success,
                rec.collision
            );
            rec
        })
        .collect();
    Ok(records)
}

/// One row per variant, pooled over every scenario.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AblationTable {
    pub scenarios: Vec<String>,
    pub rows: Vec<(Variant, MetricsSummary)>,
}

impl AblationTable {
    pub fn row(&self, variant: Variant) -> Option<&MetricsSummary> {
        self.rows.iter().find(|(v, _)| *v == variant).map(|(_, m)| m)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<10} {:>8} {:>9} {:>11} {:>10} {:>10}\n",
            "variant", "episodes", "success", "loss_ratio", "collision", "distance"
        );
        for (v, m) in &self.rows {
            out.push_str(&format!(
                "{:<10} {:>8} {:>9.3} {:>11.3} {:>10.3} {:>10.3}\n",
                v.name(),
                m.episodes,
                m.follow_success_rate,
                m.avg_leader_loss_ratio,
                m.collision_rate,
                m.avg_distance
            ));
        }
        out
    }
}

/// Runs every variant over every scenario with identical seeds.
pub fn run_ablation_suite(cfgs: &[ScenarioConfig], variants: &[Variant]) -> Result<AblationTable, ConfigError> {
    let mut rows = Vec::new();
    for &v in variants {
        let mut all = Vec::new();
        for cfg in cfgs {
            all.extend(run_scenario(cfg, v)?);
        }
        let summary = compute_metrics(&all).ok_or_else(|| ConfigError::Invalid("no episodes to score".into()))?;
        log::info!("{v}: {summary:?}");
        rows.push((v, summary));
    }
    Ok(AblationTable {
        scenarios: cfgs.iter().map(|c| c.name.clone()).collect(),
        rows,
    })
}
