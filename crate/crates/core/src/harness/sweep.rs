//! Gain sweeps over `(variant, gamma)` and the `mu_max` table.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{derive_seed, run_scenario, AverageErrors, GroundTruth, Scenario};
use crate::error::{Error, Result};
use crate::gains::{mu_sweep, optimal_gains, MuSample, SweptGain};
use crate::observers::ObserverVariant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variant: ObserverVariant,
    pub gamma: f64,
    pub seed: u64,
    pub settle_time_s: Option<f64>,
    pub post_settle_errors: Option<AverageErrors>,
    pub steady_state_errors: Option<AverageErrors>,
    /// Failure message when the run did not complete.
    pub error: Option<String>,
}

/// Settle-time shape of one variant's sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepShape {
    pub variant: ObserverVariant,
    pub argmin_gamma: Option<f64>,
    /// Both ends settle strictly slower than the minimum.
    pub decrease_then_increase: bool,
}

/// Runs every `(variant, gamma)` pair concurrently; failures stay in their row.
pub fn run_sweep(
    scenario: &Scenario,
    truth: &GroundTruth,
    variants: &[ObserverVariant],
    gammas: &[f64],
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if gammas.is_empty() || gammas.iter().any(|g| !(*g > 0.0)) || gammas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Configuration("sweep gammas must be positive and ascending".into()));
    }
    let jobs: Vec<(ObserverVariant, f64, u64)> = variants
        .iter()
        .flat_map(|v| gammas.iter().map(move |g| (*v, *g)))
        .enumerate()
        .map(|(i, (v, g))| (v, g, derive_seed(seed, i as u64)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(variant, gamma, seed)| match run_scenario(scenario, truth, variant, gamma, seed) {
            Ok(out) => SweepRow {
                variant,
                gamma,
                seed,
                settle_time_s: out.report.settle_time_s,
                post_settle_errors: Some(out.report.post_settle_errors),
                steady_state_errors: Some(out.report.steady_state_errors),
                error: None,
            },
            Err(e) => SweepRow {
                variant,
                gamma,
                seed,
                settle_time_s: None,
                post_settle_errors: None,
                steady_state_errors: None,
                error: Some(e.to_string()),
            },
        })
        .collect())
}

/// Unsettled or failed runs rank as infinitely slow.
fn settle_or_inf(row: &SweepRow) -> f64 {
    row.settle_time_s.unwrap_or(f64::INFINITY)
}

pub fn sweep_shapes(rows: &[SweepRow]) -> Vec<SweepShape> {
    let mut variants: Vec<ObserverVariant> = Vec::new();
    for r in rows {
        if !variants.contains(&r.variant) {
            variants.push(r.variant);
        }
    }
    variants
        .into_iter()
        .map(|variant| {
            let mut mine: Vec<&SweepRow> = rows.iter().filter(|r| r.variant == variant).collect();
            mine.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
            let best = mine
                .iter()
                .filter(|r| r.settle_time_s.is_some())
                .min_by(|a, b| settle_or_inf(a).total_cmp(&settle_or_inf(b)));
            let decrease_then_increase = match (best, mine.first(), mine.last()) {
                (Some(b), Some(f), Some(l)) if mine.len() >= 3 => {
                    settle_or_inf(f) > settle_or_inf(b) && settle_or_inf(l) > settle_or_inf(b)
                }
                _ => false,
            };
            SweepShape {
                variant,
                argmin_gamma: best.map(|b| b.gamma),
                decrease_then_increase,
            }
        })
        .collect()
}

/// `mu_max` along the configured gain scale for the truth model's section.
pub fn mu_table(scenario: &Scenario) -> Result<Vec<MuSample>> {
    let g = scenario
        .config
        .gains
        .as_ref()
        .ok_or_else(|| Error::Configuration("the gains subcommand needs a [gains] section".into()))?;
    let p = &scenario.truth_params;
    let (m, k) = (p.inertia[0], p.stiffness[0]);
    let (g0, g1) = optimal_gains(&m, &k)?;
    let which = if g.which == "base" { SweptGain::Base } else { SweptGain::Tip };
    let reference = g.reference.resolve(if which == SweptGain::Base { &g0 } else { &g1 });
    mu_sweep(&m, &k, p.length, &reference, &g.gammas, which)
}
