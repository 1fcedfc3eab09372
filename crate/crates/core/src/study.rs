//! Repeated identifications: window sweeps, Monte Carlo noise studies, and
//! the result file written after a single run.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, StorageEstimate};
use crate::error::{Error, Result};
use crate::identify::{identify, Diagnostics, Identification, IdentifyOptions, SupplyKind};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeptTerm {
    pub index: usize,
    pub term: String,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedSummary {
    pub threshold: f64,
    pub mask: Vec<bool>,
    pub kept_terms: Vec<KeptTerm>,
}

/// Everything one identification run produces, in a form that can be read
/// back into a [`StorageEstimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyResult {
    pub status: RunStatus,
    pub dictionary: Dictionary,
    /// Empty when infeasible.
    pub theta: Vec<f64>,
    pub margin: Option<f64>,
    pub supply_kind: SupplyKind,
    #[serde(rename = "T")]
    pub window: usize,
    pub structural: bool,
    pub constraint_count: usize,
    pub cuts_added: usize,
    pub pruned: Option<PrunedSummary>,
    pub diagnostics: Option<Diagnostics>,
    pub certificate: Option<String>,
}

impl IdentifyResult {
    /// Prunes a feasible outcome at `prune_threshold`.
    pub fn from_identification(
        id: &Identification,
        dict: &Dictionary,
        opts: &IdentifyOptions,
        prune_threshold: f64,
    ) -> Result<Self> {
        match id {
            Identification::Estimate(est) => {
                let pruned = est.prune(prune_threshold)?;
                let mask = pruned.pruned_mask.clone().expect("prune sets a mask");
                let kept_terms = mask
                    .iter()
                    .enumerate()
                    .filter(|(_, &k)| k)
                    .map(|(i, _)| KeptTerm {
                        index: i,
                        term: dict.features()[i].to_string(),
                        coefficient: est.theta[i],
                    })
                    .collect();
                Ok(Self {
                    status: RunStatus::Optimal,
                    dictionary: dict.clone(),
                    theta: est.theta.clone(),
                    margin: Some(est.margin),
                    supply_kind: est.supply_kind,
                    window: opts.window,
                    structural: opts.structural,
                    constraint_count: est.diagnostics.constraint_count,
                    cuts_added: est.diagnostics.cuts_added,
                    pruned: Some(PrunedSummary { threshold: prune_threshold, mask, kept_terms }),
                    diagnostics: Some(est.diagnostics.clone()),
                    certificate: None,
                })
            }
            Identification::Infeasible(rep) => Ok(Self {
                status: RunStatus::Infeasible,
                dictionary: dict.clone(),
                theta: Vec::new(),
                margin: None,
                supply_kind: rep.supply,
                window: rep.window,
                structural: rep.structural,
                constraint_count: rep.constraint_count,
                cuts_added: 0,
                pruned: None,
                diagnostics: None,
                certificate: Some(rep.summary()),
            }),
        }
    }

    /// The pruned estimate, or a degenerate-estimate error for an infeasible run.
    pub fn to_estimate(&self) -> Result<StorageEstimate> {
        let margin = match (self.status, self.margin) {
            (RunStatus::Optimal, Some(m)) => m,
            _ => return Err(Error::DegenerateEstimate("the result holds no storage function".into())),
        };
        let mut est = StorageEstimate::new(self.dictionary.clone(), self.theta.clone(), margin, self.supply_kind)?;
        if let Some(p) = &self.pruned {
            if p.mask.len() != est.theta.len() {
                return Err(Error::arg("pruning mask length does not match theta"));
            }
            est.pruned_mask = Some(p.mask.clone());
        }
        if let Some(d) = &self.diagnostics {
            est.diagnostics = d.clone();
        }
        Ok(est)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "T")]
    pub window: usize,
    pub status: RunStatus,
    pub margin: Option<f64>,
}

/// Identifies at each window size in turn.
pub fn feasibility_sweep(
    traj: &Trajectory,
    dict: &Dictionary,
    base: &IdentifyOptions,
    windows: &[usize],
) -> Result<Vec<SweepRow>> {
    if windows.is_empty() {
        return Err(Error::arg("window list is empty"));
    }
    windows
        .iter()
        .map(|&window| {
            let opts = IdentifyOptions { window, ..*base };
            let id = identify(traj, dict, &opts)?;
            Ok(match id {
                Identification::Estimate(e) => SweepRow { window, status: RunStatus::Optimal, margin: Some(e.margin) },
                Identification::Infeasible(_) => SweepRow { window, status: RunStatus::Infeasible, margin: None },
            })
        })
        .collect()
}

/// Smallest window from which every larger swept window is feasible.
pub fn transition_window(rows: &[SweepRow]) -> Option<usize> {
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.window);
    let mut first = None;
    for r in sorted {
        match r.status {
            RunStatus::Optimal => {
                first.get_or_insert(r.window);
            }
            RunStatus::Infeasible => first = None,
        }
    }
    first
}

/// `T,status,margin`, with an empty margin for infeasible windows.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("T,status,margin\n");
    for r in rows {
        let status = match r.status {
            RunStatus::Optimal => "optimal",
            RunStatus::Infeasible => "infeasible",
        };
        let margin = r.margin.map(|m| m.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{status},{margin}", r.window);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloPlan {
    pub runs: usize,
    /// Run `i` uses seed `seed_base + i`.
    pub seed_base: u64,
    pub sigma: f64,
    /// 0-based noisy state channel.
    pub channel: usize,
    pub prune_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRun {
    pub seed: u64,
    pub status: RunStatus,
    pub margin: Option<f64>,
    pub kept: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub runs: usize,
    pub feasible_runs: usize,
    pub margin_min: Option<f64>,
    pub margin_max: Option<f64>,
    pub margin_mean: Option<f64>,
    /// Number of feasible runs keeping each term, by term name.
    pub kept_frequency: BTreeMap<String, usize>,
    pub per_run: Vec<McRun>,
}

/// Independent noisy copies of `clean`, identified in parallel.
pub fn monte_carlo(
    clean: &Trajectory,
    dict: &Dictionary,
    opts: &IdentifyOptions,
    plan: &MonteCarloPlan,
) -> Result<MonteCarloSummary> {
    if plan.runs == 0 {
        return Err(Error::arg("Monte Carlo needs at least one run"));
    }
    let per_run: Vec<McRun> = (0..plan.runs)
        .into_par_iter()
        .map(|i| {
            let seed = plan.seed_base.wrapping_add(i as u64);
            let noisy = clean.add_measurement_noise(plan.channel, plan.sigma, seed)?;
            Ok(match identify(&noisy, dict, opts)? {
                Identification::Estimate(e) => {
                    let mask = e.prune(plan.prune_threshold)?.pruned_mask.expect("prune sets a mask");
                    let kept = mask.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect();
                    McRun { seed, status: RunStatus::Optimal, margin: Some(e.margin), kept }
                }
                Identification::Infeasible(_) => McRun { seed, status: RunStatus::Infeasible, margin: None, kept: Vec::new() },
            })
        })
        .collect::<Result<_>>()?;

    let margins: Vec<f64> = per_run.iter().filter_map(|r| r.margin).collect();
    let mut kept_frequency: BTreeMap<String, usize> =
        dict.features().iter().map(|f| (f.to_string(), 0)).collect();
    for r in &per_run {
        for &i in &r.kept {
            *kept_frequency.get_mut(&dict.features()[i].to_string()).expect("term listed") += 1;
        }
    }
    let (min, max, mean) = if margins.is_empty() {
        (None, None, None)
    } else {
        (
            Some(margins.iter().copied().fold(f64::INFINITY, f64::min)),
            Some(margins.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            Some(margins.iter().sum::<f64>() / margins.len() as f64),
        )
    };
    Ok(MonteCarloSummary {
        runs: plan.runs,
        feasible_runs: margins.len(),
        margin_min: min,
        margin_max: max,
        margin_mean: mean,
        kept_frequency,
        per_run,
    })
}
