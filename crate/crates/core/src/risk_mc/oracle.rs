use itertools::Itertools;
use serde::{Deserialize, Serialize};

use super::{score, BinEdges, McConfig, OutageModel, RiskError, RiskEstimate};
use crate::dispatch::DispatchSolution;
use crate::grid_model::GridCase;

/// Largest number of contingencies [`exhaustive_risk`] will enumerate.
pub const MAX_ENUMERATED: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityForm {
    /// `Π p_i · Π (1 − p_j)`: the exact probability of this outage set.
    #[default]
    Full,
    /// `Π p_i` over the outaged branches only.
    ProductOnly,
}

/// Probability that more than `max_k` branches are out at once.
pub fn unenumerated_mass(model: &OutageModel, max_k: usize) -> f64 {
    // dist[k] = P(exactly k outages) over the branches seen so far
    let mut dist = vec![1.0];
    for &p in model.p_fail.iter().filter(|&&p| p > 0.0) {
        let mut next = vec![0.0; dist.len() + 1];
        for (k, &d) in dist.iter().enumerate() {
            next[k] += d * (1.0 - p);
            next[k + 1] += d * p;
        }
        dist = next;
    }
    dist.iter().skip(max_k + 1).fold(0.0, |a, b| a + b)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact risk over every contingency of at most `max_k` branches. Orders
/// below the simulation threshold of `config` score zero, as in sampling.
pub fn exhaustive_risk(
    case: &GridCase,
    dispatch: &DispatchSolution,
    model: &OutageModel,
    max_k: usize,
    bins: &BinEdges,
    config: &McConfig,
    form: ProbabilityForm,
) -> Result<RiskEstimate, RiskError> {
    if model.p_fail.len() != case.branches.len() {
        return Err(RiskError::Domain("outage model does not match the case".into()));
    }
    let served = dispatch.total_served();
    if !(served > 0.0) {
        return Err(RiskError::Domain("dispatch serves no load".into()));
    }
    let candidates: Vec<usize> = (0..model.p_fail.len()).filter(|&i| model.p_fail[i] > 0.0).collect();
    let max_k = max_k.min(candidates.len());
    let count: f64 = (0..=max_k).map(|k| binomial(candidates.len(), k)).sum();
    if count > MAX_ENUMERATED {
        return Err(RiskError::TooManyContingencies { count, limit: MAX_ENUMERATED });
    }
    let nb = bins.len();
    let mut bin_risk = vec![0.0; nb];
    let mut counts = vec![0u64; nb];
    let mut iteration = 0u64;
    for k in config.min_order().max(1)..=max_k {
        for combo in candidates.iter().copied().combinations(k) {
            let probability = match form {
                ProbabilityForm::ProductOnly => combo.iter().map(|&i| model.p_fail[i]).product(),
                ProbabilityForm::Full => {
                    let mut pr = 1.0;
                    let mut next = combo.iter().peekable();
                    for &i in &candidates {
                        if next.peek() == Some(&&i) {
                            next.next();
                            pr *= model.p_fail[i];
                        } else {
                            pr *= 1.0 - model.p_fail[i];
                        }
                    }
                    pr
                }
            };
            let mw = score(case, dispatch, &combo, config, iteration)?;
            iteration += 1;
            if mw > 0.0 {
                let b = bins.bin_of(mw / served);
                bin_risk[b] += probability * mw;
                counts[b] += 1;
            }
        }
    }
    Ok(RiskEstimate {
        n_iterations: 0,
        expected_blackout_mw: bin_risk.iter().sum(),
        bin_edges: bins.clone(),
        bin_risk_mw: bin_risk,
        bin_event_counts: counts,
        standard_error_mw: vec![0.0; nb],
        total_standard_error_mw: 0.0,
        seed: 0,
        served_load_mw: served,
        unenumerated_probability: Some(unenumerated_mass(model, max_k)),
    })
}
