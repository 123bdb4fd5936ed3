//! Monte Carlo risk estimation over random multi-branch outages.
//!
//! Each iteration draws every branch out independently with probability
//! `λ / 8760`. Draws of fewer than two branches score zero without running
//! the simulator, because the operating point is n-1 secure; the rest run
//! through [`simulate_cascade`]. Risk is the mean blackout over all draws,
//! split into bins by blackout size as a fraction of the served load.
//!
//! Iteration `i` always uses the ChaCha8 stream `i` of the master seed, so the
//! draws do not depend on which worker runs them. Workers return their
//! nonzero blackouts, which are summed in iteration order; results are
//! therefore bit-identical for any worker count.

mod oracle;
mod sampling;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cascade_sim::{simulate_cascade, CascadeConfig, CascadeError};
use crate::dispatch::DispatchSolution;
use crate::grid_model::GridCase;

pub use oracle::{exhaustive_risk, unenumerated_mass, ProbabilityForm, MAX_ENUMERATED};
pub use sampling::{build_outage_model, iteration_rng, outage_probability, sample_contingency, Contingency, OutageModel, HOURS_PER_YEAR};

/// Iterations handed to a worker at a time.
const BLOCK: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid bin edges: {0}")]
    Bins(String),
    #[error("{count} contingencies exceed the enumeration limit of {limit}")]
    TooManyContingencies { count: f64, limit: f64 },
    #[error("iteration {iteration}, contingency {contingency:?}: {source}")]
    Cascade { iteration: u64, contingency: Vec<usize>, source: CascadeError },
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Blackout-size bin edges as fractions of the served load. Bin `k` covers
/// `[edges[k], edges[k+1])`; the last bin also includes its upper edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BinEdges(Vec<f64>);

impl BinEdges {
    pub fn new(edges: Vec<f64>) -> Result<Self, RiskError> {
        if edges.len() < 2 {
            return Err(RiskError::Bins("need at least two edges".into()));
        }
        if edges[0] != 0.0 {
            return Err(RiskError::Bins(format!("first edge must be 0, got {}", edges[0])));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(RiskError::Bins("edges must increase strictly".into()));
        }
        let last = edges[edges.len() - 1];
        if !(last >= 1.0 && last.is_finite()) {
            return Err(RiskError::Bins(format!("last edge must be at least 1, got {last}")));
        }
        Ok(BinEdges(edges))
    }

    /// 0, 5%, 25%, 50%, 100%.
    pub fn small_system() -> Self {
        BinEdges(vec![0.0, 0.05, 0.25, 0.5, 1.0])
    }

    /// 0, 10%, 20%, ..., 100%.
    pub fn deciles() -> Self {
        BinEdges((0..=10).map(|k| k as f64 / 10.0).collect())
    }

    pub fn edges(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Bin holding a blackout of `fraction` of the served load.
    pub fn bin_of(&self, fraction: f64) -> usize {
        let n = self.len();
        self.0[1..n].partition_point(|&e| e <= fraction)
    }
}

impl TryFrom<Vec<f64>> for BinEdges {
    type Error = RiskError;
    fn try_from(v: Vec<f64>) -> Result<Self, RiskError> {
        BinEdges::new(v)
    }
}

impl From<BinEdges> for Vec<f64> {
    fn from(b: BinEdges) -> Vec<f64> {
        b.0
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub cascade: CascadeConfig,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    /// Run single-branch draws through the simulator instead of scoring them zero.
    pub simulate_single_outages: bool,
}

impl McConfig {
    fn min_order(&self) -> usize {
        if self.simulate_single_outages {
            1
        } else {
            2
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    /// Draws, counting those with no outage. Zero for exact enumeration.
    pub n_iterations: u64,
    /// Total risk, MW; the sum of `bin_risk_mw`.
    pub expected_blackout_mw: f64,
    pub bin_edges: BinEdges,
    pub bin_risk_mw: Vec<f64>,
    /// Nonzero blackouts per bin.
    pub bin_event_counts: Vec<u64>,
    /// Standard error of each bin's risk, MW.
    pub standard_error_mw: Vec<f64>,
    pub total_standard_error_mw: f64,
    pub seed: u64,
    /// Pre-contingency served load the bins are relative to, MW.
    pub served_load_mw: f64,
    /// Probability of the contingencies left out of an exact enumeration.
    pub unenumerated_probability: Option<f64>,
}

impl RiskEstimate {
    /// CSV rows `level,bin_low,bin_high,risk_mw,events,stderr_mw,n_iterations,seed`.
    pub fn write_csv<W: Write>(&self, level: u32, writer: &mut csv::Writer<W>) -> csv::Result<()> {
        let edges = self.bin_edges.edges();
        for b in 0..self.bin_edges.len() {
            writer.write_record([
                level.to_string(),
                edges[b].to_string(),
                edges[b + 1].to_string(),
                self.bin_risk_mw[b].to_string(),
                self.bin_event_counts[b].to_string(),
                self.standard_error_mw[b].to_string(),
                self.n_iterations.to_string(),
                self.seed.to_string(),
            ])?;
        }
        Ok(())
    }

    pub const CSV_HEADER: [&'static str; 8] =
        ["level", "bin_low", "bin_high", "risk_mw", "events", "stderr_mw", "n_iterations", "seed"];
}

/// Standard error of a mean from the sums of values and squares over `n` draws.
fn standard_error(sum: f64, sum_sq: f64, n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (var / nf).sqrt()
}

/// Folds nonzero blackouts, in iteration order, into an estimate.
fn aggregate(events: &[McEvent], n: u64, bins: &BinEdges, served: f64, seed: u64) -> RiskEstimate {
    let nb = bins.len();
    let mut sum = vec![0.0; nb];
    let mut sum_sq = vec![0.0; nb];
    let mut counts = vec![0u64; nb];
    let (mut total, mut total_sq) = (0.0, 0.0);
    for e in events {
        let mw = e.blackout_mw;
        let b = bins.bin_of(mw / served);
        sum[b] += mw;
        sum_sq[b] += mw * mw;
        counts[b] += 1;
        total += mw;
        total_sq += mw * mw;
    }
    let nf = n as f64;
    let bin_risk_mw: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    RiskEstimate {
        n_iterations: n,
        expected_blackout_mw: bin_risk_mw.iter().sum(),
        bin_edges: bins.clone(),
        standard_error_mw: sum.iter().zip(&sum_sq).map(|(s, q)| standard_error(*s, *q, n)).collect(),
        total_standard_error_mw: standard_error(total, total_sq, n),
        bin_risk_mw,
        bin_event_counts: counts,
        seed,
        served_load_mw: served,
        unenumerated_probability: None,
    }
}

/// Blackout for one drawn contingency, zero below the simulation order.
fn score(
    case: &GridCase,
    dispatch: &DispatchSolution,
    contingency: &[usize],
    config: &McConfig,
    iteration: u64,
) -> Result<f64, RiskError> {
    if contingency.len() < config.min_order() {
        return Ok(0.0);
    }
    simulate_cascade(case, dispatch, contingency, &config.cascade)
        .map(|r| r.blackout_mw)
        .map_err(|source| RiskError::Cascade { iteration, contingency: contingency.to_vec(), source })
}

/// A draw that caused a nonzero blackout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEvent {
    pub iteration: u64,
    pub blackout_mw: f64,
}

/// Monte Carlo risk estimate from `n_iterations` independent draws.
pub fn run_monte_carlo(
    case: &GridCase,
    dispatch: &DispatchSolution,
    model: &OutageModel,
    n_iterations: u64,
    master_seed: u64,
    bins: &BinEdges,
    config: &McConfig,
) -> Result<RiskEstimate, RiskError> {
    run_monte_carlo_events(case, dispatch, model, n_iterations, master_seed, bins, config).map(|(est, _)| est)
}

/// [`run_monte_carlo`] that also returns every nonzero-blackout draw in
/// iteration order. The contingency of a draw is recovered with
/// `sample_contingency(model, &mut iteration_rng(master_seed, iteration))`.
pub fn run_monte_carlo_events(
    case: &GridCase,
    dispatch: &DispatchSolution,
    model: &OutageModel,
    n_iterations: u64,
    master_seed: u64,
    bins: &BinEdges,
    config: &McConfig,
) -> Result<(RiskEstimate, Vec<McEvent>), RiskError> {
    if n_iterations == 0 {
        return Err(RiskError::Domain("n_iterations must be at least 1".into()));
    }
    if model.p_fail.len() != case.branches.len() {
        return Err(RiskError::Domain("outage model does not match the case".into()));
    }
    config.cascade.validate().map_err(|e| RiskError::Domain(e.to_string()))?;
    let served = dispatch.total_served();
    if !(served > 0.0) {
        return Err(RiskError::Domain("dispatch serves no load".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| RiskError::Pool(e.to_string()))?;
    let blocks = n_iterations.div_ceil(BLOCK as u64);
    let per_block: Vec<Result<Vec<McEvent>, RiskError>> = pool.install(|| {
        (0..blocks)
            .into_par_iter()
            .map(|b| {
                let start = b * BLOCK as u64;
                let end = (start + BLOCK as u64).min(n_iterations);
                let mut out = Vec::new();
                for iteration in start..end {
                    let mut rng = iteration_rng(master_seed, iteration);
                    let c = sample_contingency(model, &mut rng);
                    let blackout_mw = score(case, dispatch, &c.branch_ids, config, iteration)?;
                    if blackout_mw > 0.0 {
                        out.push(McEvent { iteration, blackout_mw });
                    }
                }
                Ok(out)
            })
            .collect()
    });
    let mut events = Vec::new();
    for block in per_block {
        events.extend(block?);
    }
    let estimate = aggregate(&events, n_iterations, bins, served, master_seed);
    Ok((estimate, events))
}

/// Centered moving average over `window` consecutive entries; at the ends the
/// window is truncated to the entries that exist.
pub fn rolling_average(series: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..series.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(series.len());
            series[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Rolling average keyed by integer load level: the value at `L` averages the
/// levels `L-1`, `L`, `L+1` that are present.
pub fn rolling_average_levels(levels: &[u32], values: &[f64]) -> Vec<f64> {
    levels
        .iter()
        .map(|&l| {
            let (s, n) = levels
                .iter()
                .zip(values)
                .filter(|(&m, _)| m + 1 >= l && m <= l + 1)
                .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
            s / n as f64
        })
        .collect()
}
