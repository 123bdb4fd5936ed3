//! Deterministic DC cascading-failure simulation.
//!
//! Each tier finds the islands of the surviving network, rebalances every
//! island, solves its DC flow, and trips all branches above their threshold
//! at once. The cascade ends at the first tier without trips.
//!
//! Rebalancing keeps as much load as possible. Surplus generation is backed
//! down pro rata. A deficit is covered by raising generators pro rata to their
//! headroom (capacity, and the ramp limit if one is set); whatever is left is
//! shed pro rata across the island's loads. Served load never increases.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dc_powerflow::{island_labels, solve_dc_flow, DcSystem, TopologyError};
use crate::dispatch::DispatchSolution;
use crate::grid_model::GridCase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TripThreshold {
    #[default]
    ShortTerm,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RebalanceMode {
    /// Ramp generation up before shedding any load.
    #[default]
    MinShed,
    /// Never ramp up; cover every deficit by shedding.
    ProRata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeConfig {
    /// A branch trips when `|flow| > (1 + overload_tolerance) × rating`.
    pub overload_tolerance: f64,
    pub trip_threshold: TripThreshold,
    pub max_tiers: usize,
    /// Upward movement per generator per tier, MW; `None` is unlimited.
    pub gen_ramp_limit: Option<f64>,
    pub rebalance: RebalanceMode,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            overload_tolerance: 1e-4,
            trip_threshold: TripThreshold::ShortTerm,
            max_tiers: 200,
            gen_ramp_limit: None,
            rebalance: RebalanceMode::MinShed,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<(), CascadeError> {
        if self.max_tiers == 0 {
            return Err(CascadeError::Config("max_tiers must be at least 1".into()));
        }
        if !(self.overload_tolerance.is_finite() && self.overload_tolerance >= 0.0) {
            return Err(CascadeError::Config(format!("overload tolerance {} must be >= 0", self.overload_tolerance)));
        }
        if let Some(r) = self.gen_ramp_limit {
            if !(r >= 0.0) {
                return Err(CascadeError::Config(format!("ramp limit {r} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// One record of the event log. Tier 0 is the initiating contingency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierEvent {
    pub tier: usize,
    pub tripped: Vec<usize>,
    pub islands: usize,
    /// Load shed so far, MW.
    pub shed_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeResult {
    /// Pre-contingency served load minus final served load, MW.
    pub blackout_mw: f64,
    /// (tier, branch) for every branch tripped by overload.
    pub trip_sequence: Vec<(usize, usize)>,
    pub final_islands: usize,
    /// Tiers that tripped at least one branch.
    pub tiers: usize,
    pub events: Vec<TierEvent>,
}

impl CascadeResult {
    /// Writes the event log as one JSON object per line.
    pub fn write_event_log<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CascadeError {
    #[error("invalid contingency branch {branch}: {reason}")]
    InvalidContingency { branch: usize, reason: String },
    #[error("cascade from {contingency:?} did not settle within {} tiers", partial.tiers)]
    Nontermination { contingency: Vec<usize>, partial: Box<CascadeResult> },
    #[error("invalid cascade config: {0}")]
    Config(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Restores balance in one island; `gens` and `loads` index into the outputs.
fn rebalance(case: &GridCase, config: &CascadeConfig, gens: &[usize], loads: &[usize], p_gen: &mut [f64], p_load: &mut [f64]) {
    let generation: f64 = gens.iter().map(|&g| p_gen[g]).sum();
    let demand: f64 = loads.iter().map(|&d| p_load[d]).sum();
    if demand <= 0.0 {
        for &g in gens {
            p_gen[g] = 0.0;
        }
        return;
    }
    if generation >= demand {
        let scale = demand / generation;
        for &g in gens {
            p_gen[g] *= scale;
        }
        return;
    }
    let deficit = demand - generation;
    let headroom: Vec<f64> = match config.rebalance {
        RebalanceMode::ProRata => vec![0.0; gens.len()],
        RebalanceMode::MinShed => gens
            .iter()
            .map(|&g| {
                let room = (case.generators[g].p_max - p_gen[g]).max(0.0);
                config.gen_ramp_limit.map_or(room, |r| room.min(r))
            })
            .collect(),
    };
    let available: f64 = headroom.iter().sum();
    if available >= deficit {
        let share = deficit / available;
        for (&g, h) in gens.iter().zip(&headroom) {
            p_gen[g] += share * h;
        }
        return;
    }
    for (&g, h) in gens.iter().zip(&headroom) {
        p_gen[g] += h;
    }
    let served = generation + available;
    let scale = if served > 0.0 { served / demand } else { 0.0 };
    for &d in loads {
        p_load[d] *= scale;
    }
}

/// Plays out the cascade that follows taking `contingency` out of service.
pub fn simulate_cascade(
    case: &GridCase,
    dispatch: &DispatchSolution,
    contingency: &[usize],
    config: &CascadeConfig,
) -> Result<CascadeResult, CascadeError> {
    config.validate()?;
    let mut active: Vec<bool> = case.branches.iter().map(|b| b.in_service).collect();
    for (n, &k) in contingency.iter().enumerate() {
        let reason = if k >= case.branches.len() {
            "no such branch"
        } else if contingency[..n].contains(&k) {
            "listed twice"
        } else if !active[k] {
            "already out of service"
        } else {
            ""
        };
        if !reason.is_empty() {
            return Err(CascadeError::InvalidContingency { branch: k, reason: reason.into() });
        }
    }
    let pre_served: f64 = dispatch.p_served.iter().sum();
    let mut result = CascadeResult {
        blackout_mw: 0.0,
        trip_sequence: Vec::new(),
        final_islands: 0,
        tiers: 0,
        events: Vec::new(),
    };
    if contingency.is_empty() {
        result.final_islands = island_labels(case, &active).1;
        return Ok(result);
    }
    for &k in contingency {
        active[k] = false;
    }
    let mut p_gen = dispatch.p_gen.clone();
    let mut p_load = dispatch.p_served.clone();
    let gen_pos: Vec<usize> = case.generators.iter().map(|g| case.bus_position(g.bus).expect("validated bus")).collect();
    let load_pos: Vec<usize> = case.loads.iter().map(|l| case.bus_position(l.bus).expect("validated bus")).collect();
    let rating = |k: usize| match config.trip_threshold {
        TripThreshold::ShortTerm => case.branches[k].rating_short,
        TripThreshold::Continuous => case.branches[k].rating_long,
    };
    let mut tripped = contingency.to_vec();
    let mut tier = 0;
    loop {
        let (labels, count) = island_labels(case, &active);
        let mut buses = vec![Vec::new(); count];
        for (b, &l) in labels.iter().enumerate() {
            buses[l].push(b);
        }
        let mut gens = vec![Vec::new(); count];
        for (g, &b) in gen_pos.iter().enumerate() {
            gens[labels[b]].push(g);
        }
        let mut loads = vec![Vec::new(); count];
        for (d, &b) in load_pos.iter().enumerate() {
            loads[labels[b]].push(d);
        }
        for island in 0..count {
            rebalance(case, config, &gens[island], &loads[island], &mut p_gen, &mut p_load);
        }
        result.final_islands = count;
        result.blackout_mw = (pre_served - p_load.iter().sum::<f64>()).max(0.0);
        result.events.push(TierEvent {
            tier,
            tripped: std::mem::take(&mut tripped),
            islands: count,
            shed_mw: result.blackout_mw,
        });
        for island in 0..count {
            if buses[island].len() < 2 {
                continue;
            }
            let system = DcSystem::for_island(case, &buses[island], &active);
            let injections = system.bus_injections(case, &p_gen, &p_load);
            let state = solve_dc_flow(&system, &injections)?;
            for (l, &k) in system.branches().iter().enumerate() {
                if state.flows[l].abs() > (1.0 + config.overload_tolerance) * rating(k) {
                    tripped.push(k);
                }
            }
        }
        if tripped.is_empty() {
            return Ok(result);
        }
        tripped.sort_unstable();
        tier += 1;
        if tier > config.max_tiers {
            return Err(CascadeError::Nontermination { contingency: contingency.to_vec(), partial: Box::new(result) });
        }
        for &k in &tripped {
            active[k] = false;
            result.trip_sequence.push((tier, k));
        }
        result.tiers = tier;
    }
}

#[cfg(test)]
mod tests;
