//! Pre-contingency operating points.
//!
//! The DC OPF minimizes generation cost minus served-load credit. Load can be
//! shed at its shed cost, so the problem is always feasible. It is solved in
//! injection space: branch flows are PTDF rows times net bus injections, and
//! continuous-rating rows are added only for branches that the current
//! solution overloads. The security-constrained variant repeats the solve,
//! adding `|f_i + h_ij f_j| <= rating_short_i` rows for every single-outage
//! violation found, until none remain.

mod table;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dc_powerflow::{build_dc_system, compute_lodf, solve_dc_flow, DcSystem, LodfMatrix, TopologyError};
use crate::grid_model::GridCase;
use crate::lp::{BoundedSimplex, LinearProgram, LpError, LpSolver};

pub use table::TableError;

/// Post-contingency violations smaller than this (per unit) are ignored.
pub const SECURITY_TOLERANCE_PU: f64 = 1e-4;

/// Continuous-rating overloads below this many MW do not trigger another solve.
const FLOW_TOLERANCE_MW: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispatchError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("linear program failed: {0}")]
    Solver(#[from] LpError),
    #[error("no secure dispatch after {cycles} cycles; {} violations remain", violations.len())]
    NonConvergence { cycles: usize, violations: Vec<SecurityViolation> },
    #[error("security row (monitored {monitored}, outaged {outaged}) is active but still violated")]
    ActiveRowViolated { monitored: usize, outaged: usize },
    #[error("invalid security row (monitored {monitored}, outaged {outaged}): {reason}")]
    InvalidRow { monitored: usize, outaged: usize, reason: String },
    #[error("domain error: {0}")]
    Domain(String),
}

/// A contingency constraint `|f_i + factor · f_j| <= rating_short_i`, in case branch indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityRow {
    pub monitored: usize,
    pub outaged: usize,
    pub factor: f64,
}

/// Predicted overload of branch `monitored_branch` after `outaged_branch` trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityViolation {
    pub outaged_branch: usize,
    pub monitored_branch: usize,
    /// `f_i + h_ij f_j`, MW.
    pub predicted_flow: f64,
    /// Short-term rating of the monitored branch, MW.
    pub limit: f64,
    /// `|predicted_flow| - limit`, MW.
    pub margin: f64,
}

/// Result of an n-1 scan.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SecurityCheck {
    pub violations: Vec<SecurityViolation>,
    /// In-service branches whose outage splits the network; never constrained.
    pub islanding: Vec<usize>,
}

impl SecurityCheck {
    pub fn is_secure(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub load_factor: f64,
    /// MW per generator, case order.
    pub p_gen: Vec<f64>,
    /// MW per load, case order.
    pub p_served: Vec<f64>,
    /// Radians per case bus, reference at zero.
    pub angles: Vec<f64>,
    /// MW per case branch; out-of-service branches carry zero.
    pub flows: Vec<f64>,
    /// `Σ c_g P_g − Σ c_d P_d`, $/h.
    pub objective: f64,
    /// Demand not served, MW.
    pub shed_total: f64,
    /// (monitored, outaged) branch pairs constrained during decomposition.
    pub security_constraints_active: Vec<(usize, usize)>,
    /// Number of LP solves in the decomposition loop; zero for scaled solutions.
    pub cycles: usize,
    /// Objective after each cycle.
    pub cycle_objectives: Vec<f64>,
}

impl DispatchSolution {
    pub fn total_generation(&self) -> f64 {
        self.p_gen.iter().sum()
    }

    pub fn total_served(&self) -> f64 {
        self.p_served.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct ScdcopfOptions {
    pub max_cycles: usize,
    pub tolerance_pu: f64,
    pub solver: BoundedSimplex,
}

impl Default for ScdcopfOptions {
    fn default() -> Self {
        ScdcopfOptions { max_cycles: 10, tolerance_pu: SECURITY_TOLERANCE_PU, solver: BoundedSimplex::default() }
    }
}

#[derive(Debug, Clone, Copy)]
enum Goal {
    MinCost,
    /// Minimize `sign · f_branch` (local index) among points costing at most `cost_cap`.
    Flow { branch: usize, sign: f64, cost_cap: f64 },
}

/// Network data shared by successive solves of the same case.
struct Model<'a> {
    case: &'a GridCase,
    system: DcSystem,
    gen_bus: Vec<usize>,
    load_bus: Vec<usize>,
    ptdf: HashMap<usize, Vec<f64>>,
}

impl<'a> Model<'a> {
    fn new(case: &'a GridCase) -> Result<Self, DispatchError> {
        let system = build_dc_system(case);
        if !system.is_connected() {
            let components = crate::dc_powerflow::find_islands(case).len();
            return Err(TopologyError::Disconnected { components }.into());
        }
        let local = |bus: u32| system.local_bus(case.bus_position(bus).expect("validated bus")).expect("connected");
        let gen_bus = case.generators.iter().map(|g| local(g.bus)).collect();
        let load_bus = case.loads.iter().map(|l| local(l.bus)).collect();
        Ok(Model { case, system, gen_bus, load_bus, ptdf: HashMap::new() })
    }

    fn local_branch(&self, k: usize) -> Option<usize> {
        self.system.local_branch(k)
    }

    /// LP coefficients of `Σ weight · f_l` over (generators, loads).
    fn flow_row(&mut self, terms: &[(usize, f64)]) -> Result<Vec<f64>, DispatchError> {
        let ng = self.gen_bus.len();
        let mut coefs = vec![0.0; ng + self.load_bus.len()];
        for &(l, w) in terms {
            if !self.ptdf.contains_key(&l) {
                let row = self.system.ptdf_row(l)?;
                self.ptdf.insert(l, row);
            }
            let row = &self.ptdf[&l];
            for (g, &b) in self.gen_bus.iter().enumerate() {
                coefs[g] += w * row[b];
            }
            for (d, &b) in self.load_bus.iter().enumerate() {
                coefs[ng + d] -= w * row[b];
            }
        }
        Ok(coefs)
    }

    fn solve(&mut self, rows: &[SecurityRow], solver: &BoundedSimplex, goal: Goal) -> Result<DispatchSolution, DispatchError> {
        let case = self.case;
        let ng = case.generators.len();
        let mut lp = LinearProgram::new();
        for g in &case.generators {
            lp.add_var(g.marginal_cost, 0.0, g.p_max);
        }
        for (k, l) in case.loads.iter().enumerate() {
            lp.add_var(-l.shed_cost, 0.0, case.effective_demand(k));
        }
        if let Goal::Flow { branch, sign, cost_cap } = goal {
            let cost = std::mem::replace(&mut lp.costs, self.flow_row(&[(branch, sign)])?);
            lp.add_row(cost, f64::NEG_INFINITY, cost_cap);
        }
        let mut balance = vec![1.0; lp.num_vars()];
        for c in &mut balance[ng..] {
            *c = -1.0;
        }
        lp.add_row(balance, 0.0, 0.0);
        for row in rows {
            let (Some(i), Some(j)) = (self.local_branch(row.monitored), self.local_branch(row.outaged)) else {
                return Err(DispatchError::InvalidRow {
                    monitored: row.monitored,
                    outaged: row.outaged,
                    reason: "branch is out of service".into(),
                });
            };
            let limit = case.branches[row.monitored].rating_short;
            let coefs = self.flow_row(&[(i, 1.0), (j, row.factor)])?;
            lp.add_row(coefs, -limit, limit);
        }

        let mut limited = vec![false; self.system.num_branches()];
        loop {
            let sol = solver.solve(&lp)?;
            let (p_gen, p_served) = sol.x.split_at(ng);
            let injections = self.system.bus_injections(case, p_gen, p_served);
            let state = solve_dc_flow(&self.system, &injections)?;
            let mut added = false;
            for (l, &f) in state.flows.iter().enumerate() {
                let rating = case.branches[self.system.branches()[l]].rating_long;
                if f.abs() <= rating + FLOW_TOLERANCE_MW {
                    continue;
                }
                if limited[l] {
                    return Err(LpError::Numerical {
                        iterations: sol.iterations,
                        message: format!("flow limit on branch {} violated by {:.3e} MW", l, f.abs() - rating),
                    }
                    .into());
                }
                let coefs = self.flow_row(&[(l, 1.0)])?;
                lp.add_row(coefs, -rating, rating);
                limited[l] = true;
                added = true;
            }
            if !added {
                return Ok(self.assemble(p_gen.to_vec(), p_served.to_vec(), &state.angles, &state.flows));
            }
        }
    }

    fn assemble(&self, p_gen: Vec<f64>, p_served: Vec<f64>, angles: &[f64], flows: &[f64]) -> DispatchSolution {
        let case = self.case;
        let mut bus_angles = vec![0.0; case.buses.len()];
        for (k, &p) in self.system.bus_positions().iter().enumerate() {
            bus_angles[p] = angles[k];
        }
        let mut branch_flows = vec![0.0; case.branches.len()];
        for (l, &k) in self.system.branches().iter().enumerate() {
            branch_flows[k] = flows[l];
        }
        let objective = case.generators.iter().zip(&p_gen).map(|(g, p)| g.marginal_cost * p).sum::<f64>()
            - case.loads.iter().zip(&p_served).map(|(l, p)| l.shed_cost * p).sum::<f64>();
        let shed_total = (0..case.loads.len()).map(|k| case.effective_demand(k) - p_served[k]).sum::<f64>().max(0.0);
        DispatchSolution {
            load_factor: case.load_factor,
            p_gen,
            p_served,
            angles: bus_angles,
            flows: branch_flows,
            objective,
            shed_total,
            security_constraints_active: Vec::new(),
            cycles: 1,
            cycle_objectives: vec![objective],
        }
    }
}

/// Solves the DC OPF with the given contingency rows added.
pub fn solve_dcopf(case: &GridCase, extra_constraints: &[SecurityRow]) -> Result<DispatchSolution, DispatchError> {
    Model::new(case)?.solve(extra_constraints, &BoundedSimplex::default(), Goal::MinCost)
}

fn scan(case: &GridCase, system: &DcSystem, lodf: &LodfMatrix, flows: &[f64], tolerance_mw: f64) -> SecurityCheck {
    let local_flows: Vec<f64> = system.branches().iter().map(|&k| flows[k]).collect();
    let mut check = SecurityCheck::default();
    for j in 0..lodf.size() {
        let outaged = system.branches()[j];
        if lodf.is_bridge(j) {
            check.islanding.push(outaged);
            continue;
        }
        for (i, &monitored) in system.branches().iter().enumerate() {
            if i == j {
                continue;
            }
            let h = lodf.get(i, j).expect("non-bridge column");
            let predicted = local_flows[i] + h * local_flows[j];
            let limit = case.branches[monitored].rating_short;
            if predicted.abs() > limit + tolerance_mw {
                check.violations.push(SecurityViolation {
                    outaged_branch: outaged,
                    monitored_branch: monitored,
                    predicted_flow: predicted,
                    limit,
                    margin: predicted.abs() - limit,
                });
            }
        }
    }
    check
}

/// Single-outage scan of a solution using line outage distribution factors.
/// Violations are ordered by outaged branch, then monitored branch.
pub fn check_security(case: &GridCase, solution: &DispatchSolution) -> Result<SecurityCheck, DispatchError> {
    let system = build_dc_system(case);
    let lodf = compute_lodf(&system)?;
    Ok(scan(case, &system, &lodf, &solution.flows, SECURITY_TOLERANCE_PU * case.mva_base))
}

/// Decomposed security-constrained DC OPF with default options.
pub fn solve_scdcopf(case: &GridCase) -> Result<DispatchSolution, DispatchError> {
    solve_scdcopf_with(case, &ScdcopfOptions::default())
}

pub fn solve_scdcopf_with(case: &GridCase, options: &ScdcopfOptions) -> Result<DispatchSolution, DispatchError> {
    let mut model = Model::new(case)?;
    let lodf = compute_lodf(&model.system)?;
    decompose(&mut model, &lodf, options, Goal::MinCost, Vec::new())
}

/// Fig. 1 loop: solve, scan, add every violated row, repeat.
fn decompose(
    model: &mut Model,
    lodf: &LodfMatrix,
    options: &ScdcopfOptions,
    goal: Goal,
    mut rows: Vec<SecurityRow>,
) -> Result<DispatchSolution, DispatchError> {
    if options.max_cycles == 0 {
        return Err(DispatchError::Domain("max_cycles must be at least 1".into()));
    }
    let case = model.case;
    let tolerance_mw = options.tolerance_pu * case.mva_base;
    let mut active: HashSet<(usize, usize)> = rows.iter().map(|r| (r.monitored, r.outaged)).collect();
    let mut objectives = Vec::new();
    for cycle in 1..=options.max_cycles {
        let mut solution = model.solve(&rows, &options.solver, goal)?;
        objectives.push(solution.objective);
        let check = scan(case, &model.system, lodf, &solution.flows, tolerance_mw);
        if check.is_secure() {
            solution.security_constraints_active = rows.iter().map(|r| (r.monitored, r.outaged)).collect();
            solution.cycles = cycle;
            solution.cycle_objectives = objectives;
            return Ok(solution);
        }
        if cycle == options.max_cycles {
            return Err(DispatchError::NonConvergence { cycles: cycle, violations: check.violations });
        }
        for v in &check.violations {
            let key = (v.monitored_branch, v.outaged_branch);
            if !active.insert(key) {
                return Err(DispatchError::ActiveRowViolated { monitored: key.0, outaged: key.1 });
            }
            let i = model.local_branch(key.0).expect("in service");
            let j = model.local_branch(key.1).expect("in service");
            let factor = lodf.get(i, j).expect("non-bridge column");
            rows.push(SecurityRow { monitored: key.0, outaged: key.1, factor });
        }
    }
    unreachable!("loop returns on its last cycle")
}

/// Smallest and largest flow (MW) on `branch` over n-1 secure dispatches whose
/// cost is within `relative_gap` of the secure optimum. A wide interval means
/// the flow is not pinned down by the optimization.
pub fn optimal_flow_range(
    case: &GridCase,
    branch: usize,
    relative_gap: f64,
    options: &ScdcopfOptions,
) -> Result<(f64, f64), DispatchError> {
    if !(relative_gap.is_finite() && relative_gap >= 0.0) {
        return Err(DispatchError::Domain(format!("relative gap {relative_gap} must be non-negative")));
    }
    let mut model = Model::new(case)?;
    let local = model
        .local_branch(branch)
        .ok_or_else(|| DispatchError::Domain(format!("branch {branch} is out of service")))?;
    let lodf = compute_lodf(&model.system)?;
    let optimum = decompose(&mut model, &lodf, options, Goal::MinCost, Vec::new())?;
    let cost_cap = optimum.objective + relative_gap * optimum.objective.abs().max(1.0);
    let rows: Vec<SecurityRow> = optimum
        .security_constraints_active
        .iter()
        .map(|&(i, j)| {
            let factor = lodf.get(model.local_branch(i).unwrap(), model.local_branch(j).unwrap()).unwrap();
            SecurityRow { monitored: i, outaged: j, factor }
        })
        .collect();
    let low = decompose(&mut model, &lodf, options, Goal::Flow { branch: local, sign: 1.0, cost_cap }, rows.clone())?;
    let high = decompose(&mut model, &lodf, options, Goal::Flow { branch: local, sign: -1.0, cost_cap }, rows)?;
    Ok((low.flows[branch], high.flows[branch]))
}

/// Scales an operating point down to load factor `target`. Every MW quantity
/// and angle is multiplied by `target / reference.load_factor`.
pub fn proportional_dispatch(reference: &DispatchSolution, target: f64) -> Result<DispatchSolution, DispatchError> {
    if !(target.is_finite() && target > 0.0) {
        return Err(DispatchError::Domain(format!("target load factor {target} must be positive")));
    }
    if target > reference.load_factor {
        return Err(DispatchError::Domain(format!(
            "target load factor {target} exceeds the anchor {}; proportional dispatch only scales down",
            reference.load_factor
        )));
    }
    if target == reference.load_factor {
        return Ok(reference.clone());
    }
    let ratio = target / reference.load_factor;
    let scale = |v: &[f64]| v.iter().map(|x| x * ratio).collect::<Vec<f64>>();
    Ok(DispatchSolution {
        load_factor: target,
        p_gen: scale(&reference.p_gen),
        p_served: scale(&reference.p_served),
        angles: scale(&reference.angles),
        flows: scale(&reference.flows),
        objective: reference.objective * ratio,
        shed_total: reference.shed_total * ratio,
        security_constraints_active: reference.security_constraints_active.clone(),
        cycles: 0,
        cycle_objectives: Vec::new(),
    })
}

#[cfg(test)]
mod tests;
