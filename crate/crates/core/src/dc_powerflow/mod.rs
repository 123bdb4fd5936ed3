//! Linearized (DC) network analysis.
//!
//! Angles solve `B_rr θ = P / base` with the reference bus removed; branch
//! flows are `F = base · b (θ_from − θ_to)`. Injections and flows cross the
//! public API in MW, the susceptance matrix is kept in per unit.

mod sensitivity;
mod topology;

use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::grid_model::GridCase;
use crate::sparse::{FactorError, SparseCholesky, SymmetricBuilder};

pub use sensitivity::{compute_lodf, compute_ptdf, LodfMatrix, BRIDGE_THRESHOLD};
pub use topology::{find_bridges, find_islands, island_labels, islands_with};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("network has {components} islands; split by islands before solving")]
    Disconnected { components: usize },
    #[error("injections do not balance: mismatch {mismatch_mw:.3e} MW")]
    Unbalanced { mismatch_mw: f64 },
    #[error("branch {branch} is a bridge by one test but not the other")]
    BridgeMismatch { branch: usize },
    #[error("system has no buses")]
    Empty,
    #[error(transparent)]
    Factor(#[from] FactorError),
}

/// Susceptance model of one connected set of buses.
#[derive(Debug, Clone)]
pub struct DcSystem {
    mva_base: f64,
    /// Case bus positions covered by this system.
    buses: Vec<usize>,
    bus_ids: Vec<u32>,
    /// Case bus position -> local index.
    local: Vec<Option<usize>>,
    reference: usize,
    /// Case indices of the in-service branches inside the system.
    branches: Vec<usize>,
    ends: Vec<(usize, usize)>,
    susceptance: Vec<f64>,
    b_rr: SymmetricBuilder,
    components: usize,
    factor: Option<Arc<SparseCholesky>>,
}

/// Angles (radians, local bus order) and flows (MW, local branch order).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub angles: Vec<f64>,
    pub flows: Vec<f64>,
}

/// Reference bus: the lowest-id bus hosting a generator, else the lowest id.
fn pick_reference(case: &GridCase, buses: &[usize]) -> usize {
    let mut has_gen = vec![false; case.buses.len()];
    for g in &case.generators {
        has_gen[case.bus_position(g.bus).expect("validated bus")] = true;
    }
    let by_id = |&&p: &&usize| case.buses[p].id;
    buses
        .iter()
        .filter(|&&p| has_gen[p])
        .min_by_key(by_id)
        .or_else(|| buses.iter().min_by_key(by_id))
        .copied()
        .expect("non-empty bus set")
}

/// Builds the system for the whole case. The reference bus lies in the
/// largest connected component.
pub fn build_dc_system(case: &GridCase) -> DcSystem {
    let active: Vec<bool> = case.branches.iter().map(|b| b.in_service).collect();
    let (labels, count) = island_labels(case, &active);
    let mut sizes = vec![0usize; count];
    for &l in &labels {
        sizes[l] += 1;
    }
    // labels follow case order, so ties go to the island seen first
    let largest = (0..count).max_by_key(|&l| (sizes[l], std::cmp::Reverse(l))).unwrap_or(0);
    let in_largest: Vec<usize> = (0..case.buses.len()).filter(|&b| labels[b] == largest).collect();
    let reference = pick_reference(case, &in_largest);
    let all: Vec<usize> = (0..case.buses.len()).collect();
    DcSystem::assemble(case, &all, &active, reference, count)
}

impl DcSystem {
    /// System restricted to `buses` (case positions, assumed connected by the
    /// active branches) with reference chosen inside it.
    pub fn for_island(case: &GridCase, buses: &[usize], active: &[bool]) -> DcSystem {
        let reference = pick_reference(case, buses);
        DcSystem::assemble(case, buses, active, reference, 1)
    }

    fn assemble(case: &GridCase, buses: &[usize], active: &[bool], reference: usize, components: usize) -> DcSystem {
        let mut local = vec![None; case.buses.len()];
        for (k, &b) in buses.iter().enumerate() {
            local[b] = Some(k);
        }
        let mut branches = Vec::new();
        let mut ends = Vec::new();
        let mut susceptance = Vec::new();
        for (k, br) in case.branches.iter().enumerate() {
            if !active[k] {
                continue;
            }
            let f = local[case.bus_position(br.from_bus).expect("validated bus")];
            let t = local[case.bus_position(br.to_bus).expect("validated bus")];
            if let (Some(f), Some(t)) = (f, t) {
                branches.push(k);
                ends.push((f, t));
                susceptance.push(br.susceptance());
            }
        }
        let reference = local[reference].expect("reference inside bus set");
        let n = buses.len();
        let reduced = |i: usize| -> Option<usize> {
            match i.cmp(&reference) {
                std::cmp::Ordering::Less => Some(i),
                std::cmp::Ordering::Equal => None,
                std::cmp::Ordering::Greater => Some(i - 1),
            }
        };
        let mut b_rr = SymmetricBuilder::new(n.saturating_sub(1));
        for (&(f, t), &s) in ends.iter().zip(&susceptance) {
            let (rf, rt) = (reduced(f), reduced(t));
            if let Some(i) = rf {
                b_rr.add(i, i, s).expect("index in range");
            }
            if let Some(j) = rt {
                b_rr.add(j, j, s).expect("index in range");
            }
            if let (Some(i), Some(j)) = (rf, rt) {
                b_rr.add(i, j, -s).expect("index in range");
            }
        }
        let factor = if components == 1 { b_rr.factor().ok().map(Arc::new) } else { None };
        DcSystem {
            mva_base: case.mva_base,
            bus_ids: buses.iter().map(|&b| case.buses[b].id).collect(),
            buses: buses.to_vec(),
            local,
            reference,
            branches,
            ends,
            susceptance,
            b_rr,
            components,
            factor,
        }
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn mva_base(&self) -> f64 {
        self.mva_base
    }

    pub fn is_connected(&self) -> bool {
        self.components == 1 && self.factor.is_some()
    }

    /// Case index of the reference bus id.
    pub fn reference_bus(&self) -> u32 {
        self.bus_ids[self.reference]
    }

    pub fn reference_index(&self) -> usize {
        self.reference
    }

    /// Case bus positions in local order.
    pub fn bus_positions(&self) -> &[usize] {
        &self.buses
    }

    pub fn bus_ids(&self) -> &[u32] {
        &self.bus_ids
    }

    /// Local index of a case bus position.
    pub fn local_bus(&self, case_position: usize) -> Option<usize> {
        self.local.get(case_position).copied().flatten()
    }

    /// Case branch indices in local order.
    pub fn branches(&self) -> &[usize] {
        &self.branches
    }

    /// Local position of a case branch index.
    pub fn local_branch(&self, case_branch: usize) -> Option<usize> {
        self.branches.binary_search(&case_branch).ok()
    }

    /// Local (from, to) bus indices of a local branch.
    pub fn branch_ends(&self, k: usize) -> (usize, usize) {
        self.ends[k]
    }

    /// Diagonal of `x_b⁻¹`, per unit.
    pub fn branch_susceptances(&self) -> &[f64] {
        &self.susceptance
    }

    /// Dense copy of `B_rr` (per unit).
    pub fn reduced_susceptance(&self) -> DMatrix<f64> {
        let dense = self.b_rr.to_dense();
        let n = self.b_rr.dim();
        DMatrix::from_fn(n, n, |r, c| dense[r][c])
    }

    /// Branch-by-bus incidence: +1 at the from bus, −1 at the to bus.
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.branches.len(), self.buses.len());
        for (k, &(f, t)) in self.ends.iter().enumerate() {
            a[(k, f)] = 1.0;
            a[(k, t)] = -1.0;
        }
        a
    }

    pub(crate) fn factor(&self) -> Result<&SparseCholesky, TopologyError> {
        if self.buses.is_empty() {
            return Err(TopologyError::Empty);
        }
        if self.components != 1 {
            return Err(TopologyError::Disconnected { components: self.components });
        }
        match &self.factor {
            Some(f) => Ok(f),
            None => Err(TopologyError::Disconnected { components: self.components.max(2) }),
        }
    }

    /// Solves `B_rr θ = p` for a full-length per-unit vector `p` (reference entry ignored);
    /// returns angles with the reference fixed at zero.
    pub(crate) fn solve_angles(&self, p_pu: &[f64]) -> Result<Vec<f64>, TopologyError> {
        let factor = self.factor()?;
        let mut reduced: Vec<f64> = p_pu
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != self.reference)
            .map(|(_, &v)| v)
            .collect();
        factor.solve_in_place(&mut reduced);
        let mut theta = Vec::with_capacity(p_pu.len());
        let mut it = reduced.into_iter();
        for i in 0..p_pu.len() {
            theta.push(if i == self.reference { 0.0 } else { it.next().expect("reduced entry") });
        }
        Ok(theta)
    }

    /// `b_k (θ_f − θ_t)` for every local branch, in per unit.
    pub(crate) fn flows_from_angles(&self, theta: &[f64]) -> Vec<f64> {
        self.ends
            .iter()
            .zip(&self.susceptance)
            .map(|(&(f, t), &s)| s * (theta[f] - theta[t]))
            .collect()
    }

    /// Net MW injection per local bus from generator and load outputs given in case order.
    pub fn bus_injections(&self, case: &GridCase, p_gen: &[f64], p_load: &[f64]) -> Vec<f64> {
        let mut inj = vec![0.0; self.buses.len()];
        for (g, &p) in case.generators.iter().zip(p_gen) {
            if let Some(k) = self.local_bus(case.bus_position(g.bus).expect("validated bus")) {
                inj[k] += p;
            }
        }
        for (l, &p) in case.loads.iter().zip(p_load) {
            if let Some(k) = self.local_bus(case.bus_position(l.bus).expect("validated bus")) {
                inj[k] -= p;
            }
        }
        inj
    }
}

/// DC power flow for MW injections given per local bus.
pub fn solve_dc_flow(system: &DcSystem, injections: &[f64]) -> Result<FlowState, TopologyError> {
    assert_eq!(injections.len(), system.num_buses(), "one injection per bus");
    system.factor()?;
    let total: f64 = injections.iter().sum();
    let magnitude: f64 = injections.iter().map(|v| v.abs()).sum();
    if total.abs() > 1e-6 + 1e-12 * magnitude {
        return Err(TopologyError::Unbalanced { mismatch_mw: total });
    }
    let base = system.mva_base;
    let p_pu: Vec<f64> = injections.iter().map(|p| p / base).collect();
    let angles = system.solve_angles(&p_pu)?;
    let flows = system.flows_from_angles(&angles).into_iter().map(|f| f * base).collect();
    Ok(FlowState { angles, flows })
}
