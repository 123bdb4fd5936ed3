use nalgebra::DMatrix;

use super::topology::bridges;
use super::{DcSystem, TopologyError};

/// `|1 − PTDF_jj|` at or below this marks branch `j` as a bridge.
pub const BRIDGE_THRESHOLD: f64 = 1e-6;

/// Branch-by-bus PTDF matrix (local orders). Column `b` gives the flow change
/// per MW injected at `b` and withdrawn at the reference bus.
pub fn compute_ptdf(system: &DcSystem) -> Result<DMatrix<f64>, TopologyError> {
    system.factor()?;
    let n = system.num_buses();
    let mut ptdf = DMatrix::zeros(system.num_branches(), n);
    let mut unit = vec![0.0; n];
    for b in 0..n {
        if b == system.reference_index() {
            continue;
        }
        unit[b] = 1.0;
        let theta = system.solve_angles(&unit)?;
        unit[b] = 0.0;
        for (l, f) in system.flows_from_angles(&theta).into_iter().enumerate() {
            ptdf[(l, b)] = f;
        }
    }
    Ok(ptdf)
}

impl DcSystem {
    /// PTDF row of local branch `l`: flow sensitivity to injection at each local bus.
    pub fn ptdf_row(&self, l: usize) -> Result<Vec<f64>, TopologyError> {
        let (f, t) = self.branch_ends(l);
        let s = self.branch_susceptances()[l];
        let mut rhs = vec![0.0; self.num_buses()];
        rhs[f] += s;
        rhs[t] -= s;
        // B_rr is symmetric, so B_rr⁻¹ (s (e_f − e_t)) is the row
        self.solve_angles(&rhs)
    }

    /// Flow on every branch per unit transfer from the from-bus to the to-bus of branch `j`.
    pub fn transfer_ptdf(&self, j: usize) -> Result<Vec<f64>, TopologyError> {
        let (f, t) = self.branch_ends(j);
        let mut rhs = vec![0.0; self.num_buses()];
        rhs[f] = 1.0;
        rhs[t] = -1.0;
        let theta = self.solve_angles(&rhs)?;
        Ok(self.flows_from_angles(&theta))
    }

    /// LODF column for outage of local branch `j`, or `None` when `j` is a bridge.
    pub fn lodf_column(&self, j: usize) -> Result<Option<Vec<f64>>, TopologyError> {
        let transfer = self.transfer_ptdf(j)?;
        let denom = 1.0 - transfer[j];
        if denom.abs() <= BRIDGE_THRESHOLD {
            return Ok(None);
        }
        let mut col: Vec<f64> = transfer.into_iter().map(|p| p / denom).collect();
        col[j] = -1.0;
        Ok(Some(col))
    }
}

/// Dense LODF matrix over the in-service branches of a [`DcSystem`].
#[derive(Debug, Clone)]
pub struct LodfMatrix {
    factors: DMatrix<f64>,
    islanding: Vec<bool>,
    branches: Vec<usize>,
}

impl LodfMatrix {
    /// `h_ij` for local branches, `None` when `j` islands the network.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if self.islanding[j] {
            None
        } else {
            Some(self.factors[(i, j)])
        }
    }

    pub fn is_bridge(&self, j: usize) -> bool {
        self.islanding[j]
    }

    pub fn islanding_flags(&self) -> &[bool] {
        &self.islanding
    }

    pub fn size(&self) -> usize {
        self.islanding.len()
    }

    /// Case branch indices in local order.
    pub fn branches(&self) -> &[usize] {
        &self.branches
    }

    /// Predicted flows after outage of local branch `j`, or `None` for a bridge.
    pub fn post_outage_flows(&self, flows: &[f64], j: usize) -> Option<Vec<f64>> {
        if self.islanding[j] {
            return None;
        }
        let fj = flows[j];
        Some(
            flows
                .iter()
                .enumerate()
                .map(|(i, &fi)| if i == j { 0.0 } else { fi + self.factors[(i, j)] * fj })
                .collect(),
        )
    }
}

/// Builds all LODF columns and checks the numeric bridge test against graph bridges.
pub fn compute_lodf(system: &DcSystem) -> Result<LodfMatrix, TopologyError> {
    system.factor()?;
    let m = system.num_branches();
    let mut factors = DMatrix::from_element(m, m, f64::NAN);
    let mut islanding = vec![false; m];
    for j in 0..m {
        match system.lodf_column(j)? {
            Some(col) => {
                for (i, v) in col.into_iter().enumerate() {
                    factors[(i, j)] = v;
                }
            }
            None => islanding[j] = true,
        }
    }
    let edges: Vec<(usize, usize)> = (0..m).map(|j| system.branch_ends(j)).collect();
    let graph = bridges(system.num_buses(), &edges);
    for (j, &k) in system.branches().iter().enumerate() {
        if graph[j] != islanding[j] {
            return Err(TopologyError::BridgeMismatch { branch: k });
        }
    }
    Ok(LodfMatrix { factors, islanding, branches: system.branches().to_vec() })
}
