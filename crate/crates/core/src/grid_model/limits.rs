use super::{scale_load, CaseError, GridCase};
use crate::dc_powerflow::{build_dc_system, solve_dc_flow};

/// Generator and load outputs (MW, case order) of the case's shipped dispatch
/// at its current load factor. Scheduled generation is rescaled to match
/// demand; a case with no schedule dispatches in proportion to capacity.
pub fn base_injections(case: &GridCase) -> (Vec<f64>, Vec<f64>) {
    let loads: Vec<f64> = (0..case.loads.len()).map(|k| case.effective_demand(k)).collect();
    let demand: f64 = loads.iter().sum();
    let scheduled: f64 = case.generators.iter().map(|g| g.p_scheduled.max(0.0)).sum();
    let gens = if scheduled > 0.0 {
        case.generators.iter().map(|g| g.p_scheduled.max(0.0) * demand / scheduled).collect()
    } else {
        let cap = case.total_capacity();
        case.generators.iter().map(|g| g.p_max * demand / cap).collect()
    };
    (gens, loads)
}

/// Load factor at which [`adjust_limits_for_feasibility`] is usually applied.
pub const DEFAULT_STRESS_FACTOR: f64 = 1.10;
/// Headroom over the worst post-outage flow.
pub const DEFAULT_LIMIT_MARGIN: f64 = 1.05;

/// Raises continuous ratings to `margin` times the worst flow each branch sees
/// under the base dispatch at `stress_factor` load, over the intact network and
/// every single non-bridge outage. Short-term ratings keep their ratio.
pub fn adjust_limits_for_feasibility(
    case: &GridCase,
    stress_factor: f64,
    margin: f64,
) -> Result<GridCase, CaseError> {
    if !(margin.is_finite() && margin > 0.0) {
        return Err(CaseError::Domain(format!("margin {margin} must be positive")));
    }
    let stressed = scale_load(case, stress_factor)?;
    let system = build_dc_system(&stressed);
    let (gens, loads) = base_injections(&stressed);
    let injections = system.bus_injections(&stressed, &gens, &loads);
    let state = solve_dc_flow(&system, &injections)
        .map_err(|e| CaseError::Infeasible(format!("base power flow at load factor {stress_factor}: {e}")))?;
    let flows = &state.flows;
    let mut worst: Vec<f64> = flows.iter().map(|f| f.abs()).collect();
    for j in 0..system.num_branches() {
        let column = system
            .lodf_column(j)
            .map_err(|e| CaseError::Infeasible(format!("sensitivity for branch {}: {e}", system.branches()[j] + 1)))?;
        let Some(h) = column else { continue };
        for (i, w) in worst.iter_mut().enumerate() {
            if i != j {
                *w = w.max((flows[i] + h[i] * flows[j]).abs());
            }
        }
    }
    let mut adjusted = case.clone();
    for (local, &k) in system.branches().iter().enumerate() {
        let br = &mut adjusted.branches[k];
        let target = margin * worst[local];
        if target > br.rating_long {
            let ratio = target / br.rating_long;
            br.rating_long = target;
            br.rating_short *= ratio;
        }
    }
    Ok(adjusted)
}
