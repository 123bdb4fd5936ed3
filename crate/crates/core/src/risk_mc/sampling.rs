use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RiskError;
use crate::grid_model::GridCase;

pub const HOURS_PER_YEAR: f64 = 8760.0;

/// Chance that a branch with `lambda` outages per year is out in a given
/// hour-long draw.
pub fn outage_probability(lambda: f64) -> Result<f64, RiskError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(RiskError::Domain(format!("outage rate {lambda} must be non-negative")));
    }
    if lambda > HOURS_PER_YEAR {
        return Err(RiskError::Domain(format!("outage rate {lambda} exceeds {HOURS_PER_YEAR} per year")));
    }
    Ok(lambda / HOURS_PER_YEAR)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageModel {
    /// Per-branch outage probability, case order. Out-of-service branches are 0.
    pub p_fail: Vec<f64>,
}

pub fn build_outage_model(case: &GridCase) -> Result<OutageModel, RiskError> {
    let p_fail = case
        .branches
        .iter()
        .map(|b| if b.in_service { outage_probability(b.outage_rate) } else { Ok(0.0) })
        .collect::<Result<_, _>>()?;
    Ok(OutageModel { p_fail })
}

/// A set of simultaneously outaged branches.
#[derive(Debug, Clone, PartialEq)]
pub struct Contingency {
    /// Ascending case branch indices.
    pub branch_ids: Vec<usize>,
    /// `Π p_i` over outaged branches times `Π (1 − p_j)` over the others.
    pub probability: f64,
}

impl Contingency {
    pub fn order(&self) -> usize {
        self.branch_ids.len()
    }
}

/// The random stream for one iteration: stream `iteration` of the ChaCha8
/// generator keyed by `master_seed`.
pub fn iteration_rng(master_seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(iteration);
    rng
}

/// Draws one uniform per branch, in case order, and outages branch `i` when
/// the draw is below `p_fail[i]`.
pub fn sample_contingency<R: Rng>(model: &OutageModel, rng: &mut R) -> Contingency {
    let mut branch_ids = Vec::new();
    let mut probability = 1.0;
    for (i, &p) in model.p_fail.iter().enumerate() {
        let u: f64 = rng.gen();
        if u < p {
            branch_ids.push(i);
            probability *= p;
        } else {
            probability *= 1.0 - p;
        }
    }
    Contingency { branch_ids, probability }
}
