//! Static grid description: buses, branches, generators and loads.
//!
//! A [`GridCase`] is immutable once validated. Transformations such as
//! [`scale_load`] and [`adjust_limits_for_feasibility`] return new cases.

mod limits;
mod parse;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use limits::{adjust_limits_for_feasibility, base_injections, DEFAULT_LIMIT_MARGIN, DEFAULT_STRESS_FACTOR};
pub use parse::{parse_case, parse_case_with, serialize_case, ParseOptions, RateColumn, ShortRatingColumn};

/// Default shed cost for every load, $/MWh.
pub const DEFAULT_SHED_COST: f64 = 10_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid {element}: {message}")]
    Validation { element: String, message: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
}

impl CaseError {
    fn invalid(element: impl Into<String>, message: impl Into<String>) -> Self {
        CaseError::Validation {
            element: element.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    /// Zone label, used only for reporting.
    pub area: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: u32,
    pub to_bus: u32,
    /// Series reactance in per unit on the case base.
    pub reactance: f64,
    /// Continuous rating, MW.
    pub rating_long: f64,
    /// Short-term emergency rating, MW.
    pub rating_short: f64,
    /// Outages per year.
    pub outage_rate: f64,
    pub in_service: bool,
}

impl Branch {
    /// Series susceptance `1/x` in per unit.
    pub fn susceptance(&self) -> f64 {
        1.0 / self.reactance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: u32,
    pub p_max: f64,
    /// $/MWh
    pub marginal_cost: f64,
    /// Scheduled output shipped with the case data (MW); used as the base dispatch.
    pub p_scheduled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadPoint {
    pub bus: u32,
    /// Demand at 100% load level, MW.
    pub p_nominal: f64,
    /// $/MWh
    pub shed_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub name: String,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub loads: Vec<LoadPoint>,
    pub mva_base: f64,
    pub load_factor: f64,
    #[serde(skip)]
    bus_index: HashMap<u32, usize>,
}

impl GridCase {
    /// Assembles and validates a case.
    pub fn new(
        name: impl Into<String>,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
        loads: Vec<LoadPoint>,
        mva_base: f64,
    ) -> Result<Self, CaseError> {
        let mut case = GridCase {
            name: name.into(),
            buses,
            branches,
            generators,
            loads,
            mva_base,
            load_factor: 1.0,
            bus_index: HashMap::new(),
        };
        case.validate()?;
        Ok(case)
    }

    /// Checks every structural invariant and rebuilds the bus lookup table.
    pub fn validate(&mut self) -> Result<(), CaseError> {
        if self.buses.is_empty() {
            return Err(CaseError::invalid("case", "no buses"));
        }
        if !(self.mva_base.is_finite() && self.mva_base > 0.0) {
            return Err(CaseError::invalid("case", format!("mva_base {} must be positive", self.mva_base)));
        }
        if !(self.load_factor.is_finite() && self.load_factor > 0.0) {
            return Err(CaseError::invalid("case", format!("load_factor {} must be positive", self.load_factor)));
        }
        let mut index = HashMap::with_capacity(self.buses.len());
        for (k, bus) in self.buses.iter().enumerate() {
            if index.insert(bus.id, k).is_some() {
                return Err(CaseError::invalid(format!("bus {}", bus.id), "duplicate bus id"));
            }
        }
        for (k, br) in self.branches.iter().enumerate() {
            let name = format!("branch {} ({}-{})", k + 1, br.from_bus, br.to_bus);
            for end in [br.from_bus, br.to_bus] {
                if !index.contains_key(&end) {
                    return Err(CaseError::invalid(name, format!("references missing bus {end}")));
                }
            }
            if br.from_bus == br.to_bus {
                return Err(CaseError::invalid(name, "from and to bus are equal"));
            }
            if !(br.reactance.is_finite() && br.reactance > 0.0) {
                return Err(CaseError::invalid(name, format!("non-positive reactance {}", br.reactance)));
            }
            if !(br.rating_long.is_finite() && br.rating_long > 0.0) {
                return Err(CaseError::invalid(name, format!("non-positive rating {}", br.rating_long)));
            }
            if !(br.rating_short.is_finite() && br.rating_short >= br.rating_long) {
                return Err(CaseError::invalid(
                    name,
                    format!("short-term rating {} below continuous rating {}", br.rating_short, br.rating_long),
                ));
            }
            if !(br.outage_rate.is_finite() && br.outage_rate >= 0.0) {
                return Err(CaseError::invalid(name, format!("negative outage rate {}", br.outage_rate)));
            }
        }
        let mut max_gen_cost = f64::NEG_INFINITY;
        for (k, g) in self.generators.iter().enumerate() {
            let name = format!("generator {} (bus {})", k + 1, g.bus);
            if !index.contains_key(&g.bus) {
                return Err(CaseError::invalid(name, format!("references missing bus {}", g.bus)));
            }
            if !(g.p_max.is_finite() && g.p_max >= 0.0) {
                return Err(CaseError::invalid(name, format!("negative capacity {}", g.p_max)));
            }
            if !g.marginal_cost.is_finite() {
                return Err(CaseError::invalid(name, "non-finite marginal cost"));
            }
            if !g.p_scheduled.is_finite() {
                return Err(CaseError::invalid(name, "non-finite scheduled output"));
            }
            max_gen_cost = max_gen_cost.max(g.marginal_cost);
        }
        for (k, l) in self.loads.iter().enumerate() {
            let name = format!("load {} (bus {})", k + 1, l.bus);
            if !index.contains_key(&l.bus) {
                return Err(CaseError::invalid(name, format!("references missing bus {}", l.bus)));
            }
            if !(l.p_nominal.is_finite() && l.p_nominal >= 0.0) {
                return Err(CaseError::invalid(name, format!("negative demand {}", l.p_nominal)));
            }
            if !(l.shed_cost.is_finite() && l.shed_cost > max_gen_cost) {
                return Err(CaseError::invalid(
                    name,
                    format!("shed cost {} must exceed every generator cost (max {})", l.shed_cost, max_gen_cost),
                ));
            }
        }
        if self.total_capacity() <= 0.0 {
            return Err(CaseError::invalid("case", "total generation capacity must be positive"));
        }
        if self.total_nominal_load() <= 0.0 {
            return Err(CaseError::invalid("case", "total load must be positive"));
        }
        self.bus_index = index;
        Ok(())
    }

    /// Position of a bus id in `buses`.
    pub fn bus_position(&self, id: u32) -> Option<usize> {
        self.bus_index.get(&id).copied()
    }

    pub fn total_capacity(&self) -> f64 {
        self.generators.iter().map(|g| g.p_max).sum()
    }

    pub fn total_nominal_load(&self) -> f64 {
        self.loads.iter().map(|l| l.p_nominal).sum()
    }

    /// Demand of load `k` at the current load factor, MW.
    pub fn effective_demand(&self, k: usize) -> f64 {
        self.load_factor * self.loads[k].p_nominal
    }

    pub fn total_effective_demand(&self) -> f64 {
        (0..self.loads.len()).map(|k| self.effective_demand(k)).sum()
    }

    /// Index of the first branch joining `a` and `b` in either direction.
    pub fn find_branch(&self, a: u32, b: u32) -> Option<usize> {
        self.branches
            .iter()
            .position(|br| (br.from_bus == a && br.to_bus == b) || (br.from_bus == b && br.to_bus == a))
    }

    /// Copy of the case with the given branches taken out of service.
    pub fn with_outages(&self, outaged: &[usize]) -> GridCase {
        let mut case = self.clone();
        for &k in outaged {
            case.branches[k].in_service = false;
        }
        case
    }
}

/// Returns a copy operating at `factor` times nominal demand.
pub fn scale_load(case: &GridCase, factor: f64) -> Result<GridCase, CaseError> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(CaseError::Domain(format!("load factor {factor} must be positive")));
    }
    let mut scaled = case.clone();
    scaled.load_factor = factor;
    Ok(scaled)
}
