use thiserror::Error;

use crate::cascade_sim::CascadeError;
use crate::dc_powerflow::TopologyError;
use crate::dispatch::{DispatchError, TableError};
use crate::grid_model::CaseError;
use crate::harness::HarnessError;
use crate::lp::LpError;
use crate::risk_mc::RiskError;

/// Any failure raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}
