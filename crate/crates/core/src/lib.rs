//! Cascading-failure risk estimation for power transmission grids.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`grid_model`] reads a MATPOWER-style case and applies load scaling.
//! 2. [`dispatch`] finds an n-1 secure operating point with a decomposed
//!    security-constrained DC OPF, or scales one down proportionally.
//! 3. [`cascade_sim`] plays out a multi-branch outage with a deterministic
//!    DC overload-tripping model.
//! 4. [`risk_mc`] samples independent branch outages and reports expected
//!    blackout size, split by blackout magnitude.
//!
//! [`harness`] strings the stages together into load-level sweeps.

pub mod cascade_sim;
pub mod dc_powerflow;
pub mod dispatch;
pub mod grid_model;
pub mod harness;
pub mod lp;
pub mod risk_mc;
pub mod sparse;

mod error;

pub use error::Error;
