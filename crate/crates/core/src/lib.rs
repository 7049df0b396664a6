//! Battery and renewable-unit allocation for microgrids whose generation
//! follows a geometric Brownian motion.
//!
//! Two operating modes are compared. In conventional operation each
//! microgrid is hedged separately and the allocation is closed form
//! ([`ces`]). In transactive operation surpluses are netted across
//! microgrids and the allocation comes from a multi-asset binomial lattice
//! ([`lattice`]). [`scenario`] runs both over simulated paths.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod ces;
pub mod error;
pub mod grid;
pub mod lattice;
pub mod linalg;
pub mod process;
pub mod rng;
pub mod scenario;
pub mod special;
pub mod stats;

pub use ces::{ces_allocation, ces_portfolio_value, CesAllocation, CesPricer};
pub use error::{Error, Result};
pub use grid::{GridEnsemble, MicrogridSpec};
pub use lattice::{calibrate_step_model, tes_allocation, LatticeEngine, LatticeStepModel};
pub use process::{CorrelationMatrix, GbmParams, Measure};
pub use scenario::{run_case_study, CaseLabel, CaseResult, ScenarioConfig};
