//! Distributed rainfall-runoff simulation coupled to a detention pond with
//! receding-horizon valve and gate control.
//!
//! The crate is organized around the data flow of a scenario run:
//!
//! - [`grid`] / [`terrain`] — raster geometry, DEM conditioning, D8 drainage.
//! - [`forcing`] — design storms, gauge records, spatial interpolation,
//!   reference evapotranspiration.
//! - [`hydrology`] — per-cell vertical fluxes (infiltration, recharge, ET).
//! - [`routing`] — kinematic-wave overland routing with adaptive time steps,
//!   producing the watershed outlet hydrograph.
//! - [`reservoir`] — detention-pond storage, outlet devices, and the exact
//!   linearization of the outflow law.
//! - [`mpc`] — the receding-horizon controller and its derivative-free
//!   schedule optimizer.
//! - [`scenario`] — configuration, orchestration, indicators, and file I/O;
//!   the CLI in `src/main.rs` is a thin wrapper over this module.

// Validations use negated comparisons (`!(x > 0.0)`) so NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod forcing;
pub mod grid;
pub mod hydrology;
pub mod mpc;
pub mod reservoir;
pub mod routing;
pub mod scenario;
pub mod series;
pub mod terrain;

pub use error::{Error, Result};
