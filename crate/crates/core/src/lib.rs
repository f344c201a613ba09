//! Receding-horizon scheduling for a refrigeration system backed by a
//! phase-change thermal storage tank.
//!
//! The crate is organized around the closed loop: [`tes`] models the tank
//! (simulation plant and prediction oracle), [`pnmpc`] linearizes it around
//! zero future inputs, [`scheduler`] encodes and solves the mixed-integer
//! scheduling problem, [`estimator`] reconstructs the tank state from the
//! measurable fluid temperature, and [`harness`] drives the whole loop from
//! scenario files to machine-readable reports.

pub mod config;
pub mod estimator;
pub mod harness;
pub mod pnmpc;
pub mod scheduler;
pub mod tes;
