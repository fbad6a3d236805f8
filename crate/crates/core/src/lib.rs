//! Valuation and equilibrium solver for game contingent claims on finite
//! event trees.
//!
//! The library prices claims by exponential-utility indifference in possibly
//! incomplete markets, computes the associated nonlinear Snell envelope and
//! optimal stopping rules, and constructs Nash equilibrium stopping pairs for
//! callable/exercisable contracts by monotone best-response iteration. A
//! recombining-lattice engine handles large step counts for state-dependent
//! payoffs; everything else runs on explicit event trees.

pub mod dag;
pub mod dp;
pub mod dynkin;
pub mod error;
pub mod indifference;
pub mod io;
pub mod lattice;
pub mod measure;
pub mod model;
pub mod onestep;
pub mod scenario;
pub mod selftest;
pub mod snell;
pub mod tree;

pub use error::{Result, SolverError};
