//! Condensing particle systems on the complete graph and their mean-field
//! limits.
//!
//! The crate simulates the exact finite-`L` dynamics on class counts
//! ([`ips`], [`tagged`]), integrates the limiting rate equations
//! ([`meanfield`]), samples the time-inhomogeneous limit chain of the
//! tagged-site occupation ([`limit`]), builds the dominating process used to
//! control its moments ([`coupling`]) and computes exact transient laws for
//! tiny systems ([`oracle`]). [`harness`] ties these into experiments.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod kernel;
pub mod state;
pub mod ips;
pub mod tagged;
pub mod meanfield;
pub mod limit;
pub mod coupling;
pub mod oracle;
pub mod harness;
pub mod seed;
pub mod stats;

mod ode;

pub use error::{Error, Result};
pub use kernel::{KernelFamily, RateKernel, RateTable, Sublinearity};
pub use state::{ClassConfig, EmpiricalMeasure, InitScheme, TagPlacement, TaggedState};
