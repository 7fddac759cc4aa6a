//! A simulation and verification laboratory for finitary factor maps
//! between i.i.d. lattice processes.
//!
//! The library models a finitary code by truncating its local rule at a
//! finite radius and applying the truncated rule on a discrete torus. On top
//! of that modeling it provides:
//!
//! - exact (rational-arithmetic) cylinder measures with exhaustive
//!   verification of the measure inequality `mu([x]) <= nu([phi^n(x)])` at
//!   small scale ([`exact_oracle`]),
//! - couplings of the torus output with the true factor process on site
//!   sets placed by window lifting ([`torus_model`], [`lattice`]),
//! - coding-radius tail estimation with power/exponential fits, moment
//!   diagnostics, central-limit statistics of the information function, and
//!   consistency reports for the variance obstruction and the
//!   exponential-tail rigidity statement ([`statistics`]).
//!
//! The `finfactor` binary exposes one subcommand per construct; the
//! `examples/` directory demonstrates each major capability as a runnable
//! program.

pub mod cli;
pub mod codes;
pub mod error;
pub mod exact_oracle;
pub mod lattice;
pub mod process;
pub mod report;
pub mod rng;
pub mod statistics;
pub mod torus_model;

pub use error::{Error, Result};
