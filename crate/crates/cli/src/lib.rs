//! Config-driven runner for the PCG benchmarks, eigenvalue studies, convergence
//! ladders and simulations built on `sgn-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod error;
pub mod record;
pub mod runners;
pub mod setup;

pub use config::{Command, RunConfig};
pub use error::{CliError, CliResult};
pub use record::{RunRecord, Status};
pub use runners::run;
