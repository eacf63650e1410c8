//! Command-line front-end for `hkflow`. The binary is a thin wrapper; the
//! commands live here so tests can drive them in-process.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod meshio;
pub mod output;
pub mod report;

pub use error::{CliError, CliResult};
