#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

//! Discrete H^k mean curvature flow on closed triangulated surfaces.

pub mod analytic;
pub mod error;
pub mod extension;
pub mod flow;
pub mod geometry;
pub mod mesh;
pub mod moser;
pub mod report;
pub mod sobolev;
pub mod stats;

pub use error::{Error, Result};
