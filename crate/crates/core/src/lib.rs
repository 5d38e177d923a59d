//! Numerical laboratory for the Calabi flow on desk-scale Kähler reductions.
//!
//! Two geometry backends are provided: the flat square torus carrying a
//! conformal Kähler potential, and S¹-invariant metrics on the sphere in
//! symplectic (toric) coordinates. On top of them sit a semi-implicit
//! spectral flow engine, per-state diagnostics, trace analysis of the
//! regularity-scale quantities, and deterministic file formats.

// NaN-rejecting guards are written as `!(x > 0.0)` throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod par;
pub mod presets;
pub mod scale;
pub mod spectral;
pub mod trace;
pub mod trace_io;
pub mod verify;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testutil;
