//! Spectral laboratory for compressible gravity-capillary water waves on a
//! fixed slab `Omega = T^2_L x (-b, 0)`.
//!
//! The crate provides the building blocks of the construction: tangential
//! mollification, graph-coordinate covariant calculus, Tait equation of
//! state, elliptic and poly-harmonic solvers, the Dirichlet-to-Neumann
//! operator with its paradifferential symbols, compatibility-respecting
//! initial data, explicit time evolution of the regularized system, and the
//! energy-functional diagnostics used to measure the incompressible and
//! zero-surface-tension limits.

pub mod diagnostics;
pub mod dtn;
pub mod elliptic;
pub mod eos;
pub mod error;
pub mod evolve;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod initdata;
pub mod io;
pub mod para;
pub mod smoothing;

pub use error::{CapError, Result};
pub use field::{SurfaceField, VolumeField};
pub use grid::{Grid, Profiles};
