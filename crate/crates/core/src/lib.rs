//! Locked and partially locked bound states of coupled cubic Schrodinger
//! systems on radial domains: ground state, locked branch, bifurcation
//! points, Morse indices and branch continuation in reduced coordinates.

// NaN-rejecting `!(x > 0.0)` guards and indexed stencil loops are deliberate
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

pub mod compensated;
pub mod continuation;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod locked;
pub mod partition;
pub mod scalar;
pub mod system;

pub use error::{Error, Result};
