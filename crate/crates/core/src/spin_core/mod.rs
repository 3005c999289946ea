//! Spin-operator algebra and dense complex-matrix numerics.
//!
//! Hamiltonians are expressed in linear frequency units (MHz) and times in
//! µs, so the propagator of a constant Hamiltonian is `exp(-i 2π H t)`.

mod linalg;
mod operator;
mod spin;

pub use linalg::{eigenbasis, herm_expm, propagator_from_eigen, Eigen, HERMITIAN_TOL};
pub use operator::{Operator, C64};
pub use spin::{embed, spin_operators, Spin, SpinOperators, SpinSite};

use thiserror::Error;

/// Largest product-space dimension the dense routines accept.
pub const DEFAULT_MAX_DIM: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpinError {
    #[error("spin quantum number {0} is not a non-negative half-integer")]
    NotHalfInteger(f64),
    #[error("operator of dimension {found} does not match site dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("site index {index} out of range for a system of {len} sites")]
    SiteOutOfRange { index: usize, len: usize },
    #[error("operator is not Hermitian (max |A - A†| = {error:e})")]
    NotHermitian { error: f64 },
    #[error("{len} entries do not form a square matrix of dimension {dim}")]
    NotSquare { dim: usize, len: usize },
    #[error("operator has non-finite entries")]
    NonFinite,
    #[error("product dimension {dim} exceeds the configured cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
}
