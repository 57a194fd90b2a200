//! Conley-Zehnder indices of random symplectic paths.
//!
//! A random walk S_0 = I, S_1, ..., S_N in Sp(2n, R) is built from small
//! random steps. Its Conley-Zehnder index is computed three independent ways:
//! by winding of rho^2 ([`winding`]), by the signature of the Hessian of a
//! discrete action functional ([`action`]) and, for n = 1, by a lifted Mobius
//! recursion ([`riccati`]). [`sde`] covers the diffusion limit of the last.

pub mod action;
pub mod error;
pub mod linalg;
pub mod riccati;
pub mod rng;
pub mod sampling;
pub mod sde;
pub mod stats;
pub mod symplectic;
pub mod winding;

pub use error::{Error, Result};
pub use linalg::Mat;
pub use symplectic::{ComponentLabel, SpAlgebraElement, SymplecticMatrix, Tolerances, UnitCircleValue};
