//! Dyadic Morrey norms, powered maximal functions and the bilinear fractional
//! integrals `J_α`, `I_α` on non-negative step functions, together with the
//! dyadic majorants that dominate them and a harness that measures the
//! implicit constants of the associated inequalities.

#![forbid(unsafe_code)]

pub mod corpus;
pub mod error;
pub mod grid;
pub mod lattice;
pub mod norms;
pub mod operators;
pub mod quadrature;
pub mod verifier;

pub use error::{Error, Result};
pub use grid::{BlockSums, GridFunction, GridSpec};
pub use norms::MorreyExponents;
pub use operators::{MajorantTruncation, OperatorParams};
pub use lattice::{relation, BinaryRational, DyadicBox, DyadicCube, Relation};
