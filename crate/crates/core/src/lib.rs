//! Codazzi tensors on hyperbolic surfaces and their flat Lorentzian
//! counterparts: Minkowski geometry, surface-group cocycles, discrete tensor
//! calculus in Klein charts, convex surface reconstruction, cone points and
//! symplectic pairings.

// `!(x <= tol)` is used on purpose so NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cone;
pub mod embedding;
pub mod fields;
pub mod holonomy;
pub mod jet;
pub mod mink;
pub mod pairing;
pub mod quadrature;
pub mod random;
pub mod tensors;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
