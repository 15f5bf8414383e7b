//! Optimal (Gaussian and Gauss-Radau) quadrature rules for even-degree spline
//! spaces of the kind produced by Galerkin discretizations.
//!
//! The crate derives rules that integrate every element of a target spline
//! space exactly while using the minimum possible number of nodes: two-element
//! building blocks are solved directly from their small algebraic systems,
//! larger spaces are reached by tracing the rule as the knot vector of a
//! merged source space is continuously transformed into the target, and on
//! uniform knot vectors the rules converge to closed-form periodic patterns
//! that are also provided, together with composition and verification tools.

pub mod asymptotic;
pub mod blocks;
pub mod homotopy;
pub mod linalg;
pub mod newton;
pub mod quadrature;
pub mod real;
pub mod reference;
pub mod rulefile;
pub mod system;
pub mod spline;

pub use quadrature::{QuadratureRule, ResidualReport};
pub use real::{DDouble, Real};
pub use spline::{GalerkinSpec, KnotVector, RuleKind, SplineSpace};
