//! Strongly convergent forward-backward-forward solvers for variational
//! inequalities on (discretized) Hilbert spaces, with baselines and a dynamic
//! user equilibrium layer.
//!
//! The crate is organized bottom-up:
//!
//! * [`space`]: quadrature time grid, vectors and the weighted inner product.
//! * [`sets`]: feasible sets with exact projections.
//! * [`operators`]: VI problems, operator diagnostics and builtin instances.
//! * [`solvers`]: the anchored FBF scheme (constant and adaptive step) and
//!   the plain Tseng, extragradient and projected-gradient baselines.
//! * [`due`]: networks, delay operators, network loading and equilibrium
//!   gap metrics for dynamic traffic assignment.

// `!(x > 0.0)` style checks reject NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod due;
pub mod error;
pub mod operators;
pub mod sets;
pub mod solvers;
pub mod space;

pub use error::{Error, Result};
pub use operators::{Operator, VIProblem};
pub use sets::{FeasibleSet, ProjectionReport};
pub use solvers::{Schedule, SolveResult, Status, StepRule};
pub use space::{HVector, TimeGrid};
