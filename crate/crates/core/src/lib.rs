//! Constrained stochastic optimization by successive convex approximation with
//! recursive-momentum (STORM) gradient tracking.
//!
//! The crate solves problems of the form
//!
//! ```text
//! minimize    E[f(x, ξ)] + u(x)
//! subject to  h_i(x) <= 0   (convex, smooth)
//!             g_j(x) <= 0   (smooth, possibly non-convex)
//! ```
//!
//! Each iteration tracks the expected gradient with a STORM recursion, builds a
//! strongly convex running surrogate of the objective and convex majorizers of
//! the non-convex constraints at the current iterate, solves the resulting
//! convex subproblem with an augmented-Lagrangian solver, and moves a step
//! `η_t` towards its solution. Because the constraint surrogates majorize the
//! originals, every iterate stays feasible.
//!
//! Module map:
//!
//! - [`problem`]: the problem abstraction and shared numeric helpers.
//! - [`schedule`]: step-size / momentum schedules and the tracking update.
//! - [`surrogate`]: objective and constraint surrogates plus their validators.
//! - [`subsolver`]: the convex subproblem solver with KKT residuals.
//! - [`costa`]: the outer driver, the classical-tracking baseline and rate
//!   certificates.
//! - [`cq`]: constraint-qualification and ε-KKT diagnostics.
//! - [`validation`]: the validator suite run over a whole problem.
//! - [`problems`]: sparse MCP-constrained classification, trajectory planning
//!   under ensemble currents, and small synthetic benchmarks.

pub mod costa;
pub mod cq;
mod error;
pub mod linalg;
pub mod problem;
pub mod problems;
pub mod schedule;
pub mod subsolver;
pub mod surrogate;
pub mod validation;

pub use error::{CostaError, Result};
pub use problem::{
    estimate_expected_objective, feasibility_violation, ConstraintFn, NonconvexConstraint,
    Regularizer, SmoothFn, SmoothnessMeta, StochasticProblem,
};
