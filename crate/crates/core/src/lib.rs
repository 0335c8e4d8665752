//! Iterative quasi-LPV model predictive control.
//!
//! The crate implements the standard qLMPC iteration (frozen parameter
//! trajectory) and its exact variant (a fictitious disturbance system that
//! turns each iteration into a Gauss-Newton SQP step) for equality
//! constrained optimal control problems, together with numerical checks of
//! their convergence and suboptimality properties and a closed-loop
//! benchmark harness.

pub mod closed_loop;
pub mod condensed;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod solver;
pub mod stacked;

pub use closed_loop::{Scenario, ScenarioResult};
pub use error::{Error, Result};
pub use model::{builtin, LpvModel, ModelDims};
pub use solver::{IterateTrace, Mode, SolverOptions, Variant};
pub use stacked::{DecisionVector, Horizon, KktPoint, Layout, StackedProblem, Weights};
