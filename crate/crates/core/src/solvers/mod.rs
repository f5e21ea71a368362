//! Iterative reconstruction: unregularized ML, and ℓ₁-regularized sparse
//! coding with ISTA/FISTA.

mod ml;
mod problem;
mod proximal;
mod reconstruct;
mod report;
mod shrink;

pub use ml::{solve_ml_unregularized, MlConfig};
pub use problem::{data_grad, l1_norm, lipschitz_estimate, objective, PatchProblem};
pub use proximal::{fista_momentum, solve_fista, solve_ista, SolverConfig, StepRule, Variant};
pub use reconstruct::{reconstruct_image, Method, PatchSetup, Reconstruction};
pub use report::{merged_report_csv, IterationRecord, SolverReport, SolverStatus, REPORT_CSV_HEADER};
pub use shrink::{shrink, shrink_derivative, shrink_each, shrink_scalar, shrink_threshold_derivative};
