//! Variable-stepsize explicit second-derivative diagonally implicit
//! multistage integration methods (orders 1-4) directly on nonuniform
//! grids.
//!
//! The crate provides:
//!
//! * [`methods`] — the four concrete methods as functions of the
//!   stepsize-ratio vector, built from fixed coefficient parts plus a
//!   per-row order-condition solver;
//! * [`orderconds`] — order-condition residuals, error constants,
//!   propagation matrices and zero-stability checks for any tableau;
//! * [`integrator`] — the starting procedure and step recursion across a
//!   [`types::Grid`];
//! * [`grids`] — the oscillating-stepsize pattern generator and uniform
//!   grids;
//! * [`problems`] — benchmark problems with analytic second derivatives,
//!   plus a from-scratch embedded Runge-Kutta reference integrator in
//!   [`reference`];
//! * [`harness`] — convergence tables, observed orders and verification
//!   sweeps with CSV/markdown/JSON output.
//!
//! Everything is plain `f64` dense arithmetic; the method matrices never
//! exceed 4x4, and problem dimension enters only through blockwise
//! application of the tableau.

pub mod error;
pub mod grids;
pub mod harness;
pub mod integrator;
pub mod linalg;
pub mod methods;
pub mod orderconds;
pub mod problems;
pub mod reference;
pub mod types;

pub use error::{Error, Result};
pub use harness::{converge, emit_table, observed_order, verify_sweep, GridKind, TableFormat};
pub use integrator::{
    euclidean_diff, global_error, integrate, integrate_from, integrate_with_options,
    max_norm_diff, starting_state, starting_state_from, IntegrateOptions, IntegrationResult,
};
pub use methods::{order1, order2, order3, order4, solve_coefficients, tableau, FixedParts};
pub use orderconds::{
    error_constant, fixed_stepsize_check, output_residual, propagation_matrix,
    scalar_error_constant, stage_residual, taylor_matrices, zero_stability_product,
    TaylorMatrices,
};
pub use reference::{dopri5, reference_solution, reference_solution_with_tol, Dopri5Options};
pub use types::{
    validate_tableau, ConvergenceRow, Grid, OdeSystem, SolutionState, StepRatios, Tableau,
    ValidationReport,
};
