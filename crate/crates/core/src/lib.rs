//! Interpolated variational iteration method (IVIM) for initial value problems.
//!
//! Each iterate of the variational iteration sequence
//! `u_{m+1}(t) = G_m(t) - int_a^t H_m(s, t) ds` is replaced by its
//! piecewise-linear interpolant on a uniform grid, so every step reduces to a
//! finite nodal update with no symbolic integration.
//!
//! ```
//! use ivim_core::{solve, Equation, IvpSystem, QuadratureMode, SolveConfig};
//!
//! // Riccati equation u' = 2u - u^2 + 1, u(0) = 0, linear part u' - 2u
//! let sys = IvpSystem::new(
//!     0.0,
//!     1.0,
//!     vec![Equation::new(-2.0, |_, u| 2.0 * u[0] - u[0] * u[0] + 1.0)],
//!     vec![0.0],
//! )
//! .unwrap();
//! let report = solve(&sys, &SolveConfig::new(257, 10, QuadratureMode::Paper), None).unwrap();
//! let u1 = report.eval(1.0).unwrap()[0];
//! assert!((u1 - 1.6894984).abs() < 4e-3);
//! ```

pub mod dsl;
pub mod engine;
pub mod error;
pub mod grid;
pub mod multiplier;
pub mod oracle;
pub mod problem;

pub use engine::{
    eval_solution, ivim_step, ivim_step_with, solve, successive_diff_norm, Equation, IvpSystem,
    QuadratureMode, SolveConfig, SolveReport, StepOptions, Summation,
};
pub use error::{Error, Result};
pub use grid::{mu_weight, Grid, PiecewiseLinear};
pub use multiplier::Multiplier;
pub use oracle::{
    empirical_order, error_metrics, exact_builtin_eval, rk4_reference, trajectory_error, Builtin,
    ErrorMetrics, ReferenceSolution, ReferenceSource,
};
pub use problem::ProblemFile;
