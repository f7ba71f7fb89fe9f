//! Numerical solvers for first-order linear transport
//! `u_t + b u_x + c u = f` under the pointwise gradient constraint
//! `|u_x| <= g` on an interval, with homogeneous Dirichlet data.
//!
//! Two constructive approximations are provided:
//!
//! - [`penalty`]: parabolic regularization with an exponential penalty on
//!   the diffusivity, `u_t - delta (k_eps(|u_x|^2 - g^2) u_x)_x + ... = f`;
//! - [`obstacle`]: for constant `b`, `c = 0`, `g = 1`, `f = f(t)`, the
//!   equivalent two-obstacle problem `-d <= z <= d` with a clamp penalty.
//!
//! [`oracle`] evaluates the closed-form transported sandpile used as ground
//! truth, and [`diagnostics`] measures errors, free boundaries,
//! stabilization times and stability ratios.

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod obstacle;
pub mod oracle;
pub mod penalty;
pub mod problem;
pub mod stationary;
pub mod tridiag;

pub use error::{Error, Result};
pub use grid::{forward_diff, l2_norm, max_gradient, Grid1D, ScalarField};
pub use oracle::{Contact, SandpileOracle};
pub use problem::{ProblemData, SolverParams, StepRecord, Trajectory};
pub use stationary::{solve_stationary, StationaryResult};
