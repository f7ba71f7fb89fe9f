//! Stationary problem by pseudo-time marching.
//!
//! With time-independent, strictly coercive data the penalized evolution
//! relaxes to a unique steady state. We march the evolution step from the
//! initial field of the problem until the discrete time derivative is small.

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::penalty::{step_with, Linearization, PenaltyState};
use crate::problem::{ProblemData, SolverParams};

/// Default bound on `max |u^{n+1} - u^n| / dt` at termination.
pub const DEFAULT_STEADY_TOL: f64 = 1e-6;

/// Relative tolerance used when checking that the data do not depend on time.
const TIME_INDEPENDENCE_TOL: f64 = 1e-12;

/// Default pseudo-time budget for coercivity constant `lambda`.
pub fn default_t_max(lambda: f64) -> f64 {
    50.0 / lambda
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryResult {
    pub solution: ScalarField,
    pub pseudo_time_used: f64,
    /// `max |u^{n+1} - u^n| / dt` over the last step.
    pub steady_residual: f64,
}

/// Marches from `data.initial()` until the steady residual drops to
/// `steady_tol`. Only `epsilon`, `delta`, `dt` and the inner-iteration
/// settings of `params` are used; `t_max` replaces `t_end`.
pub fn solve_stationary(
    data: &ProblemData,
    params: &SolverParams,
    steady_tol: f64,
    t_max: f64,
) -> Result<StationaryResult> {
    if !(steady_tol > 0.0) {
        return Err(Error::InvalidParams(format!(
            "steady tolerance must be positive, got {steady_tol}"
        )));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "pseudo-time budget must be positive, got {t_max}"
        )));
    }
    if !(data.coercivity() > 0.0) {
        return Err(Error::Precondition(format!(
            "stationary solve needs strictly coercive data, got l = {}",
            data.coercivity()
        )));
    }
    check_time_independent(data)?;

    let params = params.with_t_end(t_max);
    params.validate()?;
    let mut state = PenaltyState::initial(data);
    let mut residual = f64::INFINITY;
    for n in 1..=params.n_steps() {
        let mut next = step_with(&state, data, &params, Linearization::Newton)?;
        next.t = params.time_of(n);
        residual = next.current.max_distance(&state.current)? / params.dt;
        state = next;
        if residual <= steady_tol {
            return Ok(StationaryResult {
                solution: state.current,
                pseudo_time_used: state.t,
                steady_residual: residual,
            });
        }
    }
    Err(Error::NoSteadyState {
        t_max,
        residual,
        tol: steady_tol,
    })
}

fn check_time_independent(data: &ProblemData) -> Result<()> {
    let grid = *data.grid();
    let close = |a: f64, b: f64| (a - b).abs() <= TIME_INDEPENDENCE_TOL * (1.0 + a.abs().max(b.abs()));
    for t in data.check_times() {
        for x in grid.nodes().chain(grid.midpoints()) {
            let pairs = [
                ("velocity", data.velocity(x, 0.0), data.velocity(x, t)),
                ("reaction", data.reaction(x, 0.0), data.reaction(x, t)),
                ("source", data.source(x, 0.0), data.source(x, t)),
                ("bound", data.bound(x, 0.0), data.bound(x, t)),
            ];
            for (name, a, b) in pairs {
                if !close(a, b) {
                    return Err(Error::Precondition(format!(
                        "{name} depends on time at x = {x}: {a} at t = 0, {b} at t = {t}"
                    )));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{max_gradient, Grid1D};

    fn coercive(grid: Grid1D, f: f64) -> ProblemData {
        ProblemData::builder(ScalarField::zeros(grid))
            .reaction(|_, _| 1.0)
            .source(move |_, _| f)
            .horizon(1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn zero_data_gives_zero() {
        let grid = Grid1D::unit(50).unwrap();
        let params = SolverParams::new(1e-3, 1e-2, 0.05, 1.0).unwrap();
        let res = solve_stationary(&coercive(grid, 0.0), &params, 1e-8, 10.0).unwrap();
        assert_eq!(res.solution.max_abs(), 0.0);
        assert!(res.steady_residual <= 1e-8);
    }

    #[test]
    fn saturated_source_gives_distance() {
        let grid = Grid1D::unit(100).unwrap();
        let params = SolverParams::new(1e-5, 1e-2, 0.05, 1.0).unwrap();
        let data = coercive(grid, 2.0);
        let res = solve_stationary(&data, &params, DEFAULT_STEADY_TOL, default_t_max(1.0)).unwrap();
        let d = ScalarField::boundary_distance(grid);
        assert!(res.solution.max_distance(&d).unwrap() <= 2.0 * grid.h() + 0.02);
        assert!(max_gradient(&res.solution) <= 1.0 + 1e-3);
        assert!(res.steady_residual <= DEFAULT_STEADY_TOL);

        // same limit from the other end of the constraint set
        let from_d = data.to_builder().initial(d.clone()).build().unwrap();
        let other = solve_stationary(&from_d, &params, DEFAULT_STEADY_TOL, default_t_max(1.0)).unwrap();
        assert!(other.solution.max_distance(&res.solution).unwrap() <= 1e-4);
    }

    #[test]
    fn rejects_time_dependent_source() {
        let grid = Grid1D::unit(20).unwrap();
        let data = ProblemData::builder(ScalarField::zeros(grid))
            .reaction(|_, _| 1.0)
            .source(|_, t| t)
            .horizon(1.0)
            .build()
            .unwrap();
        let params = SolverParams::new(1e-3, 1e-2, 0.05, 1.0).unwrap();
        assert!(matches!(
            solve_stationary(&data, &params, 1e-6, 10.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn rejects_non_coercive_data() {
        let grid = Grid1D::unit(20).unwrap();
        let data = ProblemData::builder(ScalarField::zeros(grid)).horizon(1.0).build().unwrap();
        let params = SolverParams::new(1e-3, 1e-2, 0.05, 1.0).unwrap();
        assert!(matches!(
            solve_stationary(&data, &params, 1e-6, 10.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let grid = Grid1D::unit(20).unwrap();
        let params = SolverParams::new(1e-3, 1e-2, 0.05, 1.0).unwrap();
        let err = solve_stationary(&coercive(grid, 2.0), &params, 1e-10, 0.2).unwrap_err();
        assert!(matches!(err, Error::NoSteadyState { .. }));
    }
}
