//! Two-obstacle formulation `-d <= z <= d` for constant `b`, `c = 0`,
//! `g = 1` and a source depending on time only.
//!
//! A step is split in two:
//! 1. implicit transport-diffusion, `(z* - z) / dt - delta D-D+ z* + b Dup z* = f`;
//! 2. implicit clamp penalty per node,
//!    `z' + lambda (z' - clamp(z', d)) = z*` with `lambda = delta dt / epsilon`,
//!    solved in closed form.

use crate::error::{Error, Result};
use crate::grid::{Grid1D, ScalarField};
use crate::oracle::Contact;
use crate::penalty::constraint_violation;
use crate::problem::{snapshot_steps, ProblemData, SolverParams, StepRecord, Trajectory};
use crate::tridiag::Tridiagonal;

/// Relative tolerance of the sampled checks on the restricted data class.
const RESTRICTION_TOL: f64 = 1e-12;

/// `min(max(v, -d), d)`.
pub fn clamp_to_obstacles(v: f64, d: f64) -> f64 {
    v.max(-d).min(d)
}

/// `v - clamp(v, d)`: zero inside the band, the excess outside it.
pub fn penalty_residual(v: f64, d: f64) -> f64 {
    v - clamp_to_obstacles(v, d)
}

/// Solves `z + lambda * penalty_residual(z, d) = target` for `z`.
pub fn penalty_solve(target: f64, d: f64, lambda: f64) -> f64 {
    if target > d {
        (target + lambda * d) / (1.0 + lambda)
    } else if target < -d {
        (target - lambda * d) / (1.0 + lambda)
    } else {
        target
    }
}

/// Labels the interior nodes (entry `k` is node `k + 1`): `Upper` where
/// `z >= d - tol`, `Lower` where `z <= -d + tol`, `Open` otherwise. `Upper`
/// wins when both hold.
pub fn coincidence_partition(field: &ScalarField, obstacle: &ScalarField, tol: f64) -> Vec<Contact> {
    let n = field.grid().n_cells();
    let (z, d) = (field.values(), obstacle.values());
    (1..n)
        .map(|i| {
            if z[i] >= d[i] - tol {
                Contact::Upper
            } else if z[i] <= -d[i] + tol {
                Contact::Lower
            } else {
                Contact::Open
            }
        })
        .collect()
}

/// State of the obstacle evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleState {
    pub current: ScalarField,
    pub t: f64,
    /// Distance to the boundary sampled at the nodes.
    pub obstacle: ScalarField,
    /// Running `sum_n sum_nodes (delta / epsilon) |z - clamp(z, d)| h dt`.
    pub penalty_mass_accumulated: f64,
}

impl ObstacleState {
    pub fn initial(data: &ProblemData) -> Self {
        Self {
            current: data.initial().clone(),
            t: 0.0,
            obstacle: ScalarField::boundary_distance(*data.grid()),
            penalty_mass_accumulated: 0.0,
        }
    }

    /// Largest excursion `(|z| - d)+` outside the band.
    pub fn band_excess(&self) -> f64 {
        band_excess(&self.current, &self.obstacle)
    }
}

pub fn band_excess(field: &ScalarField, obstacle: &ScalarField) -> f64 {
    field
        .values()
        .iter()
        .zip(obstacle.values())
        .fold(0.0, |acc, (z, d)| acc.max(z.abs() - d))
}

/// Checks by sampling that `b` is constant, `c = 0`, `g = 1` and `f = f(t)`.
pub fn check_restricted_data(data: &ProblemData) -> Result<f64> {
    let grid = data.grid();
    let b0 = data.velocity(grid.node(0), 0.0);
    let scale = 1.0 + b0.abs();
    for t in data.check_times() {
        let f_ref = data.source(grid.node(0), t);
        for x in grid.nodes().chain(grid.midpoints()) {
            if (data.velocity(x, t) - b0).abs() > RESTRICTION_TOL * scale {
                return Err(Error::Precondition(format!(
                    "velocity must be constant, b({x}, {t}) = {} != {b0}",
                    data.velocity(x, t)
                )));
            }
            if data.reaction(x, t) != 0.0 {
                return Err(Error::Precondition(format!(
                    "reaction must vanish, c({x}, {t}) = {}",
                    data.reaction(x, t)
                )));
            }
            if (data.bound(x, t) - 1.0).abs() > RESTRICTION_TOL {
                return Err(Error::Precondition(format!(
                    "gradient bound must be 1, g({x}, {t}) = {}",
                    data.bound(x, t)
                )));
            }
            let f = data.source(x, t);
            if (f - f_ref).abs() > RESTRICTION_TOL * (1.0 + f_ref.abs()) {
                return Err(Error::Precondition(format!(
                    "source must not depend on x, f({x}, {t}) = {f} != {f_ref}"
                )));
            }
        }
    }
    Ok(b0)
}

fn transport_matrix(grid: &Grid1D, b: f64, params: &SolverParams) -> Tridiagonal {
    let n = grid.n_cells();
    let h = grid.h();
    let dh2 = params.delta / (h * h);
    let mut m = Tridiagonal::zeros(n - 1);
    for row in 0..n - 1 {
        m.lower[row] = -dh2 - b.max(0.0) / h;
        m.upper[row] = -dh2 + b.min(0.0) / h;
        m.diag[row] = 1.0 / params.dt + b.abs() / h + 2.0 * dh2;
    }
    m
}

struct ObstacleStepper {
    matrix: Tridiagonal,
    rhs: Vec<f64>,
    interior: Vec<f64>,
    scratch: Vec<f64>,
}

impl ObstacleStepper {
    fn new(data: &ProblemData, params: &SolverParams) -> Result<Self> {
        let b = check_restricted_data(data)?;
        let n = data.grid().n_cells();
        Ok(Self {
            matrix: transport_matrix(data.grid(), b, params),
            rhs: vec![0.0; n - 1],
            interior: vec![0.0; n - 1],
            scratch: Vec::with_capacity(n),
        })
    }

    fn advance(
        &mut self,
        state: &ObstacleState,
        data: &ProblemData,
        params: &SolverParams,
    ) -> Result<ObstacleState> {
        let t_new = state.t + params.dt;
        let grid = *data.grid();
        let n = grid.n_cells();
        let z = state.current.values();
        let f = data.source(grid.node(0), t_new);
        for i in 1..n {
            self.rhs[i - 1] = z[i] / params.dt + f;
        }
        self.matrix
            .solve_into(&self.rhs, &mut self.interior, &mut self.scratch)
            .map_err(|b| Error::LinearSolveFailure {
                t: t_new,
                row: b.row + 1,
                pivot: b.pivot,
            })?;

        let lambda = params.delta * params.dt / params.epsilon;
        let d = state.obstacle.values();
        let mut next = vec![0.0; n + 1];
        let mut mass = 0.0;
        for i in 1..n {
            let zi = penalty_solve(self.interior[i - 1], d[i], lambda);
            mass += penalty_residual(zi, d[i]).abs();
            next[i] = zi;
        }
        mass *= params.delta / params.epsilon * grid.h() * params.dt;
        Ok(ObstacleState {
            current: ScalarField::new(grid, next)?,
            t: t_new,
            obstacle: state.obstacle.clone(),
            penalty_mass_accumulated: state.penalty_mass_accumulated + mass,
        })
    }
}

/// Advances `state` by one step.
pub fn step(state: &ObstacleState, data: &ProblemData, params: &SolverParams) -> Result<ObstacleState> {
    if state.t + params.dt > params.t_end + 0.5 * params.dt {
        return Err(Error::Precondition(format!(
            "step from t = {} would pass t_end = {}",
            state.t, params.t_end
        )));
    }
    ObstacleStepper::new(data, params)?.advance(state, data, params)
}

/// Runs to `t_end`, calling `observer` after each step.
pub fn run(
    data: &ProblemData,
    params: &SolverParams,
    mut observer: impl FnMut(usize, &ObstacleState),
) -> Result<ObstacleState> {
    params.validate()?;
    let mut stepper = ObstacleStepper::new(data, params)?;
    let mut state = ObstacleState::initial(data);
    for n in 1..=params.n_steps() {
        let mut next = stepper.advance(&state, data, params)?;
        next.t = params.time_of(n);
        state = next;
        observer(n, &state);
    }
    Ok(state)
}

/// Solves to `t_end`, keeping the initial state and the snapshots nearest
/// to `snapshot_times`.
pub fn solve(data: &ProblemData, params: &SolverParams, snapshot_times: &[f64]) -> Result<Trajectory> {
    params.validate()?;
    let steps = snapshot_steps(snapshot_times, params)?;
    let mut traj = Trajectory::initial(data.initial().clone());
    let mut pending = steps.iter().peekable();
    let g_mid = vec![1.0; data.grid().n_cells()];
    run(data, params, |n, state| {
        traj.diagnostics.push(StepRecord {
            t: state.t,
            constraint_violation: constraint_violation(&state.current, &g_mid),
            iterations: 1,
            penalty_mass: state.penalty_mass_accumulated,
            overflow_events: 0,
        });
        if pending.peek() == Some(&&n) {
            pending.next();
            traj.push(state.t, state.current.clone());
        }
    })?;
    Ok(traj)
}
