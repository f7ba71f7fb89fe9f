//! Exponential-penalty parabolic regularization of the gradient-constrained
//! transport problem.
//!
//! Each step solves, for the interior nodes,
//!
//! ```text
//! (u' - u) / dt - delta * D-( k_eps(|D+u'|^2 - g^2) D+u' ) + b * Dup u' + c u' = f
//! ```
//!
//! with `b, c, f, g` sampled at the new time, `Dup` the first-order upwind
//! difference and homogeneous Dirichlet values at both ends. The diffusion
//! flux `k_eps(p^2 - g^2) p` is monotone in `p`, so the implicit operator is
//! an M-function and the step is solved by an inner iteration on tridiagonal
//! systems (see [`Linearization`]).

use crate::error::{Error, Result};
use crate::grid::{forward_diff, Grid1D, ScalarField};
use crate::problem::{snapshot_steps, ProblemData, SolverParams, StepRecord, Trajectory};
use crate::tridiag::Tridiagonal;

/// Largest exponent passed to `exp`; larger arguments are clamped.
pub const EXP_CLAMP: f64 = 700.0;

/// Iterates whose max norm exceeds this are treated as divergent.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// Penalty diffusivity: `1` for `s <= 0`, `exp(s / epsilon)` for `s > 0`,
/// capped at `exp(700)`.
pub fn k_eps(s: f64, epsilon: f64) -> f64 {
    k_eps_clamped(s, epsilon).0
}

/// [`k_eps`] together with a flag telling whether the cap was hit.
pub fn k_eps_clamped(s: f64, epsilon: f64) -> (f64, bool) {
    if s <= 0.0 {
        return (1.0, false);
    }
    let arg = s / epsilon;
    if arg > EXP_CLAMP {
        (EXP_CLAMP.exp(), true)
    } else {
        (arg.exp(), false)
    }
}

/// Max over cells of `(|D+u| - g)+`, with `g` sampled at cell midpoints.
pub fn constraint_violation(field: &ScalarField, g_at_t: &[f64]) -> f64 {
    debug_assert_eq!(g_at_t.len(), field.grid().n_cells());
    forward_diff(field)
        .into_iter()
        .zip(g_at_t)
        .fold(0.0, |acc, (p, g)| acc.max(p.abs() - g))
}

/// How the nonlinear diffusion is linearized inside a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Linearization {
    /// Lagged diffusivity: freeze `k_eps` at the previous iterate.
    Picard,
    /// Newton on nodal values and cell fluxes jointly. The flux is
    /// recovered through its inverse, which grows only logarithmically, so
    /// overshooting the flux is harmless where overshooting the slope is not.
    #[default]
    Newton,
}

/// State of the penalized evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyState {
    pub current: ScalarField,
    pub t: f64,
    pub picard_iterations_last: usize,
    /// Running `sum_n sum_cells k_eps(...) h dt`.
    pub penalty_mass_accumulated: f64,
    /// Cells whose exponent was clamped, summed over all steps.
    pub overflow_events: usize,
    /// Gradient-constraint violation after the last step.
    pub constraint_violation: f64,
}

impl PenaltyState {
    pub fn initial(data: &ProblemData) -> Self {
        Self::from_field(data.initial().clone(), 0.0, data)
    }

    /// A state at time `t` holding `field`.
    pub fn from_field(field: ScalarField, t: f64, data: &ProblemData) -> Self {
        let violation = constraint_violation(&field, &data.bound_at_midpoints(t));
        Self {
            current: field,
            t,
            picard_iterations_last: 0,
            penalty_mass_accumulated: 0.0,
            overflow_events: 0,
            constraint_violation: violation,
        }
    }

    pub fn record(&self) -> StepRecord {
        StepRecord {
            t: self.t,
            constraint_violation: self.constraint_violation,
            iterations: self.picard_iterations_last,
            penalty_mass: self.penalty_mass_accumulated,
            overflow_events: self.overflow_events,
        }
    }
}

/// Coefficients of one implicit step, sampled at the new time.
struct StepCoefficients {
    b: Vec<f64>,
    c: Vec<f64>,
    f: Vec<f64>,
    g2: Vec<f64>,
}

impl StepCoefficients {
    fn sample(data: &ProblemData, t: f64) -> Self {
        let grid = data.grid();
        Self {
            b: grid.nodes().map(|x| data.velocity(x, t)).collect(),
            c: grid.nodes().map(|x| data.reaction(x, t)).collect(),
            f: grid.nodes().map(|x| data.source(x, t)).collect(),
            g2: grid
                .midpoints()
                .map(|x| {
                    let g = data.bound(x, t);
                    g * g
                })
                .collect(),
        }
    }
}

/// Per-cell flux `F = k p` and the diffusivity `k` itself.
struct CellFluxes {
    flux: Vec<f64>,
    kappa: Vec<f64>,
    clamped: usize,
}

fn cell_fluxes(w: &[f64], h: f64, g2: &[f64], epsilon: f64, out: &mut CellFluxes) {
    out.clamped = 0;
    for j in 0..g2.len() {
        let p = (w[j + 1] - w[j]) / h;
        let s = p * p - g2[j];
        let (k, clamped) = k_eps_clamped(s, epsilon);
        out.clamped += usize::from(clamped);
        out.kappa[j] = k;
        out.flux[j] = k * p;
    }
}

/// Relative distance to the kink of the flux below which a cell is treated
/// as constrained. Slopes of saturated fields carry rounding error, and
/// picking the soft branch there sends the iterate far off.
const KINK_TOL: f64 = 1e-8;

/// Inverse of the cell flux `p -> k_eps(p^2 - g^2) p`: returns `p` and
/// `dp/dq` for the flux value `q`.
fn inverse_flux(q: f64, g2: f64, epsilon: f64) -> (f64, f64) {
    let aq = q.abs();
    let g = g2.sqrt();
    if aq < g * (1.0 - KINK_TOL) {
        return (q, 1.0);
    }
    let aq = aq.max(g);
    let k_max = EXP_CLAMP.exp();
    let p_clamp = (g2 + EXP_CLAMP * epsilon).sqrt();
    if aq >= k_max * p_clamp {
        return (q / k_max, 1.0 / k_max);
    }
    // (P^2 - g^2) / eps + ln P = ln|q| is convex and increasing in P; Newton
    // from the upper bound obtained by replacing ln P with ln g is monotone.
    let target = aq.ln();
    let mut big_p = (g2 + epsilon * (target - g.ln())).sqrt().min(p_clamp);
    for _ in 0..60 {
        let phi = (big_p * big_p - g2) / epsilon + big_p.ln() - target;
        let dphi = 2.0 * big_p / epsilon + 1.0 / big_p;
        let next = (big_p - phi / dphi).max(g);
        let done = (next - big_p).abs() <= 4.0 * f64::EPSILON * big_p;
        big_p = next;
        if done {
            break;
        }
    }
    let dp_dq = big_p / (aq * (1.0 + 2.0 * big_p * big_p / epsilon));
    (big_p.copysign(q), dp_dq)
}

/// Implicit-step residual at the interior nodes; entry `i - 1` belongs to node `i`.
fn residual(
    w: &[f64],
    previous: &[f64],
    coeffs: &StepCoefficients,
    fluxes: &CellFluxes,
    h: f64,
    dt: f64,
    delta: f64,
    out: &mut [f64],
) {
    let n = w.len() - 1;
    for i in 1..n {
        let b = coeffs.b[i];
        let transport = if b >= 0.0 {
            b * (w[i] - w[i - 1]) / h
        } else {
            b * (w[i + 1] - w[i]) / h
        };
        out[i - 1] = (w[i] - previous[i]) / dt + transport + coeffs.c[i] * w[i]
            - delta * (fluxes.flux[i] - fluxes.flux[i - 1]) / h
            - coeffs.f[i];
    }
}

/// Assembles the interior tridiagonal matrix with cell diffusivities `kappa`.
fn assemble(
    matrix: &mut Tridiagonal,
    coeffs: &StepCoefficients,
    kappa: &[f64],
    h: f64,
    dt: f64,
    delta: f64,
) {
    let n = kappa.len();
    let dh2 = delta / (h * h);
    for i in 1..n {
        let b = coeffs.b[i];
        let row = i - 1;
        matrix.lower[row] = -dh2 * kappa[i - 1] - b.max(0.0) / h;
        matrix.upper[row] = -dh2 * kappa[i] + b.min(0.0) / h;
        matrix.diag[row] = 1.0 / dt + coeffs.c[i] + b.abs() / h + dh2 * (kappa[i] + kappa[i - 1]);
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Advances `state` by one step with the default [`Linearization`].
pub fn step(state: &PenaltyState, data: &ProblemData, params: &SolverParams) -> Result<PenaltyState> {
    step_with(state, data, params, Linearization::default())
}

/// Advances `state` by one step.
pub fn step_with(
    state: &PenaltyState,
    data: &ProblemData,
    params: &SolverParams,
    linearization: Linearization,
) -> Result<PenaltyState> {
    if state.t + params.dt > params.t_end + 0.5 * params.dt {
        return Err(Error::Precondition(format!(
            "step from t = {} would pass t_end = {}",
            state.t, params.t_end
        )));
    }
    let t_new = state.t + params.dt;
    let mut stepper = Stepper::new(*data.grid());
    let outcome = stepper.advance(&state.current, t_new, data, params, linearization)?;
    let h = data.grid().h();
    let mass: f64 = stepper.fluxes.kappa.iter().sum::<f64>() * h * params.dt;
    let g_mid = data.bound_at_midpoints(t_new);
    let next = ScalarField::new(*data.grid(), outcome.values)?;
    Ok(PenaltyState {
        constraint_violation: constraint_violation(&next, &g_mid),
        current: next,
        t: t_new,
        picard_iterations_last: outcome.iterations,
        penalty_mass_accumulated: state.penalty_mass_accumulated + mass,
        overflow_events: state.overflow_events + stepper.fluxes.clamped,
    })
}

struct StepOutcome {
    values: Vec<f64>,
    iterations: usize,
}

/// Scratch buffers for one implicit step.
struct Stepper {
    h: f64,
    fluxes: CellFluxes,
    matrix: Tridiagonal,
    rhs: Vec<f64>,
    update: Vec<f64>,
    scratch: Vec<f64>,
    cell_flux: Vec<f64>,
    cell_gain: Vec<f64>,
    mismatch: Vec<f64>,
}

impl Stepper {
    fn new(grid: Grid1D) -> Self {
        let n = grid.n_cells();
        Self {
            h: grid.h(),
            fluxes: CellFluxes {
                flux: vec![0.0; n],
                kappa: vec![0.0; n],
                clamped: 0,
            },
            matrix: Tridiagonal::zeros(n - 1),
            rhs: vec![0.0; n - 1],
            update: vec![0.0; n - 1],
            scratch: Vec::with_capacity(n),
            cell_flux: vec![0.0; n],
            cell_gain: vec![0.0; n],
            mismatch: vec![0.0; n],
        }
    }

    fn advance(
        &mut self,
        previous: &ScalarField,
        t_new: f64,
        data: &ProblemData,
        params: &SolverParams,
        linearization: Linearization,
    ) -> Result<StepOutcome> {
        let coeffs = StepCoefficients::sample(data, t_new);
        let prev = previous.values();
        let mut w = prev.to_vec();
        let n = w.len() - 1;
        w[0] = 0.0;
        w[n] = 0.0;

        let (h, dt, delta, eps) = (self.h, params.dt, params.delta, params.epsilon);
        cell_fluxes(&w, h, &coeffs.g2, eps, &mut self.fluxes);
        residual(&w, prev, &coeffs, &self.fluxes, h, dt, delta, &mut self.rhs);
        let initial_residual = norm2(&self.rhs);
        let mut current_residual = initial_residual;

        self.cell_flux.copy_from_slice(&self.fluxes.flux);

        let mut iterations = 0;
        let mut converged = false;
        while iterations < params.picard_max {
            iterations += 1;
            let change = match linearization {
                Linearization::Picard => {
                    assemble(&mut self.matrix, &coeffs, &self.fluxes.kappa, h, dt, delta);
                    self.check_matrix(t_new, iterations, current_residual)?;
                    for i in 1..n {
                        self.rhs[i - 1] = prev[i] / dt + coeffs.f[i];
                    }
                    self.solve_linear(t_new, iterations, current_residual)?;
                    let mut change: f64 = 0.0;
                    for i in 1..n {
                        change = change.max((self.update[i - 1] - w[i]).abs());
                        w[i] = self.update[i - 1];
                    }
                    cell_fluxes(&w, h, &coeffs.g2, eps, &mut self.fluxes);
                    residual(&w, prev, &coeffs, &self.fluxes, h, dt, delta, &mut self.rhs);
                    current_residual = norm2(&self.rhs);
                    change
                }
                Linearization::Newton => {
                    let m = self.cell_flux.len();
                    for j in 0..m {
                        let (p_of_q, dp_dq) = inverse_flux(self.cell_flux[j], coeffs.g2[j], eps);
                        self.cell_gain[j] = 1.0 / dp_dq;
                        self.mismatch[j] = (w[j + 1] - w[j]) / h - p_of_q;
                    }
                    assemble(&mut self.matrix, &coeffs, &self.cell_gain, h, dt, delta);
                    self.check_matrix(t_new, iterations, current_residual)?;
                    let dh = delta / h;
                    for i in 1..n {
                        let b = coeffs.b[i];
                        let transport = if b >= 0.0 {
                            b * (w[i] - w[i - 1]) / h
                        } else {
                            b * (w[i + 1] - w[i]) / h
                        };
                        let r = (w[i] - prev[i]) / dt + transport + coeffs.c[i] * w[i]
                            - dh * (self.cell_flux[i] - self.cell_flux[i - 1])
                            - coeffs.f[i];
                        self.rhs[i - 1] = -r
                            + dh * (self.cell_gain[i] * self.mismatch[i]
                                - self.cell_gain[i - 1] * self.mismatch[i - 1]);
                    }
                    self.solve_linear(t_new, iterations, current_residual)?;
                    for j in 0..m {
                        let du_right = if j + 1 < n { self.update[j] } else { 0.0 };
                        let du_left = if j > 0 { self.update[j - 1] } else { 0.0 };
                        let dp = (du_right - du_left) / h;
                        self.cell_flux[j] += self.cell_gain[j] * (dp + self.mismatch[j]);
                    }
                    for i in 1..n {
                        w[i] += self.update[i - 1];
                    }
                    // The linear model may carry a flux through zero. Where the
                    // new slope is unconstrained, or of the other sign, the
                    // primal flux is a safe restart.
                    for j in 0..m {
                        let p = (w[j + 1] - w[j]) / h;
                        if p * p <= coeffs.g2[j] || p * self.cell_flux[j] < 0.0 {
                            self.cell_flux[j] = k_eps(p * p - coeffs.g2[j], eps) * p;
                        }
                    }
                    cell_fluxes(&w, h, &coeffs.g2, eps, &mut self.fluxes);
                    residual(&w, prev, &coeffs, &self.fluxes, h, dt, delta, &mut self.rhs);
                    current_residual = norm2(&self.rhs);
                    max_abs(&self.update)
                }
            };
            if !(max_abs(&w) <= DIVERGENCE_BOUND) {
                return Err(Error::PicardDivergence {
                    t: t_new,
                    iterations,
                    residual: current_residual,
                });
            }
            if change <= params.picard_tol {
                converged = true;
                break;
            }
        }
        if !converged && current_residual > initial_residual {
            return Err(Error::PicardDivergence {
                t: t_new,
                iterations,
                residual: current_residual,
            });
        }
        Ok(StepOutcome {
            values: w,
            iterations,
        })
    }

    /// Diffusivities beyond the floating-point range mean the iteration has
    /// run away; report that instead of a meaningless pivot failure.
    fn check_matrix(&self, t: f64, iterations: usize, residual: f64) -> Result<()> {
        let finite = self
            .matrix
            .diag
            .iter()
            .chain(&self.matrix.lower)
            .chain(&self.matrix.upper)
            .all(|v| v.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::PicardDivergence {
                t,
                iterations,
                residual,
            })
        }
    }

    fn solve_linear(&mut self, t: f64, iterations: usize, residual: f64) -> Result<()> {
        let clamped = self.fluxes.clamped > 0;
        self.matrix
            .solve_into(&self.rhs, &mut self.update, &mut self.scratch)
            .map_err(|b| {
                if clamped {
                    // elimination through capped diffusivities: the iterate ran away
                    Error::PicardDivergence {
                        t,
                        iterations,
                        residual,
                    }
                } else {
                    Error::LinearSolveFailure {
                        t,
                        row: b.row + 1,
                        pivot: b.pivot,
                    }
                }
            })
    }
}

/// Runs the penalized evolution from `u0` to `t_end`, calling `observer`
/// after every step.
pub fn run(
    data: &ProblemData,
    params: &SolverParams,
    linearization: Linearization,
    mut observer: impl FnMut(usize, &PenaltyState),
) -> Result<PenaltyState> {
    params.validate()?;
    let mut state = PenaltyState::initial(data);
    for n in 1..=params.n_steps() {
        let mut next = step_with(&state, data, params, linearization)?;
        // re-anchor to avoid drift from repeated addition of dt
        next.t = params.time_of(n);
        state = next;
        observer(n, &state);
    }
    Ok(state)
}

/// Solves to `t_end`, keeping snapshots at the steps nearest to
/// `snapshot_times` plus the initial state.
pub fn solve(data: &ProblemData, params: &SolverParams, snapshot_times: &[f64]) -> Result<Trajectory> {
    solve_with(data, params, snapshot_times, Linearization::default())
}

pub fn solve_with(
    data: &ProblemData,
    params: &SolverParams,
    snapshot_times: &[f64],
    linearization: Linearization,
) -> Result<Trajectory> {
    params.validate()?;
    let steps = snapshot_steps(snapshot_times, params)?;
    let mut traj = Trajectory::initial(data.initial().clone());
    let mut next_snapshot = steps.iter().peekable();
    run(data, params, linearization, |n, state| {
        traj.diagnostics.push(state.record());
        if next_snapshot.peek() == Some(&&n) {
            next_snapshot.next();
            traj.push(state.t, state.current.clone());
        }
    })?;
    Ok(traj)
}
