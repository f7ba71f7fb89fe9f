//! Problem data `(b, c, f, g, u0)`, solver configuration and trajectories.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{forward_diff, Grid1D, ScalarField};

/// A space-time coefficient `(x, t) -> value`.
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Number of time samples used by the construction-time checks.
pub const CHECK_TIME_SAMPLES: usize = 32;

/// Slack allowed when checking `u0` against the gradient bound.
pub const INITIAL_GRADIENT_SLACK: f64 = 1e-12;

fn constant(value: f64) -> SpaceTimeFn {
    Arc::new(move |_, _| value)
}

/// Data of the constrained transport problem
/// `u_t + b u_x + c u = f`, `|u_x| <= g`, `u = 0` on the boundary, `u(0) = u0`.
///
/// Construct through [`ProblemData::builder`]. The structural assumptions
/// (`g >= m > 0`, `u0` feasible, `c - b_x / 2 >= l`) are verified by
/// sampling the callbacks on the grid nodes at [`CHECK_TIME_SAMPLES`]
/// instants of `[0, horizon]`.
#[derive(Clone)]
pub struct ProblemData {
    velocity: SpaceTimeFn,
    reaction: SpaceTimeFn,
    source: SpaceTimeFn,
    bound: SpaceTimeFn,
    initial: ScalarField,
    lower_bound: f64,
    coercivity: f64,
    horizon: f64,
}

impl fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemData")
            .field("grid", self.grid())
            .field("lower_bound", &self.lower_bound)
            .field("coercivity", &self.coercivity)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl ProblemData {
    /// Starts a builder with `b = 0`, `c = 0`, `f = 0`, `g = 1`.
    pub fn builder(initial: ScalarField) -> ProblemDataBuilder {
        ProblemDataBuilder {
            velocity: constant(0.0),
            reaction: constant(0.0),
            source: constant(0.0),
            bound: constant(1.0),
            initial,
            lower_bound: None,
            coercivity: None,
            horizon: 1.0,
        }
    }

    /// Returns a builder pre-filled with this problem's data.
    pub fn to_builder(&self) -> ProblemDataBuilder {
        ProblemDataBuilder {
            velocity: self.velocity.clone(),
            reaction: self.reaction.clone(),
            source: self.source.clone(),
            bound: self.bound.clone(),
            initial: self.initial.clone(),
            lower_bound: Some(self.lower_bound),
            coercivity: Some(self.coercivity),
            horizon: self.horizon,
        }
    }

    pub fn grid(&self) -> &Grid1D {
        self.initial.grid()
    }

    pub fn initial(&self) -> &ScalarField {
        &self.initial
    }

    /// Lower bound `m` of the gradient bound.
    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    /// Coercivity constant `l` with `c - b_x / 2 >= l`.
    pub fn coercivity(&self) -> f64 {
        self.coercivity
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn velocity(&self, x: f64, t: f64) -> f64 {
        (self.velocity)(x, t)
    }

    pub fn reaction(&self, x: f64, t: f64) -> f64 {
        (self.reaction)(x, t)
    }

    pub fn source(&self, x: f64, t: f64) -> f64 {
        (self.source)(x, t)
    }

    pub fn bound(&self, x: f64, t: f64) -> f64 {
        (self.bound)(x, t)
    }

    /// `g(., t)` sampled at the cell midpoints.
    pub fn bound_at_midpoints(&self, t: f64) -> Vec<f64> {
        self.grid().midpoints().map(|x| self.bound(x, t)).collect()
    }

    /// Instants used by the sampled structural checks.
    pub fn check_times(&self) -> impl Iterator<Item = f64> {
        let horizon = self.horizon;
        (0..CHECK_TIME_SAMPLES).map(move |k| horizon * k as f64 / (CHECK_TIME_SAMPLES - 1) as f64)
    }
}

/// Builder for [`ProblemData`].
pub struct ProblemDataBuilder {
    velocity: SpaceTimeFn,
    reaction: SpaceTimeFn,
    source: SpaceTimeFn,
    bound: SpaceTimeFn,
    initial: ScalarField,
    lower_bound: Option<f64>,
    coercivity: Option<f64>,
    horizon: f64,
}

impl ProblemDataBuilder {
    pub fn velocity(mut self, b: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.velocity = Arc::new(b);
        self
    }

    pub fn reaction(mut self, c: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.reaction = Arc::new(c);
        self
    }

    pub fn source(mut self, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.source = Arc::new(f);
        self
    }

    pub fn bound(mut self, g: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.bound = Arc::new(g);
        self
    }

    pub fn initial(mut self, u0: ScalarField) -> Self {
        self.initial = u0;
        self
    }

    /// Asserted lower bound `m` of `g`. Defaults to the sampled minimum.
    pub fn lower_bound(mut self, m: f64) -> Self {
        self.lower_bound = Some(m);
        self
    }

    /// Asserted constant `l` in `c - b_x / 2 >= l`. Defaults to the
    /// sampled minimum.
    pub fn coercivity(mut self, l: f64) -> Self {
        self.coercivity = Some(l);
        self
    }

    /// End of the time window over which the data is checked.
    pub fn horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn build(self) -> Result<ProblemData> {
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::InvalidProblem(format!(
                "horizon must be finite and non-negative, got {}",
                self.horizon
            )));
        }
        let grid = *self.initial.grid();
        let data = ProblemData {
            velocity: self.velocity,
            reaction: self.reaction,
            source: self.source,
            bound: self.bound,
            initial: self.initial,
            lower_bound: 0.0,
            coercivity: 0.0,
            horizon: self.horizon,
        };

        // g >= m > 0
        let mut g_min = f64::INFINITY;
        for t in data.check_times() {
            for x in grid.nodes().chain(grid.midpoints()) {
                let g = data.bound(x, t);
                if !g.is_finite() {
                    return Err(Error::InvalidProblem(format!(
                        "g({x}, {t}) is not finite"
                    )));
                }
                g_min = g_min.min(g);
            }
        }
        let m = self.lower_bound.unwrap_or(g_min);
        if !(m > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "gradient bound must stay above m > 0, got m = {m}"
            )));
        }
        if g_min < m {
            return Err(Error::InvalidProblem(format!(
                "g drops to {g_min} below the asserted m = {m}"
            )));
        }

        // u0 in K_{g(0)}
        if !data.initial.has_zero_trace(INITIAL_GRADIENT_SLACK) {
            return Err(Error::InvalidProblem(
                "initial state must vanish on the boundary".to_string(),
            ));
        }
        for (i, p) in forward_diff(&data.initial).into_iter().enumerate() {
            let g_cell = data
                .bound(grid.node(i), 0.0)
                .max(data.bound(grid.node(i + 1), 0.0))
                .max(data.bound(grid.midpoint(i), 0.0));
            if p.abs() > g_cell + INITIAL_GRADIENT_SLACK {
                return Err(Error::InvalidProblem(format!(
                    "initial gradient {} exceeds g = {} in cell {i}",
                    p.abs(),
                    g_cell
                )));
            }
        }

        // c - b_x / 2 >= l, with b_x from central differences of the callback
        let h = grid.h();
        let mut l_min = f64::INFINITY;
        for t in data.check_times() {
            for x in grid.nodes() {
                let db = (data.velocity(x + 0.5 * h, t) - data.velocity(x - 0.5 * h, t)) / h;
                let c = data.reaction(x, t);
                if !(c.is_finite() && db.is_finite()) {
                    return Err(Error::InvalidProblem(format!(
                        "b or c is not finite at ({x}, {t})"
                    )));
                }
                l_min = l_min.min(c - 0.5 * db);
            }
        }
        let l = self.coercivity.unwrap_or(l_min);
        if l_min < l - 1e-9 * (1.0 + l.abs()) {
            return Err(Error::InvalidProblem(format!(
                "c - b_x/2 reaches {l_min}, below the asserted l = {l}"
            )));
        }

        Ok(ProblemData {
            lower_bound: m,
            coercivity: l,
            ..data
        })
    }
}

/// Parameters of the approximation cascade.
///
/// `picard_tol` and `picard_max` control the inner nonlinear iteration of
/// every implicit step; `constraint_tol` is the slack used when reporting
/// gradient-constraint membership.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub epsilon: f64,
    pub delta: f64,
    pub dt: f64,
    pub t_end: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub constraint_tol: f64,
}

impl SolverParams {
    pub const DEFAULT_PICARD_TOL: f64 = 1e-10;
    pub const DEFAULT_PICARD_MAX: usize = 60;
    pub const DEFAULT_CONSTRAINT_TOL: f64 = 1e-12;

    pub fn new(epsilon: f64, delta: f64, dt: f64, t_end: f64) -> Result<Self> {
        let params = Self {
            epsilon,
            delta,
            dt,
            t_end,
            picard_tol: Self::DEFAULT_PICARD_TOL,
            picard_max: Self::DEFAULT_PICARD_MAX,
            constraint_tol: Self::DEFAULT_CONSTRAINT_TOL,
        };
        params.validate()?;
        Ok(params)
    }

    /// The coupled schedule `epsilon = h^2`, `delta = h`, `dt = h / 2`.
    pub fn coupled(h: f64, t_end: f64) -> Result<Self> {
        Self::new(h * h, h, 0.5 * h, t_end)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.picard_tol > 0.0) {
            return bad(format!("picard_tol must be positive, got {}", self.picard_tol));
        }
        if self.picard_max < 1 {
            return bad("picard_max must be at least 1".to_string());
        }
        if !(self.constraint_tol >= 0.0) {
            return bad(format!(
                "constraint_tol must be non-negative, got {}",
                self.constraint_tol
            ));
        }
        Ok(())
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    /// Number of steps taken to reach `t_end` (nearest step, ties down).
    pub fn n_steps(&self) -> usize {
        nearest_step(self.t_end, self.dt)
    }

    /// Time after `n` steps.
    pub fn time_of(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }
}

/// Index of the step nearest to `t`; exact halves round toward the earlier step.
pub fn nearest_step(t: f64, dt: f64) -> usize {
    let r = t / dt;
    let lo = r.floor();
    let n = if r - lo > 0.5 { lo + 1.0 } else { lo };
    n.max(0.0) as usize
}

/// Per-step diagnostic record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    /// Max over cells of `(|u_x| - g)+`.
    pub constraint_violation: f64,
    /// Inner iterations used by the step.
    pub iterations: usize,
    /// Running penalty mass after this step.
    pub penalty_mass: f64,
    /// Number of cells whose exponential argument was clamped.
    pub overflow_events: usize,
}

/// Time-stamped snapshots plus one diagnostic record per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<ScalarField>,
    pub diagnostics: Vec<StepRecord>,
}

impl Trajectory {
    /// A trajectory holding only the initial state.
    pub fn initial(u0: ScalarField) -> Self {
        Self {
            times: vec![0.0],
            snapshots: vec![u0],
            diagnostics: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &ScalarField {
        self.snapshots.last().expect("trajectory is never empty")
    }

    /// Snapshot recorded closest to `t`.
    pub fn at(&self, t: f64) -> (f64, &ScalarField) {
        let k = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(k, _)| k)
            .expect("trajectory is never empty");
        (self.times[k], &self.snapshots[k])
    }

    pub(crate) fn push(&mut self, t: f64, snapshot: ScalarField) {
        debug_assert!(t > *self.times.last().unwrap());
        self.times.push(t);
        self.snapshots.push(snapshot);
    }
}

/// Maps requested snapshot times to sorted, distinct step indices `>= 1`.
pub(crate) fn snapshot_steps(times: &[f64], params: &SolverParams) -> Result<Vec<usize>> {
    let n_steps = params.n_steps();
    let mut steps = Vec::with_capacity(times.len());
    for &t in times {
        if !(t >= 0.0 && t <= params.t_end + 0.5 * params.dt) {
            return Err(Error::Precondition(format!(
                "snapshot time {t} outside [0, {}]",
                params.t_end
            )));
        }
        let n = nearest_step(t, params.dt).min(n_steps);
        if n > 0 {
            steps.push(n);
        }
    }
    if steps.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition(
            "snapshot times must be sorted".to_string(),
        ));
    }
    steps.dedup();
    Ok(steps)
}
