//! The five studies. Each one fills the manifest and writes its CSV tables.
//!
//! Ladder members run in parallel; tables and checks are assembled in ladder
//! order, so the output does not depend on scheduling.

use std::path::Path;

use gradvi_core::diagnostics::{error_vs_oracle, stability_study, FreeBoundaryTrace};
use gradvi_core::oracle::STABILIZATION_TIME;
use gradvi_core::penalty::constraint_violation;
use gradvi_core::stationary::{default_t_max, solve_stationary, DEFAULT_STEADY_TOL};
use gradvi_core::{obstacle, penalty, Grid1D, ProblemData, SandpileOracle, ScalarField, SolverParams, Trajectory};
use rayon::prelude::*;

use crate::config::Config;
use crate::error::CliError;
use crate::output::{write_csv, Check, LadderEcho, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    /// Penalized sandpile against the closed form.
    Sandpile,
    /// Penalty against obstacle formulation.
    Equivalence,
    /// Stationary problem with constant data.
    Stationary,
    /// Refinement ladder on the coupled schedule.
    Converge,
    /// Source perturbation ladder.
    Stability,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sandpile => "sandpile",
            Command::Equivalence => "equivalence",
            Command::Stationary => "stationary",
            Command::Converge => "converge",
            Command::Stability => "stability",
        }
    }
}

pub fn run(command: Command, cfg: &Config, out: &Path, manifest: &mut RunManifest) -> Result<(), CliError> {
    match command {
        Command::Sandpile => sandpile(cfg, out, manifest),
        Command::Equivalence => equivalence(cfg, out, manifest),
        Command::Stationary => stationary(cfg, out, manifest),
        Command::Converge => converge(cfg, out, manifest),
        Command::Stability => stability(cfg, out, manifest),
    }
}

const FIGURE_TIMES: [f64; 4] = [0.0, 0.75, 1.125, 1.25];
const SANDPILE_T_END: f64 = 2.0;
const DEFAULT_CELLS: usize = 400;

/// `(epsilon, delta, dt)` of the reference sandpile run.
const REFERENCE: (f64, f64, f64) = (1e-4, 1e-3, 5e-4);

/// `(epsilon, delta, dt)` of the stationary runs.
const STATIONARY: (f64, f64, f64) = (1e-4, 1e-3, 0.01);

fn coupled(h: f64) -> (f64, f64, f64) {
    (h * h, h, 0.5 * h)
}

/// Solver parameters from the config over `defaults`. A zero `t_end` is
/// allowed and means no step is taken.
fn params_from(cfg: &Config, defaults: (f64, f64, f64), t_end: f64) -> Result<SolverParams, CliError> {
    let epsilon = cfg.epsilon.unwrap_or(defaults.0);
    let delta = cfg.delta.unwrap_or(defaults.1);
    let dt = cfg.dt.unwrap_or(defaults.2);
    let probe = if t_end > 0.0 { t_end } else { 1.0 };
    let params = SolverParams::new(epsilon, delta, dt, probe).map_err(CliError::setup)?;
    Ok(params.with_t_end(t_end))
}

fn evolve(
    data: &ProblemData,
    params: &SolverParams,
    times: &[f64],
    solver: fn(&ProblemData, &SolverParams, &[f64]) -> gradvi_core::Result<Trajectory>,
) -> Result<Trajectory, CliError> {
    if params.t_end > 0.0 {
        Ok(solver(data, params, times)?)
    } else {
        Ok(Trajectory::initial(data.initial().clone()))
    }
}

fn every(step: f64, t_end: f64) -> Vec<f64> {
    let n = (t_end / step).round() as usize;
    (0..=n).map(|k| k as f64 * step).filter(|&t| t <= t_end).collect()
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

fn oracle_at(x: f64, t: f64) -> f64 {
    SandpileOracle.profile(x, t).unwrap_or(f64::NAN)
}

/// Distance between a numeric and an exact free boundary, both `NAN` when
/// absent. A missing numeric boundary counts as a miss unless the exact one
/// lies within `unresolved` of the origin.
fn boundary_miss(numeric: f64, exact: f64, unresolved: f64) -> f64 {
    match (numeric.is_nan(), exact.is_nan()) {
        (_, true) => 0.0,
        (true, false) if exact <= unresolved => 0.0,
        (true, false) => f64::INFINITY,
        (false, false) => (numeric - exact).abs(),
    }
}

fn sandpile(cfg: &Config, out: &Path, manifest: &mut RunManifest) -> Result<(), CliError> {
    cfg.require_unit_domain()?;
    let grid = Grid1D::unit(cfg.n_cells.unwrap_or(DEFAULT_CELLS)).map_err(CliError::setup)?;
    let h = grid.h();
    let t_end = cfg.t_end(SANDPILE_T_END)?;
    let params = params_from(cfg, REFERENCE, t_end)?;
    let times = cfg.snapshot_times(&FIGURE_TIMES, t_end)?;
    let label_tol = Config::bound_or(cfg.label_tol, "label_tol", h * h)?;
    let error_bound = Config::bound_or(cfg.error_bound, "error_bound", 0.05)?;
    let violation_bound = Config::bound_or(cfg.violation_bound, "violation_bound", 0.02)?;
    let boundary_bound = Config::bound_or(cfg.boundary_bound, "boundary_bound", 3.0 * h + 0.01)?;
    manifest.echo(&params, &grid);

    let data = SandpileOracle.problem(grid, t_end).map_err(CliError::setup)?;
    let traj = evolve(&data, &params, &times, penalty::solve)?;

    let mut profiles = Vec::with_capacity(traj.len() * grid.n_nodes());
    for (&t, u) in traj.times.iter().zip(&traj.snapshots) {
        for (x, &v) in grid.nodes().zip(u.values()) {
            profiles.push((t, x, v, oracle_at(x, t)));
        }
    }
    write_csv(out, "profiles.csv", &["t", "x", "u_numeric", "u_oracle"], &profiles)?;

    let errors = error_vs_oracle(&traj, oracle_at);
    let rows: Vec<_> = errors.iter().map(|e| (e.t, e.linf, e.l2)).collect();
    write_csv(out, "errors.csv", &["t", "linf", "l2"], &rows)?;

    let d = ScalarField::boundary_distance(grid);
    let trace = FreeBoundaryTrace::from_trajectory(&traj, &d, label_tol);
    let mut rows = Vec::with_capacity(trace.times.len());
    let mut boundary_error: f64 = 0.0;
    for (k, &t) in trace.times.iter().enumerate() {
        let xi = SandpileOracle.xi(t).unwrap_or(f64::NAN);
        let zeta = SandpileOracle.zeta(t).unwrap_or(f64::NAN);
        let (xi_num, zeta_num) = (trace.xi_numeric[k], trace.zeta_numeric[k]);
        rows.push((t, xi_num, xi, zeta_num, zeta));
        // at stabilization the open region closes and both boundaries merge
        if t < STABILIZATION_TIME {
            boundary_error = boundary_error
                .max(boundary_miss(xi_num, xi, f64::NEG_INFINITY))
                .max(boundary_miss(zeta_num, zeta, boundary_bound));
        }
    }
    write_csv(
        out,
        "free_boundary.csv",
        &["t", "xi_numeric", "xi_oracle", "zeta_numeric", "zeta_oracle"],
        &rows,
    )?;

    let violation = max_of(traj.diagnostics.iter().map(|r| r.constraint_violation));
    manifest.acceptance = vec![
        Check::new("max profile error", max_of(errors.iter().map(|e| e.linf)), error_bound),
        Check::new("max gradient constraint violation", violation, violation_bound),
        Check::new("max free boundary error", boundary_error, boundary_bound),
    ];
    Ok(())
}

fn equivalence(cfg: &Config, out: &Path, manifest: &mut RunManifest) -> Result<(), CliError> {
    cfg.require_unit_domain()?;
    let base = cfg.n_cells.unwrap_or(DEFAULT_CELLS);
    let ladder = cfg.cell_ladder(&[base, 2 * base])?;
    let t_end = cfg.t_end(SANDPILE_T_END)?;
    let times = cfg.snapshot_times(&every(0.05, t_end), t_end)?;
    let gap_bound = Config::bound_or(cfg.gap_bound, "gap_bound", 0.05)?;

    let members = ladder
        .iter()
        .map(|&n| {
            let grid = Grid1D::unit(n).map_err(CliError::setup)?;
            let params = params_from(cfg, coupled(grid.h()), t_end)?;
            let data = SandpileOracle.problem(grid, t_end).map_err(CliError::setup)?;
            Ok((grid, params, data))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    echo_ladder(manifest, members.iter().map(|(g, p, _)| (g, p)));

    let gaps = members
        .par_iter()
        .map(|(_, params, data)| {
            let (a, b) = rayon::join(
                || evolve(data, params, &times, penalty::solve),
                || evolve(data, params, &times, obstacle::solve),
            );
            let (a, b) = (a?, b?);
            a.times
                .iter()
                .zip(a.snapshots.iter().zip(&b.snapshots))
                .map(|(&t, (u, z))| Ok((t, u.max_distance(z)?)))
                .collect::<Result<Vec<_>, CliError>>()
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut rows = Vec::new();
    for (n, per_time) in ladder.iter().zip(&gaps) {
        rows.extend(per_time.iter().map(|&(t, gap)| (*n, t, gap)));
        let worst = max_of(per_time.iter().map(|e| e.1));
        manifest.acceptance.push(Check::new(format!("max penalty-obstacle gap, n_cells = {n}"), worst, gap_bound));
    }
    write_csv(out, "errors.csv", &["n_cells", "t", "gap"], &rows)
}

fn stationary(cfg: &Config, out: &Path, manifest: &mut RunManifest) -> Result<(), CliError> {
    let (a, b) = cfg.domain()?;
    let ladder = cfg.cell_ladder(&[cfg.n_cells.unwrap_or(DEFAULT_CELLS)])?;
    let velocity = cfg.velocity.unwrap_or(0.0);
    let reaction = cfg.reaction.unwrap_or(1.0);
    let source = cfg.source.unwrap_or(2.0);
    let bound = cfg.bound.unwrap_or(1.0);
    if ![velocity, reaction, source, bound].iter().all(|v| v.is_finite()) {
        return Err(CliError::Config("velocity, reaction, source and bound must be finite".to_string()));
    }
    if !(reaction > 0.0) {
        return Err(CliError::Config(format!("the stationary problem needs reaction > 0, got {reaction}")));
    }
    let steady_tol = cfg.steady_tol.unwrap_or(DEFAULT_STEADY_TOL);
    if !(steady_tol > 0.0) {
        return Err(CliError::Config(format!("steady_tol must be positive, got {steady_tol}")));
    }
    let t_max = cfg.t_max.unwrap_or_else(|| default_t_max(reaction));
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(CliError::Config(format!("t_max must be positive, got {t_max}")));
    }
    let params = params_from(cfg, STATIONARY, t_max)?;
    let violation_bound = Config::bound_or(cfg.violation_bound, "violation_bound", 0.02)?;
    let fixed_error_bound = cfg.error_bound.map(|e| Config::bound_or(Some(e), "error_bound", 0.0)).transpose()?;

    let members = ladder
        .iter()
        .map(|&n| {
            let grid = Grid1D::new(a, b, n).map_err(CliError::setup)?;
            let data = ProblemData::builder(ScalarField::zeros(grid))
                .velocity(move |_, _| velocity)
                .reaction(move |_, _| reaction)
                .source(move |_, _| source)
                .bound(move |_, _| bound)
                .horizon(1.0)
                .build()
                .map_err(CliError::setup)?;
            Ok((grid, data))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    echo_ladder(manifest, members.iter().map(|(g, _)| (g, &params)));

    let solutions = members
        .par_iter()
        .map(|(_, data)| Ok(solve_stationary(data, &params, steady_tol, t_max)?.solution))
        .collect::<Result<Vec<_>, CliError>>()?;

    // without transport the steady state is the source level cut off by
    // the steepest admissible profile
    let reference = |grid: &Grid1D, x: f64| {
        if velocity == 0.0 {
            let cap = bound * grid.boundary_distance(x);
            (source / reaction).clamp(-cap, cap)
        } else {
            f64::NAN
        }
    };
    let mut rows = Vec::new();
    for ((grid, data), u) in members.iter().zip(&solutions) {
        let n = grid.n_cells();
        let mut error: f64 = 0.0;
        for (x, &v) in grid.nodes().zip(u.values()) {
            let r = reference(grid, x);
            error = error.max((v - r).abs());
            rows.push((n, x, v, r));
        }
        let violation = constraint_violation(u, &data.bound_at_midpoints(0.0));
        manifest
            .acceptance
            .push(Check::new(format!("gradient constraint violation, n_cells = {n}"), violation, violation_bound));
        if velocity == 0.0 {
            let bound = fixed_error_bound.unwrap_or(2.0 * grid.h() + 0.02);
            manifest
                .acceptance
                .push(Check::new(format!("error to the closed form, n_cells = {n}"), error, bound));
        }
    }
    write_csv(out, "solution.csv", &["n_cells", "x", "u_numeric", "u_reference"], &rows)
}

fn converge(cfg: &Config, out: &Path, manifest: &mut RunManifest) -> Result<(), CliError> {
    cfg.require_unit_domain()?;
    if cfg.epsilon.is_some() || cfg.delta.is_some() || cfg.dt.is_some() {
        return Err(CliError::Config(
            "converge derives epsilon, delta and dt from h; remove them from the config".to_string(),
        ));
    }
    let ladder = cfg.cell_ladder(&[100, 200, 400])?;
    if ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config("the refinement ladder must increase".to_string()));
    }
    let t_end = cfg.t_end(SANDPILE_T_END)?;
    let times = cfg.snapshot_times(&FIGURE_TIMES, t_end)?;
    let error_bound = Config::bound_or(cfg.error_bound, "error_bound", 0.05)?;
    let ratio_bound = Config::bound_or(cfg.ratio_bound, "ratio_bound", 1.0)?;

    let members = ladder
        .iter()
        .map(|&n| {
            let grid = Grid1D::unit(n).map_err(CliError::setup)?;
            let params = params_from(cfg, coupled(grid.h()), t_end)?;
            let data = SandpileOracle.problem(grid, t_end).map_err(CliError::setup)?;
            Ok((grid, params, data))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    echo_ladder(manifest, members.iter().map(|(g, p, _)| (g, p)));

    let errors = members
        .par_iter()
        .map(|(_, params, data)| {
            let traj = evolve(data, params, &times, penalty::solve)?;
            let errors = error_vs_oracle(&traj, oracle_at);
            Ok((max_of(errors.iter().map(|e| e.linf)), max_of(errors.iter().map(|e| e.l2))))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let rows: Vec<_> = members
        .iter()
        .zip(&errors)
        .map(|((g, p, _), &(linf, l2))| (g.n_cells(), g.h(), p.epsilon, p.delta, p.dt, linf, l2))
        .collect();
    write_csv(
        out,
        "errors.csv",
        &["n_cells", "h", "epsilon", "delta", "dt", "linf_error", "l2_error"],
        &rows,
    )?;

    for (k, w) in errors.windows(2).enumerate() {
        let name = format!("error ratio, n_cells {} to {}", ladder[k], ladder[k + 1]);
        manifest.acceptance.push(Check::new(name, w[1].0 / w[0].0, ratio_bound));
    }
    let finest = errors.last().map_or(f64::NAN, |e| e.0);
    manifest
        .acceptance
        .push(Check::new(format!("max error, n_cells = {}", ladder[ladder.len() - 1]), finest, error_bound));
    Ok(())
}

fn stability(cfg: &Config, out: &Path, manifest: &mut RunManifest) -> Result<(), CliError> {
    cfg.require_unit_domain()?;
    let grid = Grid1D::unit(cfg.n_cells.unwrap_or(DEFAULT_CELLS)).map_err(CliError::setup)?;
    let t_end = cfg.t_end(SANDPILE_T_END)?;
    if t_end == 0.0 {
        return Err(CliError::Config("stability needs t_end > 0".to_string()));
    }
    let params = params_from(cfg, REFERENCE, t_end)?;
    let ladder = cfg.shift_ladder(&[0.2, 0.1, 0.05])?;
    let spread_bound = Config::bound_or(cfg.spread_bound, "spread_bound", 5.0)?;
    manifest.echo(&params, &grid);

    let base = SandpileOracle.problem(grid, t_end).map_err(CliError::setup)?;
    let perturbed = ladder
        .iter()
        .map(|&eta| base.to_builder().source(move |_, t| t + eta).build().map_err(CliError::setup))
        .collect::<Result<Vec<_>, CliError>>()?;
    let measures = perturbed
        .par_iter()
        .map(|p| Ok(stability_study(&base, p, &params)?))
        .collect::<Result<Vec<_>, CliError>>()?;

    let rows: Vec<_> = ladder
        .iter()
        .zip(&measures)
        .map(|(&eta, m)| (eta, m.sup_l2_sq_diff, m.data_distance, m.sup_l2_sq_diff / m.data_distance))
        .collect();
    write_csv(out, "ratios.csv", &["eta", "sup_l2_sq_diff", "data_distance", "ratio"], &rows)?;

    let ratios: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if min > 0.0 { max / min } else { f64::INFINITY };
    manifest.acceptance.push(Check::new("stability ratio spread", spread, spread_bound));
    Ok(())
}

fn echo_ladder<'a>(manifest: &mut RunManifest, members: impl Iterator<Item = (&'a Grid1D, &'a SolverParams)>) {
    for (grid, params) in members {
        manifest.ladder.push(LadderEcho {
            label: format!("n_cells = {}", grid.n_cells()),
            params: params.into(),
            grid: grid.into(),
        });
        manifest.echo(params, grid);
    }
}
