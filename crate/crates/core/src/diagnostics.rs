//! Measurements on trajectories: errors against a reference, free
//! boundaries, stabilization, the rescaling map between constraint sets and
//! the stability and long-time studies.

use crate::error::{Error, Result};
use crate::grid::{l2_norm, l2_norm_values, trapezoid, ScalarField};
use crate::obstacle::coincidence_partition;
use crate::oracle::Contact;
use crate::penalty::{self, Linearization};
use crate::problem::{ProblemData, SolverParams, Trajectory};

/// Errors of one snapshot against a reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotError {
    pub t: f64,
    pub linf: f64,
    pub l2: f64,
}

/// Max-norm and L² errors of every snapshot against `reference(x, t)`
/// sampled at the nodes.
pub fn error_vs_oracle(traj: &Trajectory, reference: impl Fn(f64, f64) -> f64) -> Vec<SnapshotError> {
    traj.times
        .iter()
        .zip(&traj.snapshots)
        .map(|(&t, u)| {
            let grid = u.grid();
            let diff: Vec<f64> = grid
                .nodes()
                .zip(u.values())
                .map(|(x, v)| v - reference(x, t))
                .collect();
            SnapshotError {
                t,
                linf: diff.iter().fold(0.0, |acc, e| acc.max(e.abs())),
                l2: l2_norm_values(&diff, grid.h()),
            }
        })
        .collect()
}

/// Free-boundary positions over a trajectory; `NAN` marks an absent boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeBoundaryTrace {
    pub times: Vec<f64>,
    pub xi_numeric: Vec<f64>,
    pub zeta_numeric: Vec<f64>,
}

impl FreeBoundaryTrace {
    pub fn from_trajectory(traj: &Trajectory, obstacle: &ScalarField, tol: f64) -> Self {
        let mut trace = Self {
            times: Vec::with_capacity(traj.len()),
            xi_numeric: Vec::with_capacity(traj.len()),
            zeta_numeric: Vec::with_capacity(traj.len()),
        };
        for (&t, u) in traj.times.iter().zip(&traj.snapshots) {
            let (xi, zeta) = extract_free_boundaries(u, obstacle, tol);
            trace.times.push(t);
            trace.xi_numeric.push(xi.unwrap_or(f64::NAN));
            trace.zeta_numeric.push(zeta.unwrap_or(f64::NAN));
        }
        trace
    }
}

/// Locates the free boundaries of `field` against the band `-d <= u <= d`.
///
/// Nodes are labelled by [`coincidence_partition`]. Nodes where `d <= tol`
/// carry no information (both obstacles are within reach) and are skipped.
/// `zeta` ends an `Upper` prefix that gives way to an open region; `xi` is
/// the first switch from the open region back to contact, or the right end
/// when the open region reaches it. Each position is the midpoint of the two
/// bracketing nodes.
pub fn extract_free_boundaries(
    field: &ScalarField,
    obstacle: &ScalarField,
    tol: f64,
) -> (Option<f64>, Option<f64>) {
    let grid = *field.grid();
    let d = obstacle.values();
    let labels: Vec<(f64, Contact)> = coincidence_partition(field, obstacle, tol)
        .into_iter()
        .enumerate()
        .map(|(k, label)| (k + 1, label))
        .filter(|&(i, _)| d[i] > tol)
        .map(|(i, label)| (grid.node(i), label))
        .collect();
    let midpoint = |k: usize| 0.5 * (labels[k].0 + labels[k + 1].0);

    let open_start = match labels.iter().position(|&(_, l)| l == Contact::Open) {
        Some(k) => k,
        None => return (None, None),
    };
    let zeta = (open_start > 0 && labels[..open_start].iter().all(|&(_, l)| l == Contact::Upper))
        .then(|| midpoint(open_start - 1));
    let xi = match labels[open_start..].iter().position(|&(_, l)| l != Contact::Open) {
        Some(k) => midpoint(open_start + k - 1),
        None => grid.x_right(),
    };
    (Some(xi), zeta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizationReport {
    /// First snapshot time from which the distance to the target stays
    /// within tolerance; infinite if that never happens.
    pub t_star_numeric: f64,
    pub target_error_at_end: f64,
    /// Largest growth of the distance to the target between consecutive
    /// snapshots; zero for a monotone approach.
    pub monotone_violation_max: f64,
}

pub fn detect_stabilization(traj: &Trajectory, target: &ScalarField, tol: f64) -> Result<StabilizationReport> {
    if traj.len() < 2 {
        return Err(Error::Precondition(
            "stabilization needs at least two snapshots".to_string(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParams(format!("tolerance must be positive, got {tol}")));
    }
    let dist = traj
        .snapshots
        .iter()
        .map(|u| u.max_distance(target))
        .collect::<Result<Vec<f64>>>()?;
    let settled_from = dist.iter().rposition(|&e| e > tol).map_or(0, |k| k + 1);
    let t_star = traj.times.get(settled_from).copied().unwrap_or(f64::INFINITY);
    let growth = dist.windows(2).fold(0.0_f64, |acc, w| acc.max(w[1] - w[0]));
    Ok(StabilizationReport {
        t_star_numeric: t_star,
        target_error_at_end: *dist.last().unwrap(),
        monotone_violation_max: growth,
    })
}

/// Shrinks `v` by `1 + alpha / m`, which maps a field under the bound `g1`
/// below any bound `g2 >= m` with `max |g1 - g2| = alpha`.
pub fn rescale_into_constraint(v: &ScalarField, alpha: f64, m: f64) -> Result<ScalarField> {
    if !(m > 0.0) {
        return Err(Error::Domain { what: "lower bound m", value: m });
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Domain { what: "bound distance alpha", value: alpha });
    }
    Ok(v.scaled(1.0 / (1.0 + alpha / m)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityMeasure {
    /// `max_n ||u1(t_n) - u2(t_n)||^2` over all steps.
    pub sup_l2_sq_diff: f64,
    /// `||u01 - u02||^2 + ||b1 - b2||_1 + ||c1 - c2||_1 + ||f1 - f2||_1 + ||g1 - g2||_inf`,
    /// the space-time norms taken over the step grid.
    pub data_distance: f64,
}

/// Runs both problems side by side and compares their distance to the
/// distance of their data.
pub fn stability_study(base: &ProblemData, perturbed: &ProblemData, params: &SolverParams) -> Result<StabilityMeasure> {
    if base.grid() != perturbed.grid() {
        return Err(Error::Precondition(
            "stability study needs both problems on one grid".to_string(),
        ));
    }
    let record = |data: &ProblemData| -> Result<Vec<ScalarField>> {
        let mut states = vec![data.initial().clone()];
        penalty::run(data, params, Linearization::default(), |_, s| states.push(s.current.clone()))?;
        Ok(states)
    };
    let (a, b) = rayon::join(|| record(base), || record(perturbed));
    let (a, b) = (a?, b?);
    let mut sup: f64 = 0.0;
    for (u1, u2) in a.iter().zip(&b) {
        sup = sup.max(l2_norm(&u1.difference(u2)?).powi(2));
    }
    Ok(StabilityMeasure {
        sup_l2_sq_diff: sup,
        data_distance: data_distance(base, perturbed, params),
    })
}

fn data_distance(p1: &ProblemData, p2: &ProblemData, params: &SolverParams) -> f64 {
    let grid = *p1.grid();
    let h = grid.h();
    let u0 = p1.initial().values().iter().zip(p2.initial().values());
    let u0_sq = trapezoid(&u0.map(|(a, b)| (a - b).powi(2)).collect::<Vec<_>>(), h);

    let n_steps = params.n_steps();
    let mut l1_in_time = Vec::with_capacity(n_steps + 1);
    let mut g_sup: f64 = 0.0;
    for n in 0..=n_steps {
        let t = params.time_of(n);
        let gap: Vec<f64> = grid
            .nodes()
            .map(|x| {
                (p1.velocity(x, t) - p2.velocity(x, t)).abs()
                    + (p1.reaction(x, t) - p2.reaction(x, t)).abs()
                    + (p1.source(x, t) - p2.source(x, t)).abs()
            })
            .collect();
        l1_in_time.push(trapezoid(&gap, h));
        for x in grid.nodes().chain(grid.midpoints()) {
            g_sup = g_sup.max((p1.bound(x, t) - p2.bound(x, t)).abs());
        }
    }
    let l1 = if n_steps == 0 {
        0.0
    } else {
        trapezoid(&l1_in_time, params.dt)
    };
    u0_sq + l1 + g_sup
}

/// L² distances of the evolution to `u_inf` at the steps nearest to
/// `sample_times`. The run stops at the last sample time.
pub fn asymptotic_study(
    data: &ProblemData,
    params: &SolverParams,
    u_inf: &ScalarField,
    sample_times: &[f64],
) -> Result<Vec<f64>> {
    let t_last = sample_times.iter().copied().fold(0.0, f64::max);
    if t_last <= 0.0 {
        let d0 = l2_norm(&data.initial().difference(u_inf)?);
        return Ok(vec![d0; sample_times.len()]);
    }
    let params = params.with_t_end(t_last);
    let traj = penalty::solve(data, &params, sample_times)?;
    sample_times
        .iter()
        .map(|&t| Ok(l2_norm(&traj.at(t).1.difference(u_inf)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{max_gradient, Grid1D};
    use crate::oracle::SandpileOracle;
    use crate::problem::StepRecord;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn oracle_trajectory(grid: Grid1D, times: &[f64]) -> Trajectory {
        let mut traj = Trajectory::initial(SandpileOracle.initial_field(grid).unwrap());
        for &t in times {
            traj.push(t, SandpileOracle.sample(grid, t).unwrap());
            traj.diagnostics.push(StepRecord {
                t,
                constraint_violation: 0.0,
                iterations: 0,
                penalty_mass: 0.0,
                overflow_events: 0,
            });
        }
        traj
    }

    #[test]
    fn oracle_samples_have_no_error() {
        let grid = Grid1D::unit(64).unwrap();
        let traj = oracle_trajectory(grid, &[0.5, 1.0, 1.5]);
        let oracle = SandpileOracle.as_fn();
        for e in error_vs_oracle(&traj, |x, t| oracle(x, t)) {
            assert_eq!(e.linf, 0.0);
            assert_eq!(e.l2, 0.0);
        }
        let shifted = |x: f64, t: f64| oracle(x, t) - if x > 0.0 && x < 1.0 { 0.01 } else { 0.0 };
        let errs = error_vs_oracle(&traj, shifted);
        assert_abs_diff_eq!(errs[1].linf, 0.01, epsilon = 1e-15);
    }

    #[test]
    fn boundaries_of_oracle_samples() {
        let grid = Grid1D::unit(1000).unwrap();
        let h = grid.h();
        let d = ScalarField::boundary_distance(grid);
        let o = SandpileOracle;
        for t in [0.1, 0.25, 0.6, 1.1] {
            let (xi, _) = extract_free_boundaries(&o.sample(grid, t).unwrap(), &d, 1e-9);
            let expected = o.xi(t).unwrap();
            assert!((xi.unwrap() - expected).abs() <= 3.0 * h, "t = {t}");
        }
        for t in [1.05, 1.2] {
            let (_, zeta) = extract_free_boundaries(&o.sample(grid, t).unwrap(), &d, 1e-9);
            assert!((zeta.unwrap() - o.zeta(t).unwrap()).abs() <= 3.0 * h, "t = {t}");
        }
        let (xi, zeta) = extract_free_boundaries(&o.sample(grid, 0.25).unwrap(), &d, 2.0 * h);
        assert!((xi.unwrap() - 0.8512).abs() <= 3.0 * h);
        assert_eq!(zeta, None);

        let (xi, zeta) = extract_free_boundaries(&o.sample(grid, 1.125).unwrap(), &d, 1e-9);
        assert!((xi.unwrap() - 0.5389).abs() <= 3.0 * h);
        assert!((zeta.unwrap() - 0.25).abs() <= 3.0 * h);

        assert_eq!(extract_free_boundaries(&d, &d, 2.0 * h), (None, None));
    }

    #[test]
    fn open_region_reaching_the_end() {
        let grid = Grid1D::unit(100).unwrap();
        let d = ScalarField::boundary_distance(grid);
        let u = SandpileOracle.sample(grid, 0.5).unwrap();
        let (xi, zeta) = extract_free_boundaries(&u, &d, 1e-9);
        assert_eq!(xi, Some(1.0));
        assert_eq!(zeta, None);
    }

    #[test]
    fn stabilization_of_oracle() {
        let grid = Grid1D::unit(200).unwrap();
        let times: Vec<f64> = (1..=40).map(|k| k as f64 * 0.05).collect();
        let traj = oracle_trajectory(grid, &times);
        let d = ScalarField::boundary_distance(grid);
        let report = detect_stabilization(&traj, &d, 1e-9).unwrap();
        assert_abs_diff_eq!(report.t_star_numeric, 1.25, epsilon = 1e-12);
        assert!(report.target_error_at_end < 1e-15);
        assert!(report.monotone_violation_max < 1e-15);

        let constant = oracle_trajectory(grid, &[]);
        let mut constant = constant;
        constant.push(1.0, constant.snapshots[0].clone());
        let z0 = constant.snapshots[0].clone();
        assert_eq!(detect_stabilization(&constant, &z0, 1e-9).unwrap().t_star_numeric, 0.0);
        let never = detect_stabilization(&constant, &d, 1e-9).unwrap();
        assert!(never.t_star_numeric.is_infinite());
    }

    #[test]
    fn stabilization_needs_two_snapshots() {
        let grid = Grid1D::unit(10).unwrap();
        let traj = Trajectory::initial(ScalarField::zeros(grid));
        assert!(detect_stabilization(&traj, &ScalarField::zeros(grid), 0.1).is_err());
    }

    #[test]
    fn rescaling_examples() {
        let grid = Grid1D::unit(50).unwrap();
        let d = ScalarField::boundary_distance(grid);
        assert_eq!(rescale_into_constraint(&d, 0.0, 0.3).unwrap(), d);
        let half = rescale_into_constraint(&d, 0.5, 0.5).unwrap();
        assert_abs_diff_eq!(max_gradient(&half), 0.5, epsilon = 1e-12);
        assert!(rescale_into_constraint(&d, 0.5, 0.0).is_err());
        assert!(rescale_into_constraint(&d, -0.1, 1.0).is_err());
    }

    #[test]
    fn identical_problems_are_at_distance_zero() {
        let grid = Grid1D::unit(40).unwrap();
        let data = SandpileOracle.problem(grid, 0.2).unwrap();
        let params = SolverParams::new(1e-3, 1e-2, 1e-2, 0.2).unwrap();
        let m = stability_study(&data, &data, &params).unwrap();
        assert_eq!(m.sup_l2_sq_diff, 0.0);
        assert_eq!(m.data_distance, 0.0);
    }

    #[test]
    fn source_shift_distance() {
        let grid = Grid1D::unit(40).unwrap();
        let data = SandpileOracle.problem(grid, 0.2).unwrap();
        let shifted = data.to_builder().source(|_, t| t + 0.1).build().unwrap();
        let params = SolverParams::new(1e-3, 1e-2, 1e-2, 0.2).unwrap();
        let m = stability_study(&data, &shifted, &params).unwrap();
        // 0.1 over a unit domain for 0.2 time units
        assert_abs_diff_eq!(m.data_distance, 0.02, epsilon = 1e-12);
        assert!(m.sup_l2_sq_diff > 0.0);
    }

    #[test]
    fn stationary_start_stays_put() {
        let grid = Grid1D::unit(40).unwrap();
        let d = ScalarField::boundary_distance(grid);
        let data = ProblemData::builder(ScalarField::zeros(grid))
            .reaction(|_, _| 1.0)
            .horizon(1.0)
            .build()
            .unwrap();
        let params = SolverParams::new(1e-3, 1e-2, 1e-2, 1.0).unwrap();
        let u_inf = ScalarField::zeros(grid);
        let dist = asymptotic_study(&data, &params, &u_inf, &[0.0, 0.5, 1.0]).unwrap();
        assert!(dist.iter().all(|&e| e == 0.0));
        let moved = asymptotic_study(&data.to_builder().initial(d).build().unwrap(), &params, &u_inf, &[0.5, 1.0]).unwrap();
        assert!(moved[1] < moved[0]);
    }

    proptest! {
        #[test]
        fn rescaling_shrinks_gradient(
            raw in proptest::collection::vec(-1.0f64..1.0, 9..60),
            alpha in 0.0f64..1.0,
            m in 0.1f64..1.0,
        ) {
            let grid = Grid1D::unit(raw.len() - 1).unwrap();
            let d = ScalarField::boundary_distance(grid);
            let v = ScalarField::new(grid, raw.iter().zip(d.values()).map(|(r, d)| r * d).collect()).unwrap();
            let w = rescale_into_constraint(&v, alpha, m).unwrap();
            prop_assert!(max_gradient(&w) <= m / (m + alpha) * max_gradient(&v) + 1e-12);
        }

        #[test]
        fn larger_tolerance_never_delays_stabilization(tol in 1e-4f64..0.2, extra in 0.0f64..0.2) {
            let grid = Grid1D::unit(50).unwrap();
            let times: Vec<f64> = (1..=16).map(|k| k as f64 * 0.1).collect();
            let traj = oracle_trajectory(grid, &times);
            let d = ScalarField::boundary_distance(grid);
            let a = detect_stabilization(&traj, &d, tol).unwrap().t_star_numeric;
            let b = detect_stabilization(&traj, &d, tol + extra).unwrap().t_star_numeric;
            prop_assert!(b <= a);
        }
    }
}
