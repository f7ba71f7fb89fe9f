//! Closed-form transported sandpile on `(0, 1)`.
//!
//! Data: `b = 1`, `c = 0`, `g = 1`, `f(x, t) = t`, and the initial profile
//! `z0(x) = -x^2 / 2` up to `xi0 = sqrt(3) - 1`, `z0(x) = x - 1` beyond it.
//! The exact solution is `z = (-d) v ((t x - x^2 / 2) ^ d)` with
//! `d(x) = 1/2 - |x - 1/2|`; it stops moving at `t = 5/4` where it equals `d`.
//!
//! Free boundaries:
//! - `xi(t) = t - 1 + sqrt((1 - t)^2 + 2)` for `0 <= t <= 1/2`,
//! - `xi(t) = t + 1 - sqrt((t + 1)^2 - 2)` for `1/2 < t <= 5/4`,
//! - `zeta(t) = 2 (t - 1)` for `1 <= t <= 5/4`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid1D, ScalarField};
use crate::problem::ProblemData;

/// Time at which the sandpile reaches the distance function and stays there.
pub const STABILIZATION_TIME: f64 = 1.25;

/// Position of the single kink of the initial profile, `sqrt(3) - 1`.
pub fn initial_kink() -> f64 {
    3f64.sqrt() - 1.0
}

/// Where a point sits relative to the two obstacles `-d <= z <= d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Contact {
    /// `z = -d`
    Lower,
    /// `-d < z < d`
    Open,
    /// `z = d`
    Upper,
}

/// Branch of the piecewise closed form that is active at `(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `t x - x^2 / 2`
    Parabola,
    /// `x - 1`, the lower obstacle near `x = 1`
    FallingEdge,
    /// `1 - x`, the upper obstacle near `x = 1`
    RisingEdge,
    /// `x`, the upper obstacle near `x = 0`
    LeftRamp,
    /// `d(x)` after stabilization
    Stable,
}

impl Branch {
    pub fn contact(self) -> Contact {
        match self {
            Branch::Parabola => Contact::Open,
            Branch::FallingEdge => Contact::Lower,
            Branch::RisingEdge | Branch::LeftRamp | Branch::Stable => Contact::Upper,
        }
    }
}

/// Stateless evaluator of the exact sandpile solution.
#[derive(Debug, Clone, Copy, Default)]
pub struct SandpileOracle;

impl SandpileOracle {
    /// First free boundary, defined on `[0, 5/4]`.
    pub fn xi(&self, t: f64) -> Result<f64> {
        if !(0.0..=STABILIZATION_TIME).contains(&t) {
            return Err(Error::Domain { what: "xi", value: t });
        }
        Ok(xi_unchecked(t))
    }

    /// Second free boundary, defined on `[1, 5/4]`.
    pub fn zeta(&self, t: f64) -> Result<f64> {
        if !(1.0..=STABILIZATION_TIME).contains(&t) {
            return Err(Error::Domain {
                what: "zeta",
                value: t,
            });
        }
        Ok(2.0 * (t - 1.0))
    }

    pub fn distance(&self, x: f64) -> Result<f64> {
        check_x("distance", x)?;
        Ok(distance_unchecked(x))
    }

    pub fn initial_profile(&self, x: f64) -> Result<f64> {
        check_x("initial_profile", x)?;
        Ok(if x <= initial_kink() {
            -0.5 * x * x
        } else {
            x - 1.0
        })
    }

    /// Active branch of the closed form. Ties at interfaces go to the
    /// first branch in the order parabola, falling edge, rising edge,
    /// left ramp, parabola, rising edge, stable.
    pub fn branch(&self, x: f64, t: f64) -> Result<Branch> {
        check_x("profile", x)?;
        if !(t >= 0.0) {
            return Err(Error::Domain {
                what: "profile",
                value: t,
            });
        }
        if t > STABILIZATION_TIME {
            return Ok(Branch::Stable);
        }
        let xi = xi_unchecked(t);
        let branch = if t <= 1.0 {
            if x <= xi {
                Branch::Parabola
            } else if t <= 0.5 {
                Branch::FallingEdge
            } else {
                Branch::RisingEdge
            }
        } else {
            let zeta = 2.0 * (t - 1.0);
            if x <= zeta {
                Branch::LeftRamp
            } else if x <= xi {
                Branch::Parabola
            } else {
                Branch::RisingEdge
            }
        };
        Ok(branch)
    }

    /// Exact profile `z(x, t)`.
    pub fn profile(&self, x: f64, t: f64) -> Result<f64> {
        let value = match self.branch(x, t)? {
            Branch::Parabola => t * x - 0.5 * x * x,
            Branch::FallingEdge => x - 1.0,
            Branch::RisingEdge => 1.0 - x,
            Branch::LeftRamp => x,
            Branch::Stable => distance_unchecked(x),
        };
        Ok(value)
    }

    /// Contact label at an interior point.
    pub fn coincidence_label(&self, x: f64, t: f64) -> Result<Contact> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Domain {
                what: "coincidence_label",
                value: x,
            });
        }
        Ok(self.branch(x, t)?.contact())
    }

    /// Profile sampled at the nodes of `grid` (which must cover `[0, 1]`).
    pub fn sample(&self, grid: Grid1D, t: f64) -> Result<ScalarField> {
        let values = grid
            .nodes()
            .map(|x| self.profile(x.clamp(0.0, 1.0), t))
            .collect::<Result<Vec<_>>>()?;
        ScalarField::new(grid, values)
    }

    /// Initial profile sampled on `grid`.
    pub fn initial_field(&self, grid: Grid1D) -> Result<ScalarField> {
        let values = grid
            .nodes()
            .map(|x| self.initial_profile(x.clamp(0.0, 1.0)))
            .collect::<Result<Vec<_>>>()?;
        ScalarField::new(grid, values)
    }

    /// Sandpile problem data on `grid`, checked over `[0, horizon]`.
    pub fn problem(&self, grid: Grid1D, horizon: f64) -> Result<ProblemData> {
        if grid.x_left() != 0.0 || grid.x_right() != 1.0 {
            return Err(Error::InvalidGrid(
                "the sandpile lives on (0, 1)".to_string(),
            ));
        }
        ProblemData::builder(self.initial_field(grid)?)
            .velocity(|_, _| 1.0)
            .reaction(|_, _| 0.0)
            .source(|_, t| t)
            .bound(|_, _| 1.0)
            .lower_bound(1.0)
            .coercivity(0.0)
            .horizon(horizon)
            .build()
    }

    /// The oracle as a shareable `(x, t) -> z` callback.
    pub fn as_fn(&self) -> Arc<dyn Fn(f64, f64) -> f64 + Send + Sync> {
        Arc::new(|x, t| {
            SandpileOracle
                .profile(x.clamp(0.0, 1.0), t.max(0.0))
                .expect("clamped arguments are in range")
        })
    }
}

fn check_x(what: &'static str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain { what, value: x })
    }
}

fn distance_unchecked(x: f64) -> f64 {
    0.5 - (x - 0.5).abs()
}

fn xi_unchecked(t: f64) -> f64 {
    if t <= 0.5 {
        t - 1.0 + ((1.0 - t) * (1.0 - t) + 2.0).sqrt()
    } else {
        t + 1.0 - ((t + 1.0) * (t + 1.0) - 2.0).sqrt()
    }
}
