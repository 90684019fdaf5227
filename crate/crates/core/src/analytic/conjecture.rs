//! Experimental: stationary density for general (non piecewise-constant)
//! coefficient profiles, approximated by a k-level model.
//!
//! The profiles are sampled at the midpoint of each cell of a uniform grid on
//! `[0, x_max)`; beyond `x_max` they are treated as constant (their value at
//! `x_max`). The resulting k-level law is exact for that step model. There is
//! no convergence proof for the general case; only self-convergence in `k`
//! is tested.

use super::{AnalyticError, StationaryLaw};
use crate::model::{LevelSpec, MultiLevelModel};
use crate::numeric::{integrate_with_breaks, QuadratureOptions};
use serde::{Deserialize, Serialize};

/// A coefficient profile `x ↦ value`, consulted on `[0, ∞)` only.
pub trait Profile {
    fn value(&self, x: f64) -> f64;
}

impl<F: Fn(f64) -> f64> Profile for F {
    fn value(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Tabulated step profile: `values[i]` on `[breakpoints[i-1], breakpoints[i])`
/// with the same half-open convention as the level model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepProfile {
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepProfile {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, AnalyticError> {
        let p = Self {
            breakpoints,
            values,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn constant(value: f64) -> Self {
        Self {
            breakpoints: Vec::new(),
            values: vec![value],
        }
    }

    pub fn validate(&self) -> Result<(), AnalyticError> {
        if self.values.len() != self.breakpoints.len() + 1 {
            return Err(AnalyticError::InvalidProfile(format!(
                "step profile needs {} values for {} breakpoints, got {}",
                self.breakpoints.len() + 1,
                self.breakpoints.len(),
                self.values.len()
            )));
        }
        if self.breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AnalyticError::InvalidProfile(
                "step profile breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

impl Profile for StepProfile {
    fn value(&self, x: f64) -> f64 {
        self.values[self.breakpoints.partition_point(|&b| b <= x)]
    }
}

/// Piecewise-linear profile through `(x[i], values[i])`, constant beyond the
/// first and last knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearProfile {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
}

impl LinearProfile {
    pub fn new(x: Vec<f64>, values: Vec<f64>) -> Result<Self, AnalyticError> {
        let p = Self { x, values };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AnalyticError> {
        if self.x.is_empty() || self.x.len() != self.values.len() {
            return Err(AnalyticError::InvalidProfile(format!(
                "linear profile needs matching nonempty knots and values, got {} and {}",
                self.x.len(),
                self.values.len()
            )));
        }
        if self.x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AnalyticError::InvalidProfile(
                "linear profile knots must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

impl Profile for LinearProfile {
    fn value(&self, x: f64) -> f64 {
        let i = self.x.partition_point(|&k| k <= x);
        if i == 0 {
            return self.values[0];
        }
        if i == self.x.len() {
            return self.values[i - 1];
        }
        let (x0, x1) = (self.x[i - 1], self.x[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        v0 + (v1 - v0) * (x - x0) / (x1 - x0)
    }
}

/// Uniform grid: `levels - 1` finite cells on `[0, x_max)` plus the tail level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxGrid {
    pub x_max: f64,
    pub levels: usize,
}

impl ApproxGrid {
    pub fn new(x_max: f64, levels: usize) -> Self {
        Self { x_max, levels }
    }

    fn cell_width(&self) -> f64 {
        self.x_max / (self.levels - 1) as f64
    }

    pub fn boundaries(&self) -> Vec<f64> {
        let cells = self.levels - 1;
        (1..=cells)
            .map(|i| i as f64 * self.x_max / cells as f64)
            .collect()
    }

    /// Sample point per level: cell midpoints, then `x_max` for the tail.
    pub fn sample_points(&self) -> Vec<f64> {
        let h = self.cell_width();
        let mut pts: Vec<f64> = (0..self.levels - 1).map(|i| (i as f64 + 0.5) * h).collect();
        pts.push(self.x_max);
        pts
    }
}

#[derive(Debug, Clone)]
pub struct ConjecturedLaw {
    pub law: StationaryLaw,
    pub grid: ApproxGrid,
    /// Numerical estimate of `∫_0^∞ σ^{-2} exp(∫_0^x 2b/σ²) dx` on the
    /// original profiles (tail beyond `x_max` integrated in closed form).
    pub stability_integral: f64,
}

fn check_profiles<S: Profile + ?Sized, B: Profile + ?Sized>(
    sigma: &S,
    drift: &B,
    points: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), AnalyticError> {
    let mut sigmas = Vec::with_capacity(points.len());
    let mut drifts = Vec::with_capacity(points.len());
    for &x in points {
        let s = sigma.value(x);
        let b = drift.value(x);
        if !(s.is_finite() && s > 0.0) {
            return Err(AnalyticError::InvalidProfile(format!(
                "sigma({x}) = {s}; sigma must be positive and finite"
            )));
        }
        if !b.is_finite() {
            return Err(AnalyticError::InvalidProfile(format!(
                "drift({x}) = {b} is not finite"
            )));
        }
        sigmas.push(s);
        drifts.push(b);
    }
    Ok((sigmas, drifts))
}

/// Stability integral on `[0, x_max]` by cellwise quadrature (the inner
/// exponent integral is accumulated cell by cell), plus the constant tail.
fn stability_integral<S: Profile + ?Sized, B: Profile + ?Sized>(
    sigma: &S,
    drift: &B,
    x_max: f64,
) -> Result<f64, AnalyticError> {
    const CELLS: usize = 2048;
    let opts = QuadratureOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-10,
        max_intervals: 64,
    };
    let rate = |y: f64| {
        let s = sigma.value(y);
        2.0 * drift.value(y) / (s * s)
    };
    let h = x_max / CELLS as f64;
    let mut exponent_at_start = 0.0;
    let mut total = 0.0;
    for i in 0..CELLS {
        let a = i as f64 * h;
        let b = a + h;
        let start = exponent_at_start;
        let cell = integrate_with_breaks(
            |x: f64| {
                let inner = integrate_with_breaks(rate, &[a, x.max(a)], opts).value;
                let s = sigma.value(x);
                (start + inner).exp() / (s * s)
            },
            &[a, b],
            opts,
        );
        total += cell.value;
        exponent_at_start += integrate_with_breaks(rate, &[a, b], opts).value;
        if !exponent_at_start.is_finite() || !total.is_finite() {
            return Err(AnalyticError::ConjectureUnstable(format!(
                "integrand overflows before x = {b}"
            )));
        }
    }
    let b_tail = drift.value(x_max);
    if b_tail >= 0.0 {
        return Err(AnalyticError::ConjectureUnstable(format!(
            "tail drift b({x_max}) = {b_tail} is not negative"
        )));
    }
    // ∫_{x_max}^∞ σ^{-2} e^{E + (2b/σ²)(x − x_max)} dx = e^E / (2|b|)
    total += exponent_at_start.exp() / (2.0 * -b_tail);
    if !total.is_finite() {
        return Err(AnalyticError::ConjectureUnstable(
            "stability integral is not finite".into(),
        ));
    }
    Ok(total)
}

/// Build the k-level midpoint approximation of `(σ(·), b(·))` and return its
/// exact stationary law together with the stability-integral estimate.
pub fn conjectured_density_general<S: Profile + ?Sized, B: Profile + ?Sized>(
    sigma: &S,
    drift: &B,
    grid: ApproxGrid,
) -> Result<ConjecturedLaw, AnalyticError> {
    if grid.levels < 2 {
        return Err(AnalyticError::InvalidProfile(format!(
            "approximation needs at least 2 levels, got {}",
            grid.levels
        )));
    }
    if !(grid.x_max.is_finite() && grid.x_max > 0.0) {
        return Err(AnalyticError::InvalidProfile(format!(
            "grid extent must be positive and finite, got {}",
            grid.x_max
        )));
    }
    let (sigmas, drifts) = check_profiles(sigma, drift, &grid.sample_points())?;
    let stability_integral = stability_integral(sigma, drift, grid.x_max)?;
    let model = MultiLevelModel::new(LevelSpec::new(grid.boundaries(), sigmas, drifts))?;
    let law = StationaryLaw::new(model).map_err(|e| match e {
        AnalyticError::Unstable(v) => {
            AnalyticError::ConjectureUnstable(format!("step model is {v}"))
        }
        other => other,
    })?;
    Ok(ConjecturedLaw {
        law,
        grid,
        stability_integral,
    })
}
