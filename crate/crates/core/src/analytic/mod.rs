//! Exact stationary law of the k-level reflecting Brownian motion.
//!
//! On a stable model (`b_k < 0`) the stationary density is a mixture of
//! per-level densities,
//!
//! ```text
//! h(x) = Σ_j d_j h_j(x),   h_j(x) ∝ e^{β_j x} on S_j,
//! ```
//!
//! with weights proportional to `u_j = (η_j − η_{j−1}) / b_j` for `j < k` and
//! `u_k = −η_{k−1} / b_k`. Every `u_j` is positive, so the normalisation is an
//! ordinary log-sum-exp. Levels with zero drift (`j < k`) become uniform; the
//! zero-drift limit `(η_j − η_{j−1}) / b_j → 2 w_j η_{j−1} / σ_j²` is built
//! into [`ln_expm1_ratio`], which is exact at 0.

mod conjecture;

pub use conjecture::{
    conjectured_density_general, ApproxGrid, ConjecturedLaw, LinearProfile, Profile, StepProfile,
};

use rand::Rng;
use std::io::{self, Write};
use thiserror::Error;

use crate::export::fmt17;
use crate::model::{ModelError, MultiLevelModel, Segment, Stability};
use crate::numeric::{ln_expm1_ratio, log_sum_exp};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("model has no stationary distribution (top-level drift verdict: {0})")]
    Unstable(Stability),
    #[error("operation needs exactly {expected} levels, model has {found}")]
    WrongK { expected: usize, found: usize },
    #[error("closed form requires nonzero drift on every level; level {level} has b = 0")]
    ZeroDriftPresent { level: usize },
    #[error("state must be nonnegative, got {0}")]
    NegativeState(f64),
    #[error("mgf of the unbounded top level diverges for theta = {theta} > 0")]
    PositiveTheta { theta: f64 },
    #[error("level index {index} out of range for a {levels}-level model")]
    LevelOutOfRange { index: usize, levels: usize },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("stability integral diverges: {0}")]
    ConjectureUnstable(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Shape of a level's conditional density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentKind {
    /// Density proportional to `e^{rate·x}` on the level.
    Exponential { rate: f64 },
    /// Bounded zero-drift level.
    Uniform,
}

/// Moment generating function value of a level density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgfValue {
    pub theta: f64,
    pub value: f64,
    /// Set when `θ = 0` or `θ` sits on the removable pole `−β_j`.
    pub removable_singularity: bool,
}

const SINGULARITY_RADIUS: f64 = 1e-6;

/// `ln u_j` for every level; the caller must have checked stability.
fn log_unnormalised_weights(model: &MultiLevelModel) -> Vec<f64> {
    let k = model.levels();
    let log_etas = model.log_etas();
    (0..k)
        .map(|j| {
            let sigma2 = model.sigmas()[j].powi(2);
            let beta = model.betas()[j];
            let seg = model.segment(j);
            if j + 1 < k {
                // (η_j − η_{j−1}) / b_j = η_{j−1} (2 w / σ²) (e^{βw} − 1)/(βw)
                let w = seg.width();
                log_etas[j] + (2.0 * w / sigma2).ln() + ln_expm1_ratio(beta * w)
            } else {
                // −η_{k−1} / b_k = η_{k−1} · 2 / (σ² (−β))
                log_etas[j] + (2.0 / (sigma2 * -beta)).ln()
            }
        })
        .collect()
}

fn require_stable(model: &MultiLevelModel) -> Result<(), AnalyticError> {
    match model.stability() {
        Stability::Stable => Ok(()),
        other => Err(AnalyticError::Unstable(other)),
    }
}

/// Stationary weights `d_1..d_k`.
pub fn segment_weights(model: &MultiLevelModel) -> Result<Vec<f64>, AnalyticError> {
    require_stable(model)?;
    let logs = log_unnormalised_weights(model);
    let log_c = log_sum_exp(&logs);
    Ok(logs.iter().map(|l| (l - log_c).exp()).collect())
}

/// Two-level weights from the `k = 2` closed forms, kept as an independent
/// code path to cross-check [`segment_weights`].
pub fn weights_k2_reference(model: &MultiLevelModel) -> Result<(f64, f64), AnalyticError> {
    if model.levels() != 2 {
        return Err(AnalyticError::WrongK {
            expected: 2,
            found: model.levels(),
        });
    }
    require_stable(model)?;
    let (b1, b2) = (model.drifts()[0], model.drifts()[1]);
    let l1 = model.boundaries()[0];
    let s1 = model.sigmas()[0];
    if b1 == 0.0 {
        let denom = s1 * s1 - 2.0 * b2 * l1;
        let d1 = -2.0 * b2 * l1 / denom;
        let d2 = s1 * s1 / denom;
        Ok((d1, d2))
    } else {
        let beta1 = model.betas()[0];
        let em = (-beta1 * l1).exp_m1();
        let denom = b1 + b2 * em;
        Ok((b2 * em / denom, b1 / denom))
    }
}

/// `∫_0^x 2b/σ²` for the piecewise-constant coefficients.
fn exponent_integral(model: &MultiLevelModel, x: f64) -> f64 {
    let j = model.level_index(x);
    let seg = model.segment(j);
    model.log_etas()[j] + model.betas()[j] * (x - seg.lo)
}

/// Stationary density written as `exp(∫_0^x 2b/σ²) / (C_k σ²(x))`.
///
/// Valid only when every drift is nonzero. `C_k` is the integral of the
/// unnormalised density, evaluated level by level in closed form.
pub fn density_closed_form(model: &MultiLevelModel, x: f64) -> Result<f64, AnalyticError> {
    require_stable(model)?;
    if let Some(&level) = model.zero_drift_levels().first() {
        return Err(AnalyticError::ZeroDriftPresent { level });
    }
    if x < 0.0 || x.is_nan() {
        return Err(AnalyticError::NegativeState(x));
    }
    let k = model.levels();
    let log_pieces: Vec<f64> = model
        .segments()
        .map(|seg| {
            let j = seg.index;
            let beta = model.betas()[j];
            let sigma2 = model.sigmas()[j].powi(2);
            let start = exponent_integral(model, seg.lo);
            // ∫_{S_j} e^{start + β(y − lo)} / σ² dy
            if j + 1 < k {
                let w = seg.width();
                start + (w / sigma2).ln() + ln_expm1_ratio(beta * w)
            } else {
                start - (sigma2 * -beta).ln()
            }
        })
        .collect();
    let log_ck = log_sum_exp(&log_pieces);
    let (sigma, _) = model.coefficients_unchecked(x);
    Ok((exponent_integral(model, x) - log_ck).exp() / (sigma * sigma))
}

/// Exact stationary law of a stable model.
#[derive(Debug, Clone)]
pub struct StationaryLaw {
    model: MultiLevelModel,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    kinds: Vec<SegmentKind>,
    log_norm: f64,
    cdf_at_boundaries: Vec<f64>,
}

impl StationaryLaw {
    pub fn new(model: MultiLevelModel) -> Result<Self, AnalyticError> {
        require_stable(&model)?;
        let k = model.levels();
        let logs = log_unnormalised_weights(&model);
        let log_norm = log_sum_exp(&logs);
        let log_weights: Vec<f64> = logs.iter().map(|l| l - log_norm).collect();
        let weights: Vec<f64> = log_weights.iter().map(|l| l.exp()).collect();
        let kinds = (0..k)
            .map(|j| {
                let beta = model.betas()[j];
                if beta == 0.0 && j + 1 < k {
                    SegmentKind::Uniform
                } else {
                    SegmentKind::Exponential { rate: beta }
                }
            })
            .collect();
        let mut cdf_at_boundaries = Vec::with_capacity(k.saturating_sub(1));
        let mut acc = 0.0;
        for &d in &weights[..k - 1] {
            acc += d;
            cdf_at_boundaries.push(acc);
        }
        Ok(Self {
            model,
            weights,
            log_weights,
            kinds,
            log_norm,
            cdf_at_boundaries,
        })
    }

    pub fn model(&self) -> &MultiLevelModel {
        &self.model
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn segment_kinds(&self) -> &[SegmentKind] {
        &self.kinds
    }

    /// `ln C` with `C = Σ_i b_i^{-1}(η_i − η_{i−1})` (top term `−η_{k−1}/b_k`).
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// `F(ℓ_j)` for `j = 1..k-1`.
    pub fn cdf_at_boundaries(&self) -> &[f64] {
        &self.cdf_at_boundaries
    }

    /// Long-run regulator rate `E[Y(1)] = 1/C`.
    pub fn regulator_rate(&self) -> f64 {
        (-self.log_norm).exp()
    }

    /// `E[L_{ℓ_j}(1)] = 2 E[Y(1)] η_j` for boundary `ℓ_j`, `j = 1..k-1`.
    pub fn boundary_local_time_rate(&self, j: usize) -> f64 {
        assert!(j >= 1 && j < self.model.levels(), "boundary index out of range");
        2.0 * (self.model.log_etas()[j] - self.log_norm).exp()
    }

    fn check_state(x: f64) -> Result<(), AnalyticError> {
        if x < 0.0 || x.is_nan() {
            Err(AnalyticError::NegativeState(x))
        } else {
            Ok(())
        }
    }

    /// Conditional density of level `j` at `x ∈ S_j`, in log form.
    fn log_segment_density(&self, seg: &Segment, x: f64) -> f64 {
        let beta = self.model.betas()[seg.index];
        if seg.is_unbounded() {
            (-beta).ln() + beta * (x - seg.lo)
        } else {
            let w = seg.width();
            beta * (x - seg.lo) - ln_expm1_ratio(beta * w) - w.ln()
        }
    }

    pub fn density_at(&self, x: f64) -> Result<f64, AnalyticError> {
        Self::check_state(x)?;
        let seg = self.model.segment(self.model.level_index(x));
        Ok((self.log_weights[seg.index] + self.log_segment_density(&seg, x)).exp())
    }

    /// Conditional CDF of level `j` at `x ∈ S_j`.
    fn segment_cdf(&self, seg: &Segment, x: f64) -> f64 {
        let beta = self.model.betas()[seg.index];
        let y = x - seg.lo;
        if seg.is_unbounded() {
            return -(beta * y).exp_m1();
        }
        let w = seg.width();
        if beta == 0.0 {
            y / w
        } else if beta > 0.0 {
            (beta * (y - w)).exp() * (-(-beta * y).exp_m1()) / (-(-beta * w).exp_m1())
        } else {
            (beta * y).exp_m1() / (beta * w).exp_m1()
        }
    }

    pub fn cdf_at(&self, x: f64) -> Result<f64, AnalyticError> {
        Self::check_state(x)?;
        if x.is_infinite() {
            return Ok(1.0);
        }
        let seg = self.model.segment(self.model.level_index(x));
        let below = if seg.index == 0 {
            0.0
        } else {
            self.cdf_at_boundaries[seg.index - 1]
        };
        Ok((below + self.weights[seg.index] * self.segment_cdf(&seg, x)).min(1.0))
    }

    /// `ĥ_j(θ) = ∫ e^{θx} h_j(x) dx` for zero-based level `j`.
    pub fn mgf_segment(&self, j: usize, theta: f64) -> Result<MgfValue, AnalyticError> {
        let k = self.model.levels();
        if j >= k {
            return Err(AnalyticError::LevelOutOfRange {
                index: j,
                levels: k,
            });
        }
        let seg = self.model.segment(j);
        let beta = self.model.betas()[j];
        if seg.is_unbounded() && theta > 0.0 {
            return Err(AnalyticError::PositiveTheta { theta });
        }
        if theta == 0.0 {
            return Ok(MgfValue {
                theta,
                value: 1.0,
                removable_singularity: true,
            });
        }
        let value = if seg.is_unbounded() {
            (theta * seg.lo).exp() * beta / (beta + theta)
        } else {
            // e^{θ lo} · [(e^{(θ+β)w} − 1)/(θ+β)] / [(e^{βw} − 1)/β]
            let w = seg.width();
            (theta * seg.lo + ln_expm1_ratio((theta + beta) * w) - ln_expm1_ratio(beta * w))
                .exp()
        };
        Ok(MgfValue {
            theta,
            value,
            removable_singularity: !seg.is_unbounded() && (theta + beta).abs() < SINGULARITY_RADIUS,
        })
    }

    /// `φ_j(θ) = E[e^{θZ} 1(Z ∈ S_j)] = d_j ĥ_j(θ)`.
    pub fn partial_mgf(&self, j: usize, theta: f64) -> Result<f64, AnalyticError> {
        Ok(self.weights[j] * self.mgf_segment(j, theta)?.value)
    }

    fn segment_mean(&self, seg: &Segment) -> f64 {
        let beta = self.model.betas()[seg.index];
        if seg.is_unbounded() {
            return seg.lo - 1.0 / beta;
        }
        let w = seg.width();
        let x = beta * w;
        let offset = if x.abs() < 1e-4 {
            w * (0.5 + x / 12.0)
        } else if beta > 0.0 {
            w / (-(-x).exp_m1()) - 1.0 / beta
        } else {
            // w e^{x}/(e^{x} − 1) − 1/β with x < 0
            -w * x.exp() / (-x.exp_m1()) - 1.0 / beta
        };
        seg.lo + offset
    }

    pub fn mean(&self) -> f64 {
        self.model
            .segments()
            .map(|seg| self.weights[seg.index] * self.segment_mean(&seg))
            .sum()
    }

    fn invert_segment(&self, seg: &Segment, u: f64) -> f64 {
        let beta = self.model.betas()[seg.index];
        if seg.is_unbounded() {
            return seg.lo + (-u).ln_1p() / beta;
        }
        let w = seg.width();
        let y = if beta == 0.0 {
            u * w
        } else if beta > 0.0 {
            w + (u + (1.0 - u) * (-beta * w).exp()).ln() / beta
        } else {
            (u * (beta * w).exp_m1()).ln_1p() / beta
        };
        let x = seg.lo + y.max(0.0);
        if x >= seg.hi {
            seg.hi.next_down()
        } else {
            x
        }
    }

    /// Draw one state with `rng`: pick a level by its weight, then invert the
    /// level's conditional CDF.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let pick: f64 = rng.random();
        let k = self.weights.len();
        let j = self
            .cdf_at_boundaries
            .iter()
            .position(|&c| pick < c)
            .unwrap_or(k - 1);
        let u: f64 = rng.random();
        self.invert_segment(&self.model.segment(j), u)
    }

    /// `n` i.i.d. stationary samples, reproducible for a fixed seed.
    pub fn sample(&self, seed: u64, n: usize) -> Vec<f64> {
        let mut rng = rng::stream(seed, Purpose::StationarySample, 0, 0);
        (0..n).map(|_| self.sample_one(&mut rng)).collect()
    }

    /// Write `x,density,cdf` rows for every `x` in `xs`.
    pub fn write_density_csv<W: Write>(&self, xs: &[f64], mut out: W) -> io::Result<()> {
        writeln!(out, "x,density,cdf")?;
        for &x in xs {
            let d = self.density_at(x).map_err(io::Error::other)?;
            let c = self.cdf_at(x).map_err(io::Error::other)?;
            writeln!(out, "{},{},{}", fmt17(x), fmt17(d), fmt17(c))?;
        }
        Ok(())
    }
}

/// Stationary density at `x`; convenience wrapper building the law.
pub fn density_at(law: &StationaryLaw, x: f64) -> Result<f64, AnalyticError> {
    law.density_at(x)
}

pub fn cdf_at(law: &StationaryLaw, x: f64) -> Result<f64, AnalyticError> {
    law.cdf_at(x)
}

pub fn mgf_segment(law: &StationaryLaw, j: usize, theta: f64) -> Result<MgfValue, AnalyticError> {
    law.mgf_segment(j, theta)
}

pub fn sample_stationary(law: &StationaryLaw, seed: u64, n: usize) -> Vec<f64> {
    law.sample(seed, n)
}

pub fn stationary_mean(law: &StationaryLaw) -> f64 {
    law.mean()
}
