//! Multi-level coefficient structure.
//!
//! The state space `[0, ∞)` is cut into `k` half-open levels
//! `S_1 = [0, ℓ_1)`, `S_j = [ℓ_{j-1}, ℓ_j)`, `S_k = [ℓ_{k-1}, ∞)`. On each
//! level the diffusion scale `σ_j` and drift `b_j` are constant. Derived
//! quantities (`β_j = 2 b_j / σ_j²` and the cumulative exponents `log η_j`)
//! are computed once at construction and kept in log-space.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("boundaries must be strictly increasing: boundaries[{index}] = {value} does not exceed the previous boundary")]
    NonIncreasingBoundaries { index: usize, value: f64 },
    #[error("boundaries must be strictly positive and finite: boundaries[{index}] = {value}")]
    NonPositiveBoundary { index: usize, value: f64 },
    #[error("sigmas[{index}] = {value} must be strictly positive and finite")]
    NonPositiveSigma { index: usize, value: f64 },
    #[error("drifts[{index}] = {value} must be finite")]
    NonFiniteDrift { index: usize, value: f64 },
    #[error("length mismatch: {key} has {found} entries, expected {expected} (boundaries + 1)")]
    LengthMismatch {
        key: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("state must be nonnegative, got {0}")]
    NegativeState(f64),
}

/// Raw level specification, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSpec {
    /// Interior thresholds `ℓ_1 < … < ℓ_{k-1}`.
    pub boundaries: Vec<f64>,
    /// Diffusion scale per level.
    pub sigmas: Vec<f64>,
    /// Drift per level.
    pub drifts: Vec<f64>,
}

impl LevelSpec {
    pub fn new(boundaries: Vec<f64>, sigmas: Vec<f64>, drifts: Vec<f64>) -> Self {
        Self {
            boundaries,
            sigmas,
            drifts,
        }
    }

    /// Single-level spec (standard reflecting Brownian motion).
    pub fn single(sigma: f64, drift: f64) -> Self {
        Self::new(Vec::new(), vec![sigma], vec![drift])
    }

    fn validate(&self) -> Result<(), ModelError> {
        let k = self.boundaries.len() + 1;
        if self.sigmas.len() != k {
            return Err(ModelError::LengthMismatch {
                key: "sigmas",
                expected: k,
                found: self.sigmas.len(),
            });
        }
        if self.drifts.len() != k {
            return Err(ModelError::LengthMismatch {
                key: "drifts",
                expected: k,
                found: self.drifts.len(),
            });
        }
        let mut prev = 0.0;
        for (index, &value) in self.boundaries.iter().enumerate() {
            if !value.is_finite() || value <= 0.0 {
                return Err(ModelError::NonPositiveBoundary { index, value });
            }
            if index > 0 && value <= prev {
                return Err(ModelError::NonIncreasingBoundaries { index, value });
            }
            prev = value;
        }
        for (index, &value) in self.sigmas.iter().enumerate() {
            if !value.is_finite() || value <= 0.0 {
                return Err(ModelError::NonPositiveSigma { index, value });
            }
        }
        for (index, &value) in self.drifts.iter().enumerate() {
            if !value.is_finite() {
                return Err(ModelError::NonFiniteDrift { index, value });
            }
        }
        Ok(())
    }
}

/// A level `S_j = [lo, hi)`; `hi` is `+∞` for the top level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Zero-based level index (`j - 1` in one-based notation).
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Segment {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x < self.hi
    }

    pub fn is_unbounded(&self) -> bool {
        self.hi.is_infinite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Null,
    Transient,
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stability::Stable => "stable",
            Stability::Null => "null",
            Stability::Transient => "transient",
        };
        f.write_str(s)
    }
}

/// Validated k-level model with derived `β_j` and `log η_j`.
///
/// `η_k = 0` is a bookkeeping convention and is never stored; every
/// formula special-cases the top level instead.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLevelModel {
    spec: LevelSpec,
    betas: Vec<f64>,
    log_etas: Vec<f64>,
}

impl MultiLevelModel {
    pub fn new(spec: LevelSpec) -> Result<Self, ModelError> {
        spec.validate()?;
        let betas: Vec<f64> = spec
            .sigmas
            .iter()
            .zip(&spec.drifts)
            .map(|(s, b)| 2.0 * b / (s * s))
            .collect();
        let k = betas.len();
        let mut log_etas = Vec::with_capacity(k);
        log_etas.push(0.0);
        let mut acc = 0.0;
        let mut lo = 0.0;
        for j in 0..k - 1 {
            let hi = spec.boundaries[j];
            acc += betas[j] * (hi - lo);
            log_etas.push(acc);
            lo = hi;
        }
        Ok(Self {
            spec,
            betas,
            log_etas,
        })
    }

    pub fn spec(&self) -> &LevelSpec {
        &self.spec
    }

    /// Number of levels `k`.
    pub fn levels(&self) -> usize {
        self.spec.sigmas.len()
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.spec.boundaries
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.spec.sigmas
    }

    pub fn drifts(&self) -> &[f64] {
        &self.spec.drifts
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// `log η_j` for zero-based `j = 0..k-1`.
    pub fn log_etas(&self) -> &[f64] {
        &self.log_etas
    }

    /// Top-level drift `b_k`.
    pub fn top_drift(&self) -> f64 {
        *self.spec.drifts.last().expect("validated model has k >= 1")
    }

    /// Lower edge of the top level, `ℓ_{k-1}` (zero when `k = 1`).
    pub fn top_boundary(&self) -> f64 {
        self.spec.boundaries.last().copied().unwrap_or(0.0)
    }

    pub fn segment(&self, j: usize) -> Segment {
        let lo = if j == 0 { 0.0 } else { self.spec.boundaries[j - 1] };
        let hi = self
            .spec
            .boundaries
            .get(j)
            .copied()
            .unwrap_or(f64::INFINITY);
        Segment { index: j, lo, hi }
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        (0..self.levels()).map(|j| self.segment(j))
    }

    /// Zero-based index of the level containing `x`; no validation.
    #[inline]
    pub fn level_index(&self, x: f64) -> usize {
        self.spec.boundaries.partition_point(|&l| l <= x)
    }

    /// `(σ, b)` at state `x ≥ 0`, left-closed/right-open at each boundary.
    pub fn coefficients_at(&self, x: f64) -> Result<(f64, f64), ModelError> {
        if x < 0.0 || x.is_nan() {
            return Err(ModelError::NegativeState(x));
        }
        Ok(self.coefficients_unchecked(x))
    }

    #[inline]
    pub(crate) fn coefficients_unchecked(&self, x: f64) -> (f64, f64) {
        let j = self.level_index(x);
        (self.spec.sigmas[j], self.spec.drifts[j])
    }

    pub fn stability(&self) -> Stability {
        let b = self.top_drift();
        if b < 0.0 {
            Stability::Stable
        } else if b == 0.0 {
            Stability::Null
        } else {
            Stability::Transient
        }
    }

    /// Indices of zero-drift levels.
    pub fn zero_drift_levels(&self) -> Vec<usize> {
        self.spec
            .drifts
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Validate a spec and derive `β_j`, `log η_j`.
pub fn build_model(spec: LevelSpec) -> Result<MultiLevelModel, ModelError> {
    MultiLevelModel::new(spec)
}

pub fn stability_check(model: &MultiLevelModel) -> Stability {
    model.stability()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1_sig3() -> MultiLevelModel {
        build_model(LevelSpec::new(vec![1.0], vec![1.0, 3.0], vec![1.0, -1.0])).unwrap()
    }

    #[test]
    fn two_level_betas_and_etas() {
        let m = build_model(LevelSpec::new(vec![1.0], vec![1.0, 1.0], vec![1.0, -1.0])).unwrap();
        assert_eq!(m.betas(), &[2.0, -2.0]);
        assert_eq!(m.log_etas(), &[0.0, 2.0]);
    }

    #[test]
    fn three_level_etas_accumulate() {
        let m = build_model(LevelSpec::new(
            vec![1.0, 2.0],
            vec![1.0, 2.0, 1.0],
            vec![1.0, 1.0, -1.0],
        ))
        .unwrap();
        assert_eq!(m.betas(), &[2.0, 0.5, -2.0]);
        assert_eq!(m.log_etas(), &[0.0, 2.0, 2.5]);
    }

    #[test]
    fn rejects_bad_specs() {
        let err = build_model(LevelSpec::new(
            vec![2.0, 1.0],
            vec![1.0, 1.0, 1.0],
            vec![0.0, 0.0, -1.0],
        ))
        .unwrap_err();
        assert!(matches!(err, ModelError::NonIncreasingBoundaries { index: 1, .. }));

        let err = build_model(LevelSpec::new(vec![1.0], vec![1.0], vec![1.0, -1.0])).unwrap_err();
        assert!(matches!(err, ModelError::LengthMismatch { key: "sigmas", .. }));

        let err =
            build_model(LevelSpec::new(vec![1.0], vec![1.0, 0.0], vec![1.0, -1.0])).unwrap_err();
        assert!(matches!(err, ModelError::NonPositiveSigma { index: 1, .. }));

        let err =
            build_model(LevelSpec::new(vec![0.0], vec![1.0, 1.0], vec![1.0, -1.0])).unwrap_err();
        assert!(matches!(err, ModelError::NonPositiveBoundary { index: 0, .. }));

        let err = build_model(LevelSpec::new(vec![], vec![1.0], vec![f64::NAN])).unwrap_err();
        assert!(matches!(err, ModelError::NonFiniteDrift { index: 0, .. }));
    }

    #[test]
    fn half_open_coefficient_lookup() {
        let m = m1_sig3();
        assert_eq!(m.coefficients_at(0.5).unwrap(), (1.0, 1.0));
        assert_eq!(m.coefficients_at(1.0).unwrap(), (3.0, -1.0));
        assert_eq!(m.coefficients_at(10.0).unwrap(), (3.0, -1.0));
        assert_eq!(m.coefficients_at(0.0).unwrap(), (1.0, 1.0));
        assert!(matches!(
            m.coefficients_at(-0.1),
            Err(ModelError::NegativeState(_))
        ));
    }

    #[test]
    fn stability_verdicts() {
        let v = |b: [f64; 2]| {
            build_model(LevelSpec::new(vec![1.0], vec![1.0, 1.0], b.to_vec()))
                .unwrap()
                .stability()
        };
        assert_eq!(v([1.0, -1.0]), Stability::Stable);
        assert_eq!(v([-1.0, 0.0]), Stability::Null);
        assert_eq!(v([-5.0, 2.0]), Stability::Transient);
    }

    #[test]
    fn single_level_is_accepted() {
        let m = build_model(LevelSpec::single(1.0, -1.0)).unwrap();
        assert_eq!(m.levels(), 1);
        assert_eq!(m.log_etas(), &[0.0]);
        assert_eq!(m.top_boundary(), 0.0);
        assert!(m.segment(0).is_unbounded());
    }

    #[test]
    fn segments_partition_half_line() {
        let m = build_model(LevelSpec::new(
            vec![0.5, 1.5, 4.0],
            vec![1.0; 4],
            vec![1.0, -1.0, 2.0, -3.0],
        ))
        .unwrap();
        let segs: Vec<_> = m.segments().collect();
        assert_eq!(segs[0].lo, 0.0);
        for w in segs.windows(2) {
            assert_eq!(w[0].hi, w[1].lo);
        }
        assert!(segs[3].is_unbounded());
        for x in [0.0, 0.49, 0.5, 1.5, 3.99, 4.0, 100.0] {
            let j = m.level_index(x);
            assert!(segs[j].contains(x));
        }
    }
}
