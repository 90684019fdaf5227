//! Path simulation: projected Euler scheme, the up/down-crossing
//! construction, local-time estimators and first-passage times.
//!
//! Both simulators feed the same online accumulators, so long runs never
//! store the full path. Statistics after burn-in are split into equal-length
//! batches; batches (pooled over paths) are the replicates for standard errors.

use crate::export::fmt17;
use crate::model::{ModelError, MultiLevelModel};
use crate::rng::{stream, Purpose};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdeError {
    #[error("invalid horizon: T = {horizon}, dt = {dt} (need 0 < dt <= T)")]
    InvalidHorizon { horizon: f64, dt: f64 },
    #[error("initial state {0} is negative")]
    NegativeState(f64),
    #[error("switch levels must satisfy 0 < c < d < {upper}, got c = {c}, d = {d}")]
    InvalidSwitchLevels { c: f64, d: f64, upper: f64 },
    #[error("bandwidth {0} was not accumulated during simulation")]
    UnknownBandwidth(f64),
    #[error("no local-time accumulator at level {0}")]
    UnknownLevel(f64),
    #[error("invalid simulation option: {0}")]
    InvalidOption(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One projected Euler step from `z ≥ 0`.
///
/// Returns the new state `max(p, 0)` and the regulator increment `max(-p, 0)`
/// where `p = z + b(z) dt + σ(z) √dt g`.
#[inline]
pub fn euler_step(z: f64, model: &MultiLevelModel, dt: f64, g: f64) -> (f64, f64) {
    let (s, b) = model.coefficients_unchecked(z);
    let p = z + b * dt + s * dt.sqrt() * g;
    if p < 0.0 {
        (0.0, -p)
    } else {
        (p, 0.0)
    }
}

/// Boundary treatment of the Euler scheme at 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reflection {
    /// `z' = max(p, 0)`, `dy = max(-p, 0)`: the discrete Skorokhod map.
    #[default]
    Projection,
    /// `z' = |p|`, `dy = 2 max(-p, 0)`. Exact in law for driftless Brownian
    /// motion at the boundary; removes the `O(√dt)` regulator bias.
    Mirror,
}

/// One Euler step with mirror reflection; see [`Reflection::Mirror`].
#[inline]
pub fn mirror_step(z: f64, model: &MultiLevelModel, dt: f64, g: f64) -> (f64, f64) {
    let (s, b) = model.coefficients_unchecked(z);
    let p = z + b * dt + s * dt.sqrt() * g;
    if p < 0.0 {
        (-p, -2.0 * p)
    } else {
        (p, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub horizon: f64,
    pub dt: f64,
    pub x0: f64,
    pub seed: u64,
    /// Path index; selects the noise stream within `seed`.
    pub path_index: u64,
    /// Half-widths ε of the local-time windows.
    pub bandwidths: Vec<f64>,
    /// Local-time levels in addition to 0 and the interior boundaries.
    pub extra_levels: Vec<f64>,
    /// Discarded initial time. `None` accumulates from `t = 0` and marks the
    /// run as non-stationary.
    pub burn_in: Option<f64>,
    pub batches: usize,
    /// Keep `(t, z, y)` every `record_stride` steps; 0 keeps nothing.
    pub record_stride: usize,
    /// Keep a post-burn-in state sample every `sample_stride` steps; 0 keeps none.
    pub sample_stride: usize,
    /// θ values for the empirical partial mgfs.
    pub thetas: Vec<f64>,
    /// Occupation histogram edges; the outer bins absorb values outside.
    pub histogram_edges: Vec<f64>,
    pub reflection: Reflection,
}

impl SimOptions {
    /// Defaults: burn-in 10% of the horizon, 20 batches, no recording.
    pub fn new(horizon: f64, dt: f64, x0: f64, seed: u64) -> Self {
        Self {
            horizon,
            dt,
            x0,
            seed,
            path_index: 0,
            bandwidths: Vec::new(),
            extra_levels: Vec::new(),
            burn_in: Some(0.1 * horizon),
            batches: 20,
            record_stride: 0,
            sample_stride: 0,
            thetas: Vec::new(),
            histogram_edges: Vec::new(),
            reflection: Reflection::Projection,
        }
    }

    fn validate(&self) -> Result<Plan, SdeError> {
        let (t, dt) = (self.horizon, self.dt);
        if !(t.is_finite() && dt.is_finite() && t > 0.0 && dt > 0.0 && dt <= t) {
            return Err(SdeError::InvalidHorizon { horizon: t, dt });
        }
        if !(self.x0 >= 0.0 && self.x0.is_finite()) {
            return Err(SdeError::NegativeState(self.x0));
        }
        if let Some(&e) = self.bandwidths.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(SdeError::InvalidOption(format!(
                "bandwidth {e} must be positive"
            )));
        }
        if let Some(&a) = self.extra_levels.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(SdeError::InvalidOption(format!(
                "local-time level {a} must be finite and nonnegative"
            )));
        }
        if self.thetas.iter().any(|t| !t.is_finite()) {
            return Err(SdeError::InvalidOption("theta values must be finite".into()));
        }
        if self.histogram_edges.len() == 1
            || self.histogram_edges.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(SdeError::InvalidOption(
                "histogram edges must be at least two strictly increasing values".into(),
            ));
        }
        if self.batches == 0 {
            return Err(SdeError::InvalidOption("batches must be positive".into()));
        }
        let steps = ((t / dt).round() as u64).max(1);
        let burn = self.burn_in.unwrap_or(0.0);
        if !(burn >= 0.0 && burn < t) {
            return Err(SdeError::InvalidOption(format!(
                "burn-in {burn} must lie in [0, {t})"
            )));
        }
        let burn_steps = (burn / dt).round() as u64;
        let post = steps.saturating_sub(burn_steps);
        if post < self.batches as u64 {
            return Err(SdeError::InvalidOption(format!(
                "{post} post-burn-in steps cannot fill {} batches",
                self.batches
            )));
        }
        Ok(Plan {
            steps,
            burn_steps,
            batch_len: post / self.batches as u64,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Plan {
    steps: u64,
    burn_steps: u64,
    batch_len: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    UpCrossing,
    DownCrossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingSummary {
    pub c: f64,
    pub d: f64,
    pub first_phase: Phase,
    pub up_segments: u64,
    pub down_segments: u64,
}

/// Totals over one post-burn-in batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTotals {
    pub duration: f64,
    pub regulator: f64,
    /// Time spent in each level.
    pub level_time: Vec<f64>,
    /// `Σ 1(|z − a| < ε) σ²(z) dt`, indexed `level * n_bandwidths + bandwidth`.
    pub local_occupation: Vec<f64>,
    /// `Σ e^{θz} 1(z ∈ S_j) dt`, indexed `theta * k + level`.
    pub mgf: Vec<f64>,
}

impl BatchTotals {
    fn zeros(k: usize, n_local: usize, n_theta: usize) -> Self {
        Self {
            duration: 0.0,
            regulator: 0.0,
            level_time: vec![0.0; k],
            local_occupation: vec![0.0; n_local],
            mgf: vec![0.0; n_theta * k],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub path_index: u64,
    pub x0: f64,
    pub steps: u64,
    pub final_z: f64,
    pub final_y: f64,
    /// Thinned samples of the path.
    pub times: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    /// Local-time levels: 0, the interior boundaries, then any extra levels.
    pub local_levels: Vec<f64>,
    pub bandwidths: Vec<f64>,
    /// Whole-path `Σ 1(|z − a| < ε) σ²(z) dt`, indexed like `BatchTotals::local_occupation`.
    pub local_occupation: Vec<f64>,
    /// Whole-path `Σ 1(z_i > a)(Δz_i − Δy_i)` per local-time level.
    pub tanaka_integral: Vec<f64>,
    pub burn_in: Option<f64>,
    pub thetas: Vec<f64>,
    pub batches: Vec<BatchTotals>,
    pub histogram_edges: Vec<f64>,
    /// Post-burn-in time spent in each histogram bin.
    pub histogram_time: Vec<f64>,
    /// Post-burn-in states every `sample_stride` steps.
    pub samples: Vec<f64>,
    pub crossing: Option<CrossingSummary>,
}

impl PathRecord {
    fn level_slot(&self, a: f64) -> Result<usize, SdeError> {
        self.local_levels
            .iter()
            .position(|&l| close(l, a))
            .ok_or(SdeError::UnknownLevel(a))
    }

    fn local_slot(&self, a: f64, eps: f64) -> Result<usize, SdeError> {
        let li = self.level_slot(a)?;
        let bi = self
            .bandwidths
            .iter()
            .position(|&e| close(e, eps))
            .ok_or(SdeError::UnknownBandwidth(eps))?;
        Ok(li * self.bandwidths.len() + bi)
    }

    /// Whole-path `Σ 1(z_i > a)(Δz_i − Δy_i)` at a local-time level.
    pub fn tanaka_integral_at(&self, a: f64) -> Result<f64, SdeError> {
        Ok(self.tanaka_integral[self.level_slot(a)?])
    }

    /// Writes `t,z,y` for every `thin`-th recorded sample.
    pub fn write_csv<W: Write>(&self, thin: usize, mut out: W) -> io::Result<()> {
        writeln!(out, "t,z,y")?;
        for i in (0..self.times.len()).step_by(thin.max(1)) {
            writeln!(
                out,
                "{},{},{}",
                fmt17(self.times[i]),
                fmt17(self.z[i]),
                fmt17(self.y[i])
            )?;
        }
        Ok(())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Online accumulator shared by both simulators.
struct Accumulator<'m> {
    model: &'m MultiLevelModel,
    dt: f64,
    plan: Plan,
    stride: usize,
    sample_stride: u64,
    levels: Vec<f64>,
    bandwidths: Vec<f64>,
    thetas: Vec<f64>,
    edges: Vec<f64>,
    local_total: Vec<f64>,
    tanaka: Vec<f64>,
    batches: Vec<BatchTotals>,
    hist: Vec<f64>,
    samples: Vec<f64>,
    times: Vec<f64>,
    zs: Vec<f64>,
    ys: Vec<f64>,
    y: f64,
}

impl<'m> Accumulator<'m> {
    fn new(model: &'m MultiLevelModel, opts: &SimOptions, plan: Plan) -> Self {
        let mut levels = vec![0.0];
        levels.extend_from_slice(model.boundaries());
        levels.extend_from_slice(&opts.extra_levels);
        let k = model.levels();
        let n_local = levels.len() * opts.bandwidths.len();
        let hist_bins = opts.histogram_edges.len().saturating_sub(1);
        let mut acc = Self {
            model,
            dt: opts.dt,
            plan,
            stride: opts.record_stride,
            sample_stride: opts.sample_stride as u64,
            levels,
            bandwidths: opts.bandwidths.clone(),
            thetas: opts.thetas.clone(),
            edges: opts.histogram_edges.clone(),
            local_total: vec![0.0; n_local],
            tanaka: Vec::new(),
            batches: (0..opts.batches)
                .map(|_| BatchTotals::zeros(k, n_local, opts.thetas.len()))
                .collect(),
            hist: vec![0.0; hist_bins],
            samples: Vec::new(),
            times: Vec::new(),
            zs: Vec::new(),
            ys: Vec::new(),
            y: 0.0,
        };
        acc.tanaka = vec![0.0; acc.levels.len()];
        if acc.stride > 0 {
            acc.push_record(0, opts.x0);
        }
        acc
    }

    fn push_record(&mut self, i: u64, z: f64) {
        self.times.push(i as f64 * self.dt);
        self.zs.push(z);
        self.ys.push(self.y);
    }

    /// Record the transition `z → z_next` made by step `i` (from `t_i` to `t_{i+1}`).
    #[inline]
    fn observe(&mut self, i: u64, z: f64, z_next: f64, dy: f64) {
        let dt = self.dt;
        let j = self.model.level_index(z);
        let s = self.model.sigmas()[j];
        let qv = s * s * dt;
        let nb = self.bandwidths.len();
        for (li, &a) in self.levels.iter().enumerate() {
            let dist = (z - a).abs();
            for (bi, &e) in self.bandwidths.iter().enumerate() {
                if dist < e {
                    self.local_total[li * nb + bi] += qv;
                }
            }
            if z > a {
                self.tanaka[li] += z_next - z - dy;
            }
        }
        if i >= self.plan.burn_steps {
            let m = i - self.plan.burn_steps;
            let b = ((m / self.plan.batch_len) as usize).min(self.batches.len() - 1);
            let k = self.model.levels();
            let batch = &mut self.batches[b];
            batch.duration += dt;
            batch.regulator += dy;
            batch.level_time[j] += dt;
            for (li, &a) in self.levels.iter().enumerate() {
                let dist = (z - a).abs();
                for (bi, &e) in self.bandwidths.iter().enumerate() {
                    if dist < e {
                        batch.local_occupation[li * nb + bi] += qv;
                    }
                }
            }
            for (ti, &theta) in self.thetas.iter().enumerate() {
                batch.mgf[ti * k + j] += (theta * z).exp() * dt;
            }
            if !self.hist.is_empty() {
                let bin = self
                    .edges
                    .partition_point(|&e| e <= z)
                    .clamp(1, self.hist.len())
                    - 1;
                self.hist[bin] += dt;
            }
            if self.sample_stride > 0 && m % self.sample_stride == 0 {
                self.samples.push(z);
            }
        }
        self.y += dy;
        if self.stride > 0 && (i + 1) % self.stride as u64 == 0 {
            self.push_record(i + 1, z_next);
        }
    }

    fn finish(self, opts: &SimOptions, final_z: f64, crossing: Option<CrossingSummary>) -> PathRecord {
        PathRecord {
            dt: opts.dt,
            horizon: opts.horizon,
            seed: opts.seed,
            path_index: opts.path_index,
            x0: opts.x0,
            steps: self.plan.steps,
            final_z,
            final_y: self.y,
            times: self.times,
            z: self.zs,
            y: self.ys,
            local_levels: self.levels,
            bandwidths: self.bandwidths,
            local_occupation: self.local_total,
            tanaka_integral: self.tanaka,
            burn_in: opts.burn_in,
            thetas: self.thetas,
            batches: self.batches,
            histogram_edges: self.edges,
            histogram_time: self.hist,
            samples: self.samples,
            crossing,
        }
    }
}

/// Simulate one path with the projected Euler scheme.
pub fn simulate_path(model: &MultiLevelModel, opts: &SimOptions) -> Result<PathRecord, SdeError> {
    let plan = opts.validate()?;
    let mut rng = stream(opts.seed, Purpose::Path, opts.path_index, 0);
    let mut acc = Accumulator::new(model, opts, plan);
    let step = match opts.reflection {
        Reflection::Projection => euler_step,
        Reflection::Mirror => mirror_step,
    };
    let mut z = opts.x0;
    for i in 0..plan.steps {
        let g: f64 = rng.sample(StandardNormal);
        let (z_next, dy) = step(z, model, opts.dt, g);
        acc.observe(i, z, z_next, dy);
        z = z_next;
    }
    Ok(acc.finish(opts, z, None))
}

/// Default switch levels `(ℓ_1/3, 2ℓ_1/3)`; `(1/3, 2/3)` for a single level.
pub fn default_switch_levels(model: &MultiLevelModel) -> (f64, f64) {
    let l1 = model.boundaries().first().copied().unwrap_or(1.0);
    (l1 / 3.0, 2.0 * l1 / 3.0)
}

/// Simulate one path by alternating crossing periods.
///
/// Up-crossing periods reflect a free Brownian path with the level-1
/// coefficients through the Skorokhod map until the state reaches `d`;
/// down-crossing periods run the unreflected state-dependent Euler scheme
/// until a proposal falls below `c`. Each period draws from its own stream.
pub fn simulate_crossing_construction(
    model: &MultiLevelModel,
    opts: &SimOptions,
    c: f64,
    d: f64,
) -> Result<PathRecord, SdeError> {
    let upper = model.boundaries().first().copied().unwrap_or(f64::INFINITY);
    if !(c > 0.0 && c < d && d < upper) {
        return Err(SdeError::InvalidSwitchLevels { c, d, upper });
    }
    let plan = opts.validate()?;
    let dt = opts.dt;
    let (s1, b1) = (model.sigmas()[0], model.drifts()[0]);
    let sq = dt.sqrt();
    let mut acc = Accumulator::new(model, opts, plan);

    let mut segment = 0u64;
    let new_stream = |segment: u64| stream(opts.seed, Purpose::Crossing, opts.path_index, segment);
    let mut rng: ChaCha8Rng = new_stream(segment);
    let first_phase = if opts.x0 < d {
        Phase::UpCrossing
    } else {
        Phase::DownCrossing
    };
    let mut phase = first_phase;
    let (mut up, mut down) = match phase {
        Phase::UpCrossing => (1u64, 0u64),
        Phase::DownCrossing => (0, 1),
    };
    // Free path and running reflection sup(−x)⁺ of the current up-crossing period.
    let mut free = opts.x0;
    let mut push = 0.0f64;
    let mut z = opts.x0;

    for i in 0..plan.steps {
        let g: f64 = rng.sample(StandardNormal);
        let (z_next, dy);
        match phase {
            Phase::UpCrossing => {
                free += b1 * dt + s1 * sq * g;
                let new_push = push.max(-free);
                dy = new_push - push;
                push = new_push;
                z_next = free + push;
                if z_next >= d {
                    phase = Phase::DownCrossing;
                    down += 1;
                    segment += 1;
                    rng = new_stream(segment);
                }
            }
            Phase::DownCrossing => {
                let (s, b) = model.coefficients_unchecked(z);
                let p = z + b * dt + s * sq * g;
                if p < c {
                    phase = Phase::UpCrossing;
                    up += 1;
                    segment += 1;
                    rng = new_stream(segment);
                    free = p;
                    push = (-p).max(0.0);
                    dy = push;
                    z_next = free + push;
                } else {
                    dy = 0.0;
                    z_next = p;
                }
            }
        }
        acc.observe(i, z, z_next, dy);
        z = z_next;
    }
    let summary = CrossingSummary {
        c,
        d,
        first_phase,
        up_segments: up,
        down_segments: down,
    };
    Ok(acc.finish(opts, z, Some(summary)))
}

/// Occupation-window local-time estimate `(1/2ε) Σ 1(|z_i − a| < ε) σ²(z_i) dt`
/// over the whole path.
pub fn local_time_estimate(path: &PathRecord, a: f64, eps: f64) -> Result<f64, SdeError> {
    let slot = path.local_slot(a, eps)?;
    Ok(path.local_occupation[slot] / (2.0 * eps))
}

// Ensembles.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeRate {
    pub level: f64,
    pub bandwidth: f64,
    pub rate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
}

/// Pooled post-burn-in statistics of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n_paths: usize,
    pub seed: u64,
    pub horizon: f64,
    pub dt: f64,
    pub burn_in: Option<f64>,
    pub observed_time: f64,
    /// Regulator growth per unit time.
    pub y_rate: Estimate,
    pub level_fractions: Vec<Estimate>,
    pub local_time: Vec<LocalTimeRate>,
    pub thetas: Vec<f64>,
    /// Time-average of `e^{θZ} 1(Z ∈ S_j)`, indexed `[theta][level]`.
    pub partial_mgf: Vec<Vec<Estimate>>,
    pub histogram: Option<Histogram>,
    /// Batch totals pooled over paths (the replicates behind every stderr).
    pub batches: Vec<BatchTotals>,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

/// Ratio estimate `Σ num / Σ duration` with a batch-means standard error.
pub fn batch_ratio<F: Fn(&BatchTotals) -> f64>(batches: &[BatchTotals], num: F) -> Estimate {
    let total: f64 = batches.iter().map(&num).sum();
    let time: f64 = batches.iter().map(|b| b.duration).sum();
    let value = total / time;
    let n = batches.len();
    let stderr = if n > 1 {
        let var = batches
            .iter()
            .map(|b| (num(b) / b.duration - value).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        f64::NAN
    };
    Estimate { value, stderr }
}

impl EnsembleStats {
    pub fn from_paths(model: &MultiLevelModel, paths: &[PathRecord]) -> Result<Self, SdeError> {
        let first = paths
            .first()
            .ok_or_else(|| SdeError::InvalidOption("empty ensemble".into()))?;
        let batches: Vec<BatchTotals> = paths.iter().flat_map(|p| p.batches.iter().cloned()).collect();
        let k = model.levels();
        let nb = first.bandwidths.len();
        let y_rate = batch_ratio(&batches, |b| b.regulator);
        let level_fractions = (0..k)
            .map(|j| batch_ratio(&batches, |b| b.level_time[j]))
            .collect();
        let mut local_time = Vec::new();
        for (li, &level) in first.local_levels.iter().enumerate() {
            for (bi, &eps) in first.bandwidths.iter().enumerate() {
                let slot = li * nb + bi;
                let rate = batch_ratio(&batches, |b| b.local_occupation[slot] / (2.0 * eps));
                local_time.push(LocalTimeRate {
                    level,
                    bandwidth: eps,
                    rate,
                });
            }
        }
        let partial_mgf = (0..first.thetas.len())
            .map(|ti| {
                (0..k)
                    .map(|j| batch_ratio(&batches, |b| b.mgf[ti * k + j]))
                    .collect()
            })
            .collect();
        let histogram = if first.histogram_time.is_empty() {
            None
        } else {
            let mut time = vec![0.0; first.histogram_time.len()];
            for p in paths {
                for (acc, t) in time.iter_mut().zip(&p.histogram_time) {
                    *acc += t;
                }
            }
            let total: f64 = time.iter().sum();
            Some(Histogram {
                edges: first.histogram_edges.clone(),
                masses: time.iter().map(|t| t / total).collect(),
            })
        };
        let observed_time = batches.iter().map(|b| b.duration).sum();
        Ok(Self {
            n_paths: paths.len(),
            seed: first.seed,
            horizon: first.horizon,
            dt: first.dt,
            burn_in: first.burn_in,
            observed_time,
            y_rate,
            level_fractions,
            local_time,
            thetas: first.thetas.clone(),
            partial_mgf,
            histogram,
            batches,
            samples: paths.iter().flat_map(|p| p.samples.iter().copied()).collect(),
        })
    }

    pub fn local_time_rate(&self, level: f64, eps: f64) -> Result<Estimate, SdeError> {
        if !self.local_time.iter().any(|r| close(r.level, level)) {
            return Err(SdeError::UnknownLevel(level));
        }
        self.local_time
            .iter()
            .find(|r| close(r.level, level) && close(r.bandwidth, eps))
            .map(|r| r.rate)
            .ok_or(SdeError::UnknownBandwidth(eps))
    }

    /// JSON summary: `n_paths`, `y_rate`, `local_time_rates{level: value}` at
    /// the first bandwidth, `histogram{edges, masses}`, `stderr{...}`.
    pub fn to_json(&self) -> serde_json::Value {
        let eps = self.local_time.first().map(|r| r.bandwidth);
        let mut rates = BTreeMap::new();
        let mut rate_se = BTreeMap::new();
        for r in self.local_time.iter().filter(|r| Some(r.bandwidth) == eps) {
            rates.insert(r.level.to_string(), r.rate.value);
            rate_se.insert(r.level.to_string(), r.rate.stderr);
        }
        serde_json::json!({
            "n_paths": self.n_paths,
            "seed": self.seed,
            "horizon": self.horizon,
            "dt": self.dt,
            "burn_in": self.burn_in,
            "observed_time": self.observed_time,
            "y_rate": self.y_rate.value,
            "local_time_bandwidth": eps,
            "local_time_rates": rates,
            "level_fractions": self.level_fractions.iter().map(|e| e.value).collect::<Vec<_>>(),
            "thetas": self.thetas,
            "partial_mgf": self.partial_mgf.iter()
                .map(|row| row.iter().map(|e| e.value).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
            "histogram": self.histogram,
            "stderr": {
                "y_rate": self.y_rate.stderr,
                "local_time_rates": rate_se,
                "level_fractions": self.level_fractions.iter().map(|e| e.stderr).collect::<Vec<_>>(),
                "partial_mgf": self.partial_mgf.iter()
                    .map(|row| row.iter().map(|e| e.stderr).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
            },
        })
    }
}

/// Which simulator an ensemble uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum Simulator {
    Euler,
    Crossing { c: f64, d: f64 },
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, SdeError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SdeError::InvalidOption(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Simulate `n_paths` independent paths (path indices `0..n_paths`) and pool
/// them. `threads = 0` uses the machine default; results do not depend on it.
pub fn run_ensemble(
    model: &MultiLevelModel,
    opts: &SimOptions,
    simulator: Simulator,
    n_paths: usize,
    threads: usize,
) -> Result<(EnsembleStats, Vec<PathRecord>), SdeError> {
    if n_paths == 0 {
        return Err(SdeError::InvalidOption("n_paths must be positive".into()));
    }
    let paths: Result<Vec<PathRecord>, SdeError> = with_threads(threads, || {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|p| {
                let mut o = opts.clone();
                o.path_index = opts.path_index + p;
                match simulator {
                    Simulator::Euler => simulate_path(model, &o),
                    Simulator::Crossing { c, d } => simulate_crossing_construction(model, &o, c, d),
                }
            })
            .collect()
    })?;
    let paths = paths?;
    let stats = EnsembleStats::from_paths(model, &paths)?;
    Ok((stats, paths))
}

// First passage times.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monitoring {
    /// Grid check plus a Brownian-bridge crossing test between grid points.
    Bridge,
    /// Grid points only.
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingTimeConfig {
    pub dt: f64,
    pub t_cap: f64,
    pub monitoring: Monitoring,
}

impl Default for HittingTimeConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_cap: 1e6,
            monitoring: Monitoring::Bridge,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HittingTime {
    Hit(f64),
    Censored(f64),
}

impl HittingTime {
    pub fn time(self) -> f64 {
        match self {
            HittingTime::Hit(t) | HittingTime::Censored(t) => t,
        }
    }

    pub fn is_censored(self) -> bool {
        matches!(self, HittingTime::Censored(_))
    }
}

/// First time the Euler path from `x0` reaches `a` (replicate 0).
pub fn hitting_time(
    model: &MultiLevelModel,
    x0: f64,
    a: f64,
    seed: u64,
    cfg: &HittingTimeConfig,
) -> Result<HittingTime, SdeError> {
    hitting_time_replicate(model, x0, a, seed, 0, cfg)
}

pub fn hitting_time_replicate(
    model: &MultiLevelModel,
    x0: f64,
    a: f64,
    seed: u64,
    rep: u64,
    cfg: &HittingTimeConfig,
) -> Result<HittingTime, SdeError> {
    if !(x0 >= 0.0 && x0.is_finite()) {
        return Err(SdeError::NegativeState(x0));
    }
    if !(a >= 0.0 && a.is_finite()) {
        return Err(SdeError::NegativeState(a));
    }
    if !(cfg.dt > 0.0 && cfg.t_cap > 0.0 && cfg.dt.is_finite() && cfg.t_cap.is_finite()) {
        return Err(SdeError::InvalidHorizon {
            horizon: cfg.t_cap,
            dt: cfg.dt,
        });
    }
    if x0 == a {
        return Ok(HittingTime::Hit(0.0));
    }
    let above = x0 > a;
    let dt = cfg.dt;
    let max_steps = (cfg.t_cap / dt).ceil() as u64;
    let mut rng = stream(seed, Purpose::HittingTime, rep, 0);
    let mut z = x0;
    for i in 0..max_steps {
        let g: f64 = rng.sample(StandardNormal);
        let (z_next, _) = euler_step(z, model, dt, g);
        let t = i as f64 * dt;
        let crossed = if above { z_next <= a } else { z_next >= a };
        if crossed {
            let frac = ((z - a) / (z - z_next)).clamp(0.0, 1.0);
            return Ok(HittingTime::Hit(t + frac * dt));
        }
        if cfg.monitoring == Monitoring::Bridge {
            let (s, _) = model.coefficients_unchecked(z);
            let p = (-2.0 * (z - a) * (z_next - a) / (s * s * dt)).exp();
            let u: f64 = rng.random();
            if u < p {
                return Ok(HittingTime::Hit(t + 0.5 * dt));
            }
        }
        z = z_next;
    }
    Ok(HittingTime::Censored(max_steps as f64 * dt))
}

/// Replicates `0..n` of [`hitting_time_replicate`].
pub fn hitting_times(
    model: &MultiLevelModel,
    x0: f64,
    a: f64,
    seed: u64,
    n: usize,
    cfg: &HittingTimeConfig,
    threads: usize,
) -> Result<Vec<HittingTime>, SdeError> {
    with_threads(threads, || {
        (0..n as u64)
            .into_par_iter()
            .map(|r| hitting_time_replicate(model, x0, a, seed, r, cfg))
            .collect()
    })?
}

#[cfg(test)]
mod tests;
