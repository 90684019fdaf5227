//! Verdicts comparing simulation output with the analytic law and with the
//! stationary identities (regulator/local-time relations, the basic adjoint
//! relation, first-passage means, Tanaka's formula).

use crate::analytic::{AnalyticError, StationaryLaw};
use crate::model::{LevelSpec, MultiLevelModel};
use crate::numeric::{integrate_to_infinity, QuadratureOptions};
use crate::sde::{
    self, batch_ratio, default_switch_levels, local_time_estimate, run_ensemble, EnsembleStats,
    HittingTimeConfig, PathRecord, Reflection, SdeError, SimOptions, Simulator,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("need at least {required} samples, got {found}")]
    TooFewSamples { found: usize, required: usize },
    #[error("ensemble has no burn-in metadata; run with a burn-in period")]
    NotStationaryRun,
    #[error("ensemble lacks accumulators for {0}")]
    MissingAccumulators(String),
    #[error("hitting level {a} lies below the top-level boundary {lower}, or the start {x0} lies below it")]
    RegimeViolation { x0: f64, a: f64, lower: f64 },
    #[error("theta {0} outside [-5, 0)")]
    InvalidTheta(f64),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Sde(#[from] SdeError),
}

pub const MIN_KS_SAMPLES: usize = 100;

/// Exact one-sample KS distance `sup_x |F̂(x) − F(x)|`.
pub fn ks_distance(samples: &[f64], law: &StationaryLaw) -> Result<f64, DiagnosticsError> {
    if samples.len() < MIN_KS_SAMPLES {
        return Err(DiagnosticsError::TooFewSamples {
            found: samples.len(),
            required: MIN_KS_SAMPLES,
        });
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = law.cdf_at(x)?;
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(d)
}

/// KS distance of a binned occupation measure, evaluated at the bin edges.
/// The outer bins are treated as open-ended.
pub fn ks_distance_histogram(hist: &sde::Histogram, law: &StationaryLaw) -> Result<f64, DiagnosticsError> {
    let mut cum = 0.0;
    let mut d: f64 = 0.0;
    let inner = &hist.edges[1..hist.edges.len() - 1];
    for (&edge, &mass) in inner.iter().zip(&hist.masses) {
        cum += mass;
        d = d.max((cum - law.cdf_at(edge)?).abs());
    }
    Ok(d)
}

/// Kolmogorov survival function `P(K > λ)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value of a KS statistic with effective sample size `n_eff`
/// (Stephens' small-sample correction).
pub fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_survival((s + 0.12 + 0.11 / s) * d)
}

/// Critical value `c(α)·√((n+m)/(nm))` of the two-sample test.
pub fn ks_two_sample_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleKs {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub m: usize,
}

impl TwoSampleKs {
    pub fn accepts(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TwoSampleKs, DiagnosticsError> {
    for s in [a, b] {
        if s.len() < MIN_KS_SAMPLES {
            return Err(DiagnosticsError::TooFewSamples {
                found: s.len(),
                required: MIN_KS_SAMPLES,
            });
        }
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (n, m) = (xa.len(), xb.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = xa[i].min(xb[j]);
        while i < n && xa[i] <= x {
            i += 1;
        }
        while j < m && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n * m) as f64 / (n + m) as f64;
    Ok(TwoSampleKs {
        statistic: d,
        p_value: ks_p_value(d, n_eff),
        n,
        m,
    })
}

// Basic adjoint relation.

/// `½ Σ_j σ_j² (β_j + θ) φ_j(θ) + E[Y(1)]` with the analytic partial mgfs
/// and regulator rate.
pub fn bar_residual_analytic(law: &StationaryLaw, theta: f64) -> Result<f64, DiagnosticsError> {
    let m = law.model();
    let mut r = law.regulator_rate();
    for j in 0..m.levels() {
        let s = m.sigmas()[j];
        r += 0.5 * s * s * (m.betas()[j] + theta) * law.partial_mgf(j, theta)?;
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarResidual {
    pub theta: f64,
    pub residual: f64,
    pub stderr: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Monte Carlo residual of the adjoint relation at each `θ`, with a
/// batch-means standard error. Passes iff `|r| < 3·stderr + 0.01·|Ŷ_rate|`.
pub fn check_bar_identity(
    stats: &EnsembleStats,
    model: &MultiLevelModel,
    thetas: &[f64],
) -> Result<Vec<BarResidual>, DiagnosticsError> {
    if stats.burn_in.is_none() {
        return Err(DiagnosticsError::NotStationaryRun);
    }
    let k = model.levels();
    let y = stats.y_rate.value;
    thetas
        .iter()
        .map(|&theta| {
            if !(-5.0..0.0).contains(&theta) {
                return Err(DiagnosticsError::InvalidTheta(theta));
            }
            let ti = stats
                .thetas
                .iter()
                .position(|&t| t == theta)
                .ok_or_else(|| DiagnosticsError::MissingAccumulators(format!("theta {theta}")))?;
            let est = batch_ratio(&stats.batches, |b| {
                let mut r = b.regulator;
                for j in 0..k {
                    let s = model.sigmas()[j];
                    r += 0.5 * s * s * (model.betas()[j] + theta) * b.mgf[ti * k + j];
                }
                r
            });
            let tolerance = 3.0 * est.stderr + 0.01 * y.abs();
            Ok(BarResidual {
                theta,
                residual: est.value,
                stderr: est.stderr,
                tolerance,
                passed: est.value.abs() < tolerance,
            })
        })
        .collect()
}

// Local-time identities.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    /// Relative residual.
    pub residual: f64,
    pub stderr: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl IdentityCheck {
    fn new(name: String, residual: f64, stderr: f64, tolerance: f64) -> Self {
        Self {
            name,
            residual,
            stderr,
            tolerance,
            passed: residual.abs() < tolerance,
        }
    }
}

pub const LOCAL_TIME_TOLERANCE: f64 = 0.05;

/// Relative residuals of the regulator/local-time relations at bandwidth `eps`:
/// `2Y = e^{−β_1ℓ_1} L_{ℓ_1}`, `L_{ℓ_{j−1}} = e^{−β_j(ℓ_j−ℓ_{j−1})} L_{ℓ_j}`,
/// `L_{ℓ_j} = 2Y η_j`, and `1/(2Y) = C/2`.
pub fn check_local_time_identities(
    stats: &EnsembleStats,
    law: &StationaryLaw,
    eps: f64,
    tolerance: f64,
) -> Result<Vec<IdentityCheck>, DiagnosticsError> {
    let model = law.model();
    let bounds = model.boundaries();
    // Batch slot of the local-time accumulator at each interior boundary.
    let mut slots = Vec::with_capacity(bounds.len());
    for &l in bounds {
        let pos = stats
            .local_time
            .iter()
            .position(|r| r.level == l && r.bandwidth == eps)
            .ok_or_else(|| {
                DiagnosticsError::MissingAccumulators(format!("level {l}, bandwidth {eps}"))
            })?;
        slots.push(pos);
    }
    let lt = |b: &sde::BatchTotals, j: usize| b.local_occupation[slots[j]] / (2.0 * eps);
    let y = stats.y_rate.value;
    let betas = model.betas();
    let log_etas = model.log_etas();
    let mut checks = Vec::new();

    if !bounds.is_empty() {
        let c = (-betas[0] * bounds[0]).exp();
        let est = batch_ratio(&stats.batches, |b| 2.0 * b.regulator - c * lt(b, 0));
        checks.push(IdentityCheck::new(
            format!("regulator_vs_local_time[l={}]", bounds[0]),
            est.value / (2.0 * y),
            est.stderr / (2.0 * y),
            tolerance,
        ));
    }
    for j in 1..bounds.len() {
        let c = (-betas[j] * (bounds[j] - bounds[j - 1])).exp();
        let lower = stats.local_time[slots[j - 1]].rate.value;
        let est = batch_ratio(&stats.batches, |b| lt(b, j - 1) - c * lt(b, j));
        checks.push(IdentityCheck::new(
            format!("adjacent_local_times[l={},{}]", bounds[j - 1], bounds[j]),
            est.value / lower,
            est.stderr / lower,
            tolerance,
        ));
    }
    for (j, &l) in bounds.iter().enumerate() {
        let eta = log_etas[j + 1].exp();
        let est = batch_ratio(&stats.batches, |b| lt(b, j) - 2.0 * eta * b.regulator);
        checks.push(IdentityCheck::new(
            format!("local_time_cascade[l={l}]"),
            est.value / (2.0 * eta * y),
            est.stderr / (2.0 * eta * y),
            tolerance,
        ));
    }
    // 1/(2Y) = Σ (η_i − η_{i−1})/(σ_i² β_i) = C/2, i.e. 2Y·C/2 − 1 = 0.
    let half_c = 0.5 * law.log_norm().exp();
    checks.push(IdentityCheck::new(
        "normalization".into(),
        2.0 * y * half_c - 1.0,
        2.0 * half_c * stats.y_rate.stderr,
        tolerance,
    ));
    Ok(checks)
}

// First passage.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingCheck {
    pub x0: f64,
    pub a: f64,
    pub n_reps: usize,
    pub mean: f64,
    pub stderr: f64,
    pub expected: f64,
    /// `(mean − expected)/expected`; 0 when `x0 = a`.
    pub relative_error: f64,
    pub censored: usize,
}

/// Monte Carlo mean of `τ_a` from `x0` in the top level versus
/// `(x0 − a)/(−b_k)`.
pub fn check_hitting_time_formula(
    model: &MultiLevelModel,
    x0: f64,
    a: f64,
    n_reps: usize,
    seed: u64,
    cfg: &HittingTimeConfig,
    threads: usize,
) -> Result<HittingCheck, DiagnosticsError> {
    let lower = model.top_boundary();
    if a < lower || x0 < a {
        return Err(DiagnosticsError::RegimeViolation { x0, a, lower });
    }
    let b = model.top_drift();
    if b >= 0.0 {
        return Err(AnalyticError::Unstable(model.stability()).into());
    }
    if x0 == a {
        return Ok(HittingCheck {
            x0,
            a,
            n_reps,
            mean: 0.0,
            stderr: 0.0,
            expected: 0.0,
            relative_error: 0.0,
            censored: 0,
        });
    }
    let times = sde::hitting_times(model, x0, a, seed, n_reps, cfg, threads)?;
    let n = times.len() as f64;
    let mean = times.iter().map(|t| t.time()).sum::<f64>() / n;
    let var = times.iter().map(|t| (t.time() - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let expected = (x0 - a) / -b;
    Ok(HittingCheck {
        x0,
        a,
        n_reps,
        mean,
        stderr: (var / n).sqrt(),
        expected,
        relative_error: (mean - expected) / expected,
        censored: times.iter().filter(|t| t.is_censored()).count(),
    })
}

// Tanaka.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TanakaResidual {
    /// `(Z(T) − a)⁺`.
    pub lhs: f64,
    /// `(Z(0) − a)⁺ + Σ 1(Z > a) dX + ½ L̂_a(T)`.
    pub rhs: f64,
    pub residual: f64,
}

pub fn tanaka_residual(path: &PathRecord, a: f64, eps: f64) -> Result<TanakaResidual, DiagnosticsError> {
    let integral = path.tanaka_integral_at(a)?;
    let local = local_time_estimate(path, a, eps)?;
    let lhs = (path.final_z - a).max(0.0);
    let rhs = (path.x0 - a).max(0.0) + integral + 0.5 * local;
    Ok(TanakaResidual {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

// Report.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// `None` when the statistic is not finite.
    pub statistic: Option<f64>,
    pub tolerance: f64,
    pub stderr: Option<f64>,
    pub passed: bool,
}

impl Check {
    /// Passes iff `|statistic| < tolerance`.
    pub fn within(name: impl Into<String>, statistic: f64, tolerance: f64, stderr: Option<f64>) -> Self {
        let ok = statistic.is_finite();
        Self {
            name: name.into(),
            statistic: ok.then_some(statistic),
            tolerance,
            stderr: stderr.filter(|s| s.is_finite()),
            passed: ok && statistic.abs() < tolerance,
        }
    }

    /// Passes iff `statistic > tolerance` (p-values).
    pub fn above(name: impl Into<String>, statistic: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            statistic: statistic.is_finite().then_some(statistic),
            tolerance,
            stderr: None,
            passed: statistic > tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub model_hash: String,
    pub model: LevelSpec,
    pub seed: u64,
    pub horizon: f64,
    pub dt: f64,
    pub burn_in: f64,
    pub n_paths: usize,
    pub hitting_reps: usize,
    pub ks_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub metadata: RunMetadata,
    pub checks: Vec<Check>,
}

impl DiagnosticsReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// SHA-256 of the model's canonical JSON, hex encoded.
pub fn model_hash(model: &MultiLevelModel) -> String {
    let bytes = serde_json::to_vec(model.spec()).expect("spec serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Budget of the verification battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyBudget {
    pub seed: u64,
    pub horizon: f64,
    pub dt: f64,
    /// Fraction of the horizon discarded as burn-in.
    pub burn_in_fraction: f64,
    pub n_paths: usize,
    pub bandwidth: f64,
    pub thetas: Vec<f64>,
    pub hitting_reps: usize,
    /// Samples per simulator in the two-sample comparison.
    pub ks_samples: usize,
    /// Time between retained samples in the two-sample comparison.
    pub ks_spacing: f64,
    /// Burn-in of each path in the two-sample comparison.
    pub ks_burn_in: f64,
    pub threads: usize,
}

impl Default for VerifyBudget {
    fn default() -> Self {
        Self {
            seed: crate::DEFAULT_SEED,
            horizon: 1e4,
            dt: 1e-3,
            burn_in_fraction: 0.1,
            n_paths: 8,
            bandwidth: 0.01,
            thetas: vec![-3.0, -2.0, -1.0, -0.5],
            hitting_reps: 10_000,
            ks_samples: 10_000,
            ks_spacing: 5.0,
            ks_burn_in: 100.0,
            threads: 0,
        }
    }
}

/// Tolerance of analytic-only checks.
pub const ANALYTIC_TOLERANCE: f64 = 1e-10;
/// One-sample KS tolerance for the time-averaged occupation law.
pub const OCCUPATION_KS_TOLERANCE: f64 = 0.02;
/// Absolute tolerance on the occupied fraction of each level.
pub const FRACTION_TOLERANCE: f64 = 0.01;
pub const KS_LEVEL: f64 = 0.01;

/// Run the full battery on a stable model.
pub fn run_verification(model: &MultiLevelModel, budget: &VerifyBudget) -> Result<DiagnosticsReport, DiagnosticsError> {
    let law = StationaryLaw::new(model.clone())?;
    let mut checks = Vec::new();
    analytic_checks(&law, budget, &mut checks)?;

    let burn_in = budget.burn_in_fraction * budget.horizon;
    let mut opts = SimOptions::new(budget.horizon, budget.dt, 0.0, budget.seed);
    opts.burn_in = Some(burn_in);
    opts.bandwidths = vec![budget.bandwidth];
    opts.sample_stride = ((0.01 / budget.dt).round() as usize).max(1);
    let (stats, _) = run_ensemble(model, &opts, Simulator::Euler, budget.n_paths, budget.threads)?;

    let ks = ks_distance(&stats.samples, &law)?;
    checks.push(Check::within("occupation_ks", ks, OCCUPATION_KS_TOLERANCE, None));
    let exact = law.weights();
    for (j, est) in stats.level_fractions.iter().enumerate() {
        checks.push(Check::within(
            format!("level_fraction[{j}]"),
            est.value - exact[j],
            FRACTION_TOLERANCE,
            Some(est.stderr),
        ));
    }
    for c in check_local_time_identities(&stats, &law, budget.bandwidth, LOCAL_TIME_TOLERANCE)? {
        checks.push(Check::within(c.name, c.residual, c.tolerance, Some(c.stderr)));
    }

    // The adjoint relation is checked on mirror-reflected paths: projection
    // leaves an O(√dt) residual that the 1% band cannot absorb.
    let mut mirror = opts.clone();
    mirror.reflection = Reflection::Mirror;
    mirror.bandwidths.clear();
    mirror.sample_stride = 0;
    mirror.thetas = budget.thetas.clone();
    let (mstats, _) = run_ensemble(model, &mirror, Simulator::Euler, budget.n_paths, budget.threads)?;
    for r in check_bar_identity(&mstats, model, &budget.thetas)? {
        checks.push(Check {
            name: format!("bar_monte_carlo[theta={}]", r.theta),
            statistic: Some(r.residual),
            tolerance: r.tolerance,
            stderr: Some(r.stderr),
            passed: r.passed,
        });
    }

    let two = two_simulator_comparison(model, budget, default_switch_levels(model))?;
    checks.push(Check::above("two_simulator_ks_p_value", two.p_value, KS_LEVEL));

    let a = model.top_boundary() + 1.0;
    let x0 = a - model.top_drift();
    let hit = check_hitting_time_formula(
        model,
        x0,
        a,
        budget.hitting_reps,
        budget.seed,
        &HittingTimeConfig {
            dt: budget.dt,
            ..Default::default()
        },
        budget.threads,
    )?;
    checks.push(Check::within(
        "hitting_time_relative_error",
        hit.relative_error,
        LOCAL_TIME_TOLERANCE,
        Some(hit.stderr / hit.expected),
    ));

    Ok(DiagnosticsReport {
        metadata: RunMetadata {
            model_hash: model_hash(model),
            model: model.spec().clone(),
            seed: budget.seed,
            horizon: budget.horizon,
            dt: budget.dt,
            burn_in,
            n_paths: budget.n_paths,
            hitting_reps: budget.hitting_reps,
            ks_samples: budget.ks_samples,
        },
        checks,
    })
}

fn analytic_checks(law: &StationaryLaw, budget: &VerifyBudget, checks: &mut Vec<Check>) -> Result<(), DiagnosticsError> {
    let model = law.model();
    let weight_sum: f64 = law.weights().iter().sum();
    checks.push(Check::within("weights_sum", weight_sum - 1.0, ANALYTIC_TOLERANCE, None));

    let mut pts = vec![0.0];
    pts.extend_from_slice(model.boundaries());
    let q = integrate_to_infinity(
        |x| law.density_at(x).unwrap_or(f64::NAN),
        &pts,
        QuadratureOptions {
            abs_tol: 1e-14,
            rel_tol: 1e-13,
            max_intervals: 20_000,
        },
    );
    checks.push(Check::within("density_integral", q.value - 1.0, ANALYTIC_TOLERANCE, None));

    if model.levels() == 2 {
        let (d1, _) = crate::analytic::weights_k2_reference(model)?;
        checks.push(Check::within(
            "weights_two_level_reference",
            (law.weights()[0] - d1) / d1,
            ANALYTIC_TOLERANCE,
            None,
        ));
    }
    if model.zero_drift_levels().is_empty() {
        let top = model.top_boundary() + 5.0;
        let mut worst: f64 = 0.0;
        for i in 0..1000 {
            let x = top * i as f64 / 999.0;
            let h = law.density_at(x)?;
            let c = crate::analytic::density_closed_form(model, x)?;
            worst = worst.max((h - c).abs() / h.max(f64::MIN_POSITIVE));
        }
        checks.push(Check::within("closed_form_density", worst, ANALYTIC_TOLERANCE, None));
    }
    let mut thetas = budget.thetas.clone();
    thetas.push(0.0);
    for theta in thetas {
        let r = bar_residual_analytic(law, theta)?;
        checks.push(Check::within(
            format!("bar_analytic[theta={theta}]"),
            r,
            ANALYTIC_TOLERANCE,
            None,
        ));
    }
    Ok(())
}

/// Two-sample KS between decimated Euler and crossing-construction samples,
/// `budget.ks_samples` each, spaced `budget.ks_spacing` apart after burn-in.
pub fn two_simulator_comparison(
    model: &MultiLevelModel,
    budget: &VerifyBudget,
    (c, d): (f64, f64),
) -> Result<TwoSampleKs, DiagnosticsError> {
    let (euler, crossing) = paired_samples(model, budget, (c, d))?;
    ks_two_sample(&euler, &crossing)
}

/// Decimated post-burn-in samples from both simulators.
pub fn paired_samples(
    model: &MultiLevelModel,
    budget: &VerifyBudget,
    (c, d): (f64, f64),
) -> Result<(Vec<f64>, Vec<f64>), DiagnosticsError> {
    let stride = (budget.ks_spacing / budget.dt).round().max(1.0) as usize;
    let per_path = budget.ks_samples.div_ceil(budget.n_paths.max(1));
    let burn = budget.ks_burn_in;
    let horizon = burn + per_path as f64 * stride as f64 * budget.dt;
    let mut opts = SimOptions::new(horizon, budget.dt, 0.0, budget.seed);
    opts.burn_in = Some(burn);
    opts.sample_stride = stride;
    opts.batches = 1;
    let collect = |sim| -> Result<Vec<f64>, DiagnosticsError> {
        let (stats, _) = run_ensemble(model, &opts, sim, budget.n_paths.max(1), budget.threads)?;
        let mut s = stats.samples;
        s.truncate(budget.ks_samples);
        Ok(s)
    };
    Ok((collect(Simulator::Euler)?, collect(Simulator::Crossing { c, d })?))
}
