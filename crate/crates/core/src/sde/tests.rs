use super::*;
use crate::model::{build_model, LevelSpec};
use proptest::prelude::*;

fn model(l: &[f64], s: &[f64], b: &[f64]) -> MultiLevelModel {
    build_model(LevelSpec::new(l.to_vec(), s.to_vec(), b.to_vec())).unwrap()
}

fn m1() -> MultiLevelModel {
    model(&[1.0], &[1.0, 1.0], &[1.0, -1.0])
}

fn mflat() -> MultiLevelModel {
    model(&[1.0], &[1.0, 1.0], &[-1.0, -1.0])
}

#[test]
fn euler_step_examples() {
    let (z, dy) = euler_step(5.0, &mflat(), 0.01, 0.0);
    assert!((z - 4.99).abs() < 1e-15 && dy == 0.0);

    let single = model(&[], &[1.0], &[-1.0]);
    let (z, dy) = euler_step(0.001, &single, 0.01, 0.0);
    assert_eq!(z, 0.0);
    assert!((dy - 0.009).abs() < 1e-15);

    // At the boundary itself the upper level's coefficients apply.
    let (z, _) = euler_step(1.0, &m1(), 0.01, 0.0);
    assert!((z - 0.99).abs() < 1e-15);
    let (z, _) = euler_step(1.0 - 1e-12, &m1(), 0.01, 0.0);
    assert!(z > 1.0);
}

#[test]
fn mirror_step_reflects_overshoot() {
    let single = model(&[], &[1.0], &[-1.0]);
    let (z, dy) = mirror_step(0.001, &single, 0.01, 0.0);
    assert!((z - 0.009).abs() < 1e-15);
    assert!((dy - 0.018).abs() < 1e-15);
    assert_eq!(mirror_step(2.0, &single, 0.01, 0.0), euler_step(2.0, &single, 0.01, 0.0));
}

#[test]
fn mflat_time_average() {
    let mut o = SimOptions::new(100.0, 1e-3, 0.0, 1);
    o.record_stride = 1;
    let p = simulate_path(&mflat(), &o).unwrap();
    let late: Vec<f64> = p
        .times
        .iter()
        .zip(&p.z)
        .filter(|(t, _)| **t >= 50.0)
        .map(|(_, z)| *z)
        .collect();
    let avg = late.iter().sum::<f64>() / late.len() as f64;
    assert!((avg - 0.5).abs() < 0.05, "time average {avg}");
}

#[test]
fn m1_fraction_below_boundary() {
    let o = SimOptions::new(1e4, 1e-3, 0.0, 2);
    let p = simulate_path(&m1(), &o).unwrap();
    let below: f64 = p.batches.iter().map(|b| b.level_time[0]).sum::<f64>()
        / p.batches.iter().map(|b| b.duration).sum::<f64>();
    assert!((below - 0.4637).abs() < 0.01, "fraction {below}");
}

#[test]
fn horizon_validation() {
    let err = simulate_path(&m1(), &SimOptions::new(1.0, 2.0, 0.0, 1)).unwrap_err();
    assert_eq!(
        err,
        SdeError::InvalidHorizon {
            horizon: 1.0,
            dt: 2.0
        }
    );
    assert!(matches!(
        simulate_path(&m1(), &SimOptions::new(-1.0, 0.1, 0.0, 1)),
        Err(SdeError::InvalidHorizon { .. })
    ));
    assert!(matches!(
        simulate_path(&m1(), &SimOptions::new(1.0, 0.1, -0.5, 1)),
        Err(SdeError::NegativeState(_))
    ));
    let mut o = SimOptions::new(1.0, 0.1, 0.0, 1);
    o.batches = 50;
    assert!(matches!(simulate_path(&m1(), &o), Err(SdeError::InvalidOption(_))));
}

fn short_run(x0: f64) -> SimOptions {
    let mut o = SimOptions::new(50.0, 1e-3, x0, 9);
    o.record_stride = 1;
    o
}

fn assert_path_invariants(p: &PathRecord) {
    assert!(p.z.iter().all(|&z| z >= 0.0));
    assert!(p.y.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(p.y[0], 0.0);
    for i in 0..p.z.len() - 1 {
        if p.y[i + 1] > p.y[i] {
            assert_eq!(p.z[i + 1], 0.0, "regulator moved at step {i} away from 0");
        }
    }
}

#[test]
fn nonnegativity_and_complementarity() {
    assert_path_invariants(&simulate_path(&m1(), &short_run(0.0)).unwrap());
    let (c, d) = default_switch_levels(&m1());
    for x0 in [0.0, 0.5, 2.0] {
        assert_path_invariants(&simulate_crossing_construction(&m1(), &short_run(x0), c, d).unwrap());
    }
}

#[test]
fn mirror_paths_stay_nonnegative() {
    let mut o = short_run(0.0);
    o.reflection = Reflection::Mirror;
    let p = simulate_path(&mflat(), &o).unwrap();
    assert!(p.z.iter().all(|&z| z >= 0.0));
    assert!(p.y.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn simulations_are_reproducible() {
    let o = short_run(0.3);
    assert_eq!(simulate_path(&m1(), &o).unwrap(), simulate_path(&m1(), &o).unwrap());
    let a = simulate_crossing_construction(&m1(), &o, 0.2, 0.6).unwrap();
    assert_eq!(a, simulate_crossing_construction(&m1(), &o, 0.2, 0.6).unwrap());
    let mut other = o.clone();
    other.seed += 1;
    assert_ne!(simulate_path(&m1(), &o).unwrap().z, simulate_path(&m1(), &other).unwrap().z);
}

#[test]
fn ensemble_is_independent_of_thread_count() {
    let mut o = SimOptions::new(20.0, 1e-2, 0.0, 4);
    o.bandwidths = vec![0.05];
    o.thetas = vec![-1.0];
    let (a, _) = run_ensemble(&m1(), &o, Simulator::Euler, 6, 1).unwrap();
    let (b, _) = run_ensemble(&m1(), &o, Simulator::Euler, 6, 3).unwrap();
    assert_eq!(a, b);
    let (p0, _) = run_ensemble(&m1(), &o, Simulator::Euler, 1, 1).unwrap();
    assert_eq!(p0.batches[..], a.batches[..20]);
}

#[test]
fn crossing_first_phase() {
    let o = SimOptions::new(1.0, 1e-3, 0.5, 3);
    let p = simulate_crossing_construction(&m1(), &o, 1.0 / 3.0, 2.0 / 3.0).unwrap();
    assert_eq!(p.crossing.unwrap().first_phase, Phase::UpCrossing);
    let o = SimOptions::new(1.0, 1e-3, 2.0, 3);
    let p = simulate_crossing_construction(&m1(), &o, 1.0 / 3.0, 2.0 / 3.0).unwrap();
    assert_eq!(p.crossing.unwrap().first_phase, Phase::DownCrossing);
}

#[test]
fn crossing_alternates_phases() {
    let p = simulate_crossing_construction(&m1(), &SimOptions::new(200.0, 1e-3, 0.0, 5), 0.3, 0.7)
        .unwrap();
    let s = p.crossing.unwrap();
    assert!(s.up_segments > 10);
    assert!(s.up_segments == s.down_segments || s.up_segments == s.down_segments + 1);
}

#[test]
fn switch_level_validation() {
    let o = SimOptions::new(1.0, 1e-3, 0.0, 1);
    for (c, d) in [(0.0, 0.5), (0.6, 0.5), (0.2, 1.0), (0.2, 1.5)] {
        assert!(matches!(
            simulate_crossing_construction(&m1(), &o, c, d),
            Err(SdeError::InvalidSwitchLevels { .. })
        ));
    }
    let single = model(&[], &[1.0], &[-1.0]);
    assert!(simulate_crossing_construction(&single, &o, 5.0, 50.0).is_ok());
    assert_eq!(default_switch_levels(&m1()), (1.0 / 3.0, 2.0 / 3.0));
}

#[test]
fn crossing_matches_euler_law() {
    // Same discrete-time law, so level fractions agree within noise.
    let o = SimOptions::new(2e3, 1e-3, 0.0, 6);
    let (e, _) = run_ensemble(&m1(), &o, Simulator::Euler, 2, 0).unwrap();
    let (c, _) = run_ensemble(&m1(), &o, Simulator::Crossing { c: 0.3, d: 0.7 }, 2, 0).unwrap();
    let (fe, fc) = (e.level_fractions[0], c.level_fractions[0]);
    let se = (fe.stderr.powi(2) + fc.stderr.powi(2)).sqrt();
    assert!((fe.value - fc.value).abs() < 4.0 * se, "{fe:?} vs {fc:?}");
}

#[test]
fn local_time_window_misses_distant_level() {
    let mut o = SimOptions::new(0.5, 1e-3, 5.0, 1);
    o.bandwidths = vec![0.01];
    o.burn_in = None;
    let p = simulate_path(&m1(), &o).unwrap();
    assert_eq!(local_time_estimate(&p, 0.0, 0.01).unwrap(), 0.0);
    assert_eq!(
        local_time_estimate(&p, 0.5, 0.01).unwrap_err(),
        SdeError::UnknownLevel(0.5)
    );
    assert_eq!(
        local_time_estimate(&p, 1.0, 0.02).unwrap_err(),
        SdeError::UnknownBandwidth(0.02)
    );
}

#[test]
fn local_time_matches_occupation_density() {
    let mut o = SimOptions::new(1e4, 1e-3, 0.0, 7);
    o.bandwidths = vec![0.01];
    o.extra_levels = vec![0.5];
    let (s, _) = run_ensemble(&mflat(), &o, Simulator::Euler, 1, 0).unwrap();
    let rate = s.local_time_rate(0.5, 0.01).unwrap().value;
    let expect = 2.0 * (-1f64).exp();
    assert!((rate / expect - 1.0).abs() < 0.1, "rate {rate}");
}

#[test]
fn local_time_is_stable_across_bandwidths() {
    let mut o = SimOptions::new(2.5e3, 1e-3, 0.0, 8);
    o.bandwidths = vec![0.02, 0.01, 0.005];
    let (s, _) = run_ensemble(&m1(), &o, Simulator::Euler, 4, 0).unwrap();
    let rates: Vec<Estimate> = o
        .bandwidths
        .iter()
        .map(|&e| s.local_time_rate(1.0, e).unwrap())
        .collect();
    for a in &rates {
        for b in &rates {
            let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
            assert!((a.value - b.value).abs() < 3.0 * se, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn ensemble_summary_invariants() {
    let mut o = SimOptions::new(200.0, 1e-3, 0.0, 10);
    o.histogram_edges = (0..=40).map(|i| i as f64 * 0.1).collect();
    o.bandwidths = vec![0.01];
    let (s, _) = run_ensemble(&m1(), &o, Simulator::Euler, 3, 0).unwrap();
    let h = s.histogram.as_ref().unwrap();
    assert!((h.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(h.edges.len(), h.masses.len() + 1);
    assert!(s.y_rate.stderr > 0.0);
    assert!(s.level_fractions.iter().all(|e| e.stderr > 0.0));
    assert_eq!(s.batches.len(), 60);
    let json = s.to_json();
    for key in ["n_paths", "y_rate", "local_time_rates", "histogram", "stderr"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert!(json["local_time_rates"].get("1").is_some());
}

#[test]
fn path_csv_is_thinned() {
    let mut o = SimOptions::new(1.0, 0.1, 0.2, 1);
    o.record_stride = 1;
    o.batches = 1;
    let p = simulate_path(&m1(), &o).unwrap();
    let mut buf = Vec::new();
    p.write_csv(2, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,z,y");
    assert_eq!(lines.len(), 1 + 6);
    assert!(lines[1].starts_with("0.0000000000000000,0.20000000000000001,"));
}

#[test]
fn hitting_time_examples() {
    let cfg = HittingTimeConfig::default();
    assert_eq!(hitting_time(&m1(), 2.0, 2.0, 1, &cfg).unwrap(), HittingTime::Hit(0.0));
    let n = 10_000;
    let times = hitting_times(&m1(), 3.0, 2.0, 11, n, &cfg, 0).unwrap();
    assert!(times.iter().all(|t| !t.is_censored()));
    let mean = times.iter().map(|t| t.time()).sum::<f64>() / n as f64;
    assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
}

#[test]
fn transient_model_reaches_high_level() {
    let tr = model(&[1.0], &[1.0, 1.0], &[1.0, 1.0]);
    let times = hitting_times(&tr, 0.0, 5.0, 3, 200, &HittingTimeConfig::default(), 0).unwrap();
    assert!(times.iter().all(|t| !t.is_censored()));
    let mean = times.iter().map(|t| t.time()).sum::<f64>() / 200.0;
    assert!(mean > 4.0 && mean < 7.0, "mean {mean}");
}

#[test]
fn hitting_time_censoring() {
    let cfg = HittingTimeConfig {
        t_cap: 0.5,
        ..Default::default()
    };
    let t = hitting_time(&m1(), 0.0, 50.0, 1, &cfg).unwrap();
    assert_eq!(t, HittingTime::Censored(0.5));
}

#[test]
fn bridge_monitoring_reduces_first_passage_bias() {
    // Driftless Brownian motion from 0.1 to 0 on a coarse grid: the grid
    // misses crossings between points and overestimates the mean of min(τ, 1).
    let bm = model(&[], &[1.0], &[0.0]);
    let capped_mean = |monitoring| {
        let cfg = HittingTimeConfig {
            dt: 0.01,
            t_cap: 1.0,
            monitoring,
        };
        let t = hitting_times(&bm, 0.1, 0.0, 2, 4000, &cfg, 0).unwrap();
        t.iter().map(|h| h.time()).sum::<f64>() / t.len() as f64
    };
    // E[min(τ, 1)] for τ = first passage of BM over distance 0.1.
    let exact = {
        let a: f64 = 0.1;
        let n = 20_000;
        let h = 1.0 / n as f64;
        // ∫_0^1 P(τ > t) dt with P(τ > t) = erf(a / √(2t)).
        (0..n)
            .map(|i| {
                let t = (i as f64 + 0.5) * h;
                erf(a / (2.0 * t).sqrt()) * h
            })
            .sum::<f64>()
    };
    let grid = capped_mean(Monitoring::Grid);
    let bridge = capped_mean(Monitoring::Bridge);
    assert!((bridge - exact).abs() < (grid - exact).abs(), "{bridge} {grid} {exact}");
    assert!((bridge - exact).abs() < 0.01, "{bridge} vs {exact}");
}

/// Series for erf; beyond 3 the remaining mass (< 3e-5) only matters on a
/// negligible sliver of the integration range.
fn erf(x: f64) -> f64 {
    if x >= 3.0 {
        return 1.0;
    }
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    while term.abs() > 1e-17 * sum.abs() {
        n += 1.0;
        term *= -x * x / n;
        sum += term / (2.0 * n + 1.0);
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

proptest! {
    #[test]
    fn euler_step_is_a_discrete_skorokhod_map(z in 0.0f64..5.0, g in -6.0f64..6.0, dt in 1e-5f64..0.1) {
        let m = m1();
        let (z1, dy) = euler_step(z, &m, dt, g);
        prop_assert!(z1 >= 0.0 && dy >= 0.0);
        prop_assert!(dy == 0.0 || z1 == 0.0);
        let (s, b) = m.coefficients_at(z).unwrap();
        let p = z + b * dt + s * dt.sqrt() * g;
        prop_assert!((z1 - dy - p).abs() < 1e-12);
    }
}
