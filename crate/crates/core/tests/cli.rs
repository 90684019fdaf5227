use mlsrbm::cli::{parse_config, run, ConfigError, EXIT_CONFIG, EXIT_OK};
use mlsrbm::{ModelError, Stability, DEFAULT_SEED};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use tempfile::TempDir;

const M1: &str = r#"
boundaries = [1.0]
sigmas = [1.0, 1.0]
drifts = [1.0, -1.0]

[sample]
n = 200

[simulate]
horizon = 50.0
dt = 0.001
n_paths = 2
histogram_bins = 10
"#;

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mlsrbm"))
}

fn run_args(args: &[&str]) -> i32 {
    let mut argv = vec!["mlsrbm"];
    argv.extend_from_slice(args);
    run(argv)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn parses_valid_toml_and_json() {
    let dir = TempDir::new().unwrap();
    let (model, cfg) = parse_config(&write(&dir, "m1.toml", M1)).unwrap();
    assert_eq!(model.levels(), 2);
    assert_eq!(model.stability(), Stability::Stable);
    assert_eq!(cfg.seed(), DEFAULT_SEED);
    assert_eq!(cfg.sample.n, 200);

    let json = r#"{"boundaries": [1.0], "sigmas": [1.0, 1.0], "drifts": [1.0, -1.0], "seed": 5}"#;
    let (model, cfg) = parse_config(&write(&dir, "m1.json", json)).unwrap();
    assert_eq!(model.levels(), 2);
    assert_eq!(cfg.seed(), 5);
}

#[test]
fn length_mismatch_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "bad.toml", "sigmas = [1.0]\ndrifts = [1.0, -1.0]\n");
    match parse_config(&p) {
        Err(ConfigError::Validation(ModelError::LengthMismatch { .. })) => {}
        other => panic!("expected length mismatch, got {other:?}"),
    }
}

#[test]
fn unknown_key_is_named() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "bad.toml", "sigmas = [1.0]\ndrifts = [-1.0]\nmu = 3\n");
    let err = parse_config(&p).unwrap_err();
    assert!(matches!(err, ConfigError::Parse { .. }));
    assert!(err.to_string().contains("mu"), "{err}");

    let p = write(&dir, "bad2.toml", "sigmas = [1.0]\ndrifts = [-1.0]\n[simulate]\nhorizn = 3.0\n");
    assert!(parse_config(&p).unwrap_err().to_string().contains("horizn"));
}

#[test]
fn missing_file_and_missing_keys() {
    let dir = TempDir::new().unwrap();
    assert!(matches!(
        parse_config(&dir.path().join("absent.toml")),
        Err(ConfigError::FileNotFound(_))
    ));
    let p = write(&dir, "nodrift.toml", "sigmas = [1.0]\n");
    assert!(matches!(parse_config(&p), Err(ConfigError::Missing("drifts"))));
}

#[test]
fn info_reports_weights() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m1.toml", M1);
    let out = bin().args(["info", "-c", s(&cfg)]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# stability: stable"));
    assert_eq!(
        lines.next(),
        Some("level,lower,upper,sigma,drift,beta,log_eta,weight")
    );
    let w: Vec<f64> = lines
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(w.len(), 2);
    assert!((w[0] - 0.4637105582521231).abs() < 1e-12);
    assert!((w[0] + w[1] - 1.0).abs() < 1e-12);
}

#[test]
fn info_on_transient_model_omits_weights() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "t.toml", "boundaries = [1.0]\nsigmas = [1.0, 1.0]\ndrifts = [-1.0, 0.5]\n");
    let out = bin().args(["info", "-c", s(&cfg), "--format", "json"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["stability"], "transient");
    assert!(v["levels"][0]["weight"].is_null());

    let out = bin().args(["density", "-c", s(&cfg)]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn outputs_are_byte_identical_for_a_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m1.toml", M1);
    for cmd in ["sample", "simulate"] {
        let a = dir.path().join(format!("{cmd}_a"));
        let b = dir.path().join(format!("{cmd}_b"));
        let c = dir.path().join(format!("{cmd}_c"));
        assert_eq!(run_args(&[cmd, "-c", s(&cfg), "-o", s(&a), "--seed", "9"]), EXIT_OK);
        assert_eq!(
            run_args(&["--threads", "2", cmd, "-c", s(&cfg), "-o", s(&b), "--seed", "9"]),
            EXIT_OK
        );
        assert_eq!(run_args(&[cmd, "-c", s(&cfg), "-o", s(&c), "--seed", "10"]), EXIT_OK);
        let (a, b, c) = (fs::read(a).unwrap(), fs::read(b).unwrap(), fs::read(c).unwrap());
        assert_eq!(a, b, "{cmd}");
        assert_ne!(a, c, "{cmd}");
    }
}

#[test]
fn simulate_writes_path_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m1.toml", M1);
    let summary = dir.path().join("summary.json");
    let path = dir.path().join("path.csv");
    let code = run_args(&[
        "simulate", "-c", s(&cfg), "-o", s(&summary), "--path-output", s(&path),
    ]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(summary).unwrap()).unwrap();
    assert_eq!(v["seed"], DEFAULT_SEED);
    assert_eq!(v["n_paths"], 2);
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,z,y"));
    assert_eq!(lines.next(), Some("0.0000000000000000,0.0000000000000000,0.0000000000000000"));
    assert!(lines.count() >= 500);
}

#[test]
fn density_json_matches_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m1.toml", &format!("{M1}\n[density]\nx_max = 4.0\npoints = 5\n"));
    let csv = dir.path().join("d.csv");
    let json = dir.path().join("d.json");
    assert_eq!(run_args(&["density", "-c", s(&cfg), "-o", s(&csv)]), EXIT_OK);
    assert_eq!(
        run_args(&["density", "-c", s(&cfg), "-o", s(&json), "--format", "json"]),
        EXIT_OK
    );
    let v: serde_json::Value = serde_json::from_slice(&fs::read(json).unwrap()).unwrap();
    let text = fs::read_to_string(csv).unwrap();
    for (i, line) in text.lines().skip(1).enumerate() {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(f[0], v["x"][i].as_f64().unwrap());
        assert_eq!(f[1], v["density"][i].as_f64().unwrap());
        assert_eq!(f[2], v["cdf"][i].as_f64().unwrap());
    }
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn approx_requires_section() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m1.toml", M1);
    assert_eq!(run_args(&["approx", "-c", s(&cfg)]), EXIT_CONFIG);

    let body = "[approx]\nx_max = 4.0\nlevels = 16\npoints = 3\n\
                sigma = { x = [0.0], values = [1.0] }\n\
                drift = { x = [0.0, 4.0], values = [0.5, -1.0] }\n";
    let cfg = write(&dir, "approx.toml", body);
    let out = dir.path().join("a.csv");
    assert_eq!(run_args(&["approx", "-c", s(&cfg), "-o", s(&out)]), EXIT_OK);
    assert_eq!(fs::read_to_string(out).unwrap().lines().count(), 4);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m1.toml", M1);
    assert_eq!(run_args(&["--help"]), EXIT_OK);
    assert_eq!(run_args(&["--version"]), EXIT_OK);
    assert_eq!(run_args(&["frobnicate"]), EXIT_CONFIG);
    assert_eq!(run_args(&["info"]), EXIT_CONFIG);
    assert_eq!(run_args(&["info", "-c", "/nonexistent/m.toml"]), EXIT_CONFIG);
    assert_eq!(run_args(&["sample", "-c", s(&cfg), "--format", "xml"]), EXIT_CONFIG);
    let unwritable = dir.path().join("no/such/dir/out.csv");
    assert_eq!(run_args(&["info", "-c", s(&cfg), "-o", s(&unwritable)]), 1);
}

#[test]
fn strict_verify_passes_on_two_level_model() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m1.toml", M1);
    let report = dir.path().join("report.json");
    let out = bin()
        .args(["verify", "--strict", "-c", s(&cfg), "-o", s(&report)])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(report).unwrap()).unwrap();
    assert_eq!(v["metadata"]["seed"], DEFAULT_SEED);
    assert!(v["checks"].as_array().unwrap().len() > 15);
}

#[test]
fn strict_verify_fails_with_exit_three() {
    // An absurdly short run cannot pass the Monte Carlo checks.
    let dir = TempDir::new().unwrap();
    let body = format!(
        "{M1}\n[verify]\nhorizon = 20.0\nn_paths = 1\nhitting_reps = 20\nks_samples = 100\nks_spacing = 0.01\nks_burn_in = 0.0\n"
    );
    let cfg = write(&dir, "m1.toml", &body);
    let report = dir.path().join("report.csv");
    let out = bin()
        .args(["verify", "--strict", "-c", s(&cfg), "-o", s(&report), "--format", "csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let lax = bin()
        .args(["verify", "-c", s(&cfg), "-o", s(&report), "--format", "csv"])
        .output()
        .unwrap();
    assert_eq!(lax.status.code(), Some(EXIT_OK));
    assert!(fs::read_to_string(report).unwrap().contains(",false"));
}
