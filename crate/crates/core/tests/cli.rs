use std::path::{Path, PathBuf};

use combsim::cli::{main_with, EXIT_ERROR, EXIT_FAIL, EXIT_PASS};
use combsim::scenario::ScenarioFile;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn scenario(name: &str) -> String {
    root().join("scenarios").join(name).display().to_string()
}

fn plan(name: &str) -> String {
    root().join("tests/plans").join(name).display().to_string()
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["combsim"];
    full.extend_from_slice(args);
    let code = main_with(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn golden(name: &str) -> String {
    header(&root().join("tests/golden").join(name))
}

#[test]
fn validate_exit_codes() {
    let (code, out, _) = run(&["validate", &scenario("constant_2layer.toml")]);
    assert_eq!(code, EXIT_PASS);
    assert!(out.contains("mu0 = 3.333333e-1"), "{out}");
    for (file, clause) in [
        ("invalid/zero_a.toml", "k1 <= a_i"),
        ("invalid/y_amplitude.toml", "y_i <= 1"),
    ] {
        let (code, out, _) = run(&["validate", &scenario(file)]);
        assert_eq!(code, EXIT_FAIL);
        assert!(out.contains(clause), "{out}");
    }
}

#[test]
fn runtime_errors_exit_two() {
    let (code, _, err) = run(&["validate", "/nonexistent/scenario.toml"]);
    assert_eq!(code, EXIT_ERROR);
    assert!(err.starts_with("error:"));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\n[grid]\nx_min = \"left\"\n").unwrap();
    let (code, _, err) = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(code, EXIT_ERROR);
    assert!(err.contains("line 3") && err.contains("x_min"), "{err}");
    let (code, _, _) = run(&["frobnicate"]);
    assert_eq!(code, EXIT_ERROR);
}

#[test]
fn validation_failure_blocks_solve_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let s = scenario("invalid/negative_c.toml");
    let (code, _, _) = run(&["solve", &s, "--method", "mol", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code, EXIT_FAIL);
    assert!(!out_dir.exists());
    let (code, out, _) = run(&["solve", &s, "--method", "mol", "--force", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code, EXIT_PASS);
    assert!(out.contains("WARNING"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["forced"], true);
}

#[test]
fn solve_writes_pinned_csvs_and_cross_checks() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path();
    let (code, out, err) = run(&[
        "--seed",
        "3",
        "solve",
        &scenario("constant_2layer.toml"),
        "--method",
        "global",
        "--cross-check",
        "--every",
        "10",
        "--out",
        o.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_PASS, "{out}{err}");
    assert!(out.contains("cross-check") && out.contains("(ok)"), "{out}");
    assert_eq!(header(&o.join("layer_0.csv")), golden("layer_0.csv"));
    assert_eq!(header(&o.join("diagnostics.csv")), golden("diagnostics.csv"));
    assert_eq!(header(&o.join("windows.csv")), golden("windows.csv"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(o.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["scenario"]["sampling"]["seed"], 3);
    assert_eq!(manifest["csv_schema_version"], combsim::output::CSV_SCHEMA_VERSION);

    // every Gronwall value in the CSV is reproducible from the manifest
    let report = &manifest["report"];
    let beta = report["beta_accretivity"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .fold(0.0, f64::max);
    let mu = report["mu_source"].as_f64().unwrap();
    let s = serde_json::from_value::<ScenarioFile>(manifest["scenario"].clone())
        .unwrap()
        .build()
        .unwrap();
    let phi_l2 = combsim::grid::vector_norm(&s.phi, combsim::NormKind::L2).unwrap();
    let mut rdr = csv::Reader::from_path(o.join("diagnostics.csv")).unwrap();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let t: f64 = rec[0].parse().unwrap();
        let g: f64 = rec[6].parse().unwrap();
        let expected = phi_l2 * ((beta + mu) * t).exp();
        assert!((g - expected).abs() <= 1e-12 * expected, "{g} vs {expected}");
    }
}

#[test]
fn diffusion_has_monotone_l2() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = run(&[
        "solve",
        &scenario("diffusion_2layer.toml"),
        "--method",
        "mol",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_PASS);
    let mut rdr = csv::Reader::from_path(dir.path().join("diagnostics.csv")).unwrap();
    let l2: Vec<f64> = rdr.records().map(|r| r.unwrap()[2].parse().unwrap()).collect();
    assert!(l2.len() > 100);
    assert!(l2.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn window_prints_every_term() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("w.json");
    let (code, out, _) = run(&["window", &scenario("constant_2layer.toml"), "--json", json.to_str().unwrap()]);
    assert_eq!(code, EXIT_PASS);
    for key in ["kappa", "mu", "M/(mu e^(beta T))", "1/(kappa e^(beta T))", "T' ="] {
        assert!(out.contains(key), "{key} missing: {out}");
    }
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert!(v["t_prime"].as_f64().unwrap() > 0.0);
    assert!(v["contraction_bound"].as_f64().unwrap() < 1.0);
}

#[test]
fn export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["constant_2layer.toml", "arrhenius_2layer.toml", "three_layer.toml"] {
        let dest = dir.path().join(name);
        let (code, _, _) = run(&["export", &scenario(name), "--out", dest.to_str().unwrap()]);
        assert_eq!(code, EXIT_PASS);
        let original = ScenarioFile::load(Path::new(&scenario(name))).unwrap();
        let exported = ScenarioFile::load(&dest).unwrap();
        assert_eq!(original, exported);
        // exporting the export is a fixed point
        let (_, text, _) = run(&["export", dest.to_str().unwrap()]);
        assert_eq!(text, std::fs::read_to_string(&dest).unwrap());
    }
}

#[test]
fn perturb_reports_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("init");
    let (code, out, err) = run(&[
        "perturb",
        &scenario("constant_2layer.toml"),
        &plan("initial.toml"),
        "--out",
        o.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_PASS, "{out}{err}");
    assert!(out.contains("fitted kappa~"));
    assert_eq!(header(&o.join("dependence.csv")), golden("dependence.csv"));
    let mut rdr = csv::Reader::from_path(o.join("dependence.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let zero = rows.last().unwrap();
    assert_eq!(&zero[0], "0");
    assert_eq!(&zero[2], "0");

    let o = dir.path().join("lambda");
    let (code, out, err) = run(&[
        "perturb",
        &scenario("constant_2layer.toml"),
        &plan("lambda.toml"),
        "--operator",
        "--out",
        o.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_PASS, "{out}{err}");
    assert_eq!(header(&o.join("operator.csv")), golden("operator.csv"));

    let (code, _, err) = run(&[
        "perturb",
        &scenario("diffusion_2layer.toml"),
        &plan("negative_b.toml"),
        "--out",
        dir.path().join("neg").to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_FAIL);
    assert!(err.contains("0 <= b_i"), "{err}");
}
