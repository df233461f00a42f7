use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn cfe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfe"))
        .args(args)
        .output()
        .expect("spawn cfe")
}

fn run_ok(args: &[&str]) -> Output {
    let out = cfe(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unanimity_game_has_one_nonzero_dividend() {
    let dir = TempDir::new().unwrap();
    run_ok(&[
        "dividends",
        "--input",
        s(&fixture("unanimity3.csv")),
        "--out",
        s(dir.path()),
    ]);
    let rows = csv_rows(&dir.path().join("dividends.csv"));
    let nonzero: Vec<_> = rows.iter().filter(|r| num(&r[2]) != 0.0).collect();
    assert_eq!(nonzero.len(), 1);
    assert_eq!(nonzero[0][0], "7");
    assert_eq!(num(&nonzero[0][2]), 1.0);
    for r in csv_rows(&dir.path().join("shapley.csv")) {
        assert!((num(&r[1]) - 1.0 / 3.0).abs() < 1e-15);
    }
    let synergy = csv_rows(&dir.path().join("synergy.csv"));
    assert_eq!(synergy.len(), 4);
    let labels: Vec<&str> = synergy.iter().map(|r| r[3].as_str()).collect();
    assert_eq!(labels, ["neutral", "neutral", "neutral", "synergistic"]);
}

#[test]
fn additive_game_gives_unit_shapley_values() {
    let dir = TempDir::new().unwrap();
    run_ok(&[
        "dividends",
        "--input",
        s(&fixture("additive3.csv")),
        "--out",
        s(dir.path()),
        "--max-order",
        "1",
    ]);
    for r in csv_rows(&dir.path().join("shapley.csv")) {
        assert_eq!(num(&r[1]), 1.0);
    }
    // An additive game is its own first-order truncation.
    assert_eq!(
        csv_rows(&dir.path().join("truncated_values.csv"))
            .iter()
            .map(|r| num(&r[1]))
            .collect::<Vec<_>>(),
        vec![0.0, 1.0, 1.0, 2.0, 1.0, 2.0, 2.0, 3.0]
    );
}

#[test]
fn malformed_inputs_exit_two_with_line_numbers() {
    let dir = TempDir::new().unwrap();
    let out = cfe(&[
        "dividends",
        "--input",
        s(&fixture("empty.csv")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = cfe(&[
        "dividends",
        "--input",
        s(&fixture("bad_number.csv")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad_number.csv:4:"), "{err}");
    let out = cfe(&[
        "shapley",
        "--input",
        s(&fixture("nonzero_empty.csv")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonzero_empty.csv:2:"));
    let out = cfe(&["shapley", "--input", s(&dir.path().join("missing.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    // Nothing is written when the input is rejected.
    assert!(!dir.path().join("run_manifest.json").exists());
}

#[test]
fn exact_and_sampled_shapley() {
    let dir = TempDir::new().unwrap();
    run_ok(&[
        "shapley",
        "--input",
        s(&fixture("game2.json")),
        "--out",
        s(dir.path()),
    ]);
    let rows = csv_rows(&dir.path().join("shapley.csv"));
    assert_eq!((num(&rows[0][1]), num(&rows[1][1])), (2.0, 3.0));
    run_ok(&[
        "shapley",
        "--input",
        s(&fixture("game2.json")),
        "--out",
        s(dir.path()),
        "--permutations",
        "20000",
    ]);
    let rows = csv_rows(&dir.path().join("shapley.csv"));
    assert!((num(&rows[0][1]) - 2.0).abs() < 4.0 * num(&rows[0][2]).max(1e-3));
    let m = json(&dir.path().join("run_manifest.json"));
    assert_eq!(m["parameters"]["method"], "monte_carlo");
    assert_eq!(m["parameters"]["seed"], 42);
}

#[test]
fn gibbs_fixtures() {
    let dir = TempDir::new().unwrap();
    run_ok(&[
        "gibbs",
        "--input",
        s(&fixture("constant2.csv")),
        "--beta",
        "2",
        "--out",
        s(dir.path()),
    ]);
    for r in csv_rows(&dir.path().join("posterior.csv")) {
        assert_eq!(num(&r[1]), 0.25);
    }

    run_ok(&[
        "gibbs",
        "--input",
        s(&fixture("single_agent.csv")),
        "--beta",
        "1",
        "--out",
        s(dir.path()),
        "--verify-trials",
        "300",
    ]);
    let marg = csv_rows(&dir.path().join("marginals.csv"));
    assert!((num(&marg[0][1]) - 1.0 / 3.0).abs() < 1e-15);
    let f = json(&dir.path().join("free_energy.json"));
    // ln Z = ln(1 + 1/2).
    let neg = f["neg_log_z_over_beta"].as_f64().unwrap();
    assert!((neg + 1.5f64.ln()).abs() < 1e-15);
    assert!((f["free_energy"].as_f64().unwrap() - neg).abs() < 1e-12);
    assert_eq!(f["optimality"]["violations"], 0);

    run_ok(&[
        "gibbs",
        "--input",
        s(&fixture("game2.json")),
        "--from-game",
        "--beta",
        "1",
        "--out",
        s(dir.path()),
    ]);
    let post = csv_rows(&dir.path().join("posterior.csv"));
    let z: f64 = [0.0f64, 1.0, 2.0, 5.0].iter().map(|v| v.exp()).sum();
    assert!((num(&post[3][1]) - 5f64.exp() / z).abs() < 1e-15);

    for beta in ["0", "-1"] {
        let out = cfe(&[
            "gibbs",
            "--input",
            s(&fixture("constant2.csv")),
            "--beta",
            beta,
        ]);
        assert_eq!(out.status.code(), Some(2));
    }
}

#[test]
fn meanfield_decoupled_is_exact() {
    let dir = TempDir::new().unwrap();
    run_ok(&[
        "meanfield",
        "--pairwise",
        s(&fixture("decoupled3.json")),
        "--beta",
        "1.5",
        "--out",
        s(dir.path()),
    ]);
    for r in csv_rows(&dir.path().join("comparison.csv")) {
        assert!(num(&r[3]) <= 1e-10);
    }
    let m = json(&dir.path().join("meanfield.json"));
    assert_eq!(m["converged"], true);
}

#[test]
fn meanfield_non_convergence_exits_three() {
    let dir = TempDir::new().unwrap();
    let out = cfe(&[
        "meanfield",
        "--pairwise",
        s(&fixture("pairwise3.json")),
        "--beta",
        "1",
        "--max-iter",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
    // Results are still written for inspection.
    assert_eq!(json(&dir.path().join("meanfield.json"))["converged"], false);
}

#[test]
fn nash_single_agent_is_exact_equilibrium() {
    let dir = TempDir::new().unwrap();
    run_ok(&[
        "nash",
        "--pairwise",
        s(&fixture("single_pairwise.json")),
        "--out",
        s(dir.path()),
    ]);
    let rows = csv_rows(&dir.path().join("epsilon.csv"));
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| num(&r[1]) == 0.0));
}

#[test]
fn nash_random_game_is_deterministic_and_decays() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for (dir, threads) in [(&a, "1"), (&b, "4")] {
        run_ok(&[
            "nash",
            "--random-agents",
            "3",
            "--betas",
            "1,2,4,8",
            "--threads",
            threads,
            "--out",
            s(dir.path()),
        ]);
    }
    for f in ["epsilon.csv", "certificate.json", "run_manifest.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap()
        );
    }
    let eps: Vec<f64> = csv_rows(&a.path().join("epsilon.csv"))
        .iter()
        .map(|r| num(&r[1]))
        .collect();
    assert!(eps.windows(2).all(|w| w[1] <= w[0]), "{eps:?}");
    let out = cfe(&["nash", "--random-agents", "3", "--betas", "2,1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"input": "{}", "beta": 3.0, "out": "from_config", "seed": 5}}"#,
            fixture("constant2.csv").display()
        ),
    )
    .unwrap();
    run_ok(&["gibbs", "--config", s(&cfg)]);
    let m = json(&dir.path().join("from_config/run_manifest.json"));
    assert_eq!(m["parameters"]["beta"], 3.0);
    assert_eq!(m["parameters"]["seed"], 5);
    let out = dir.path().join("flags");
    run_ok(&[
        "gibbs",
        "--config",
        s(&cfg),
        "--beta",
        "0.5",
        "--seed",
        "9",
        "--out",
        s(&out),
    ]);
    let m = json(&out.join("run_manifest.json"));
    assert_eq!(m["parameters"]["beta"], 0.5);
    assert_eq!(m["parameters"]["seed"], 9);

    fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    assert_eq!(cfe(&["gibbs", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn reproduce_outputs_and_manifest_hashes() {
    let dir = TempDir::new().unwrap();
    let out = run_ok(&["reproduce", "marl", "--out", s(dir.path())]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("marl: beta* = "));
    assert!(stdout.contains("analytic peak 2.5938"));
    let summary = json(&dir.path().join("marl_summary.json"));
    let keys: Vec<&str> = summary
        .as_object()
        .unwrap()
        .keys()
        .map(|k| k.as_str())
        .collect();
    assert_eq!(
        keys,
        [
            "a",
            "b",
            "beta_star",
            "beta_star_method",
            "c",
            "domain",
            "p_value_a",
            "r_squared"
        ]
    );
    assert_eq!(
        csv_rows(&dir.path().join("marl_samples.csv")).len(),
        15 * 100
    );
    let header = fs::read_to_string(dir.path().join("overlay.csv")).unwrap();
    assert!(header.starts_with("domain,beta,normalized_eta\n"));

    let manifest = json(&dir.path().join("run_manifest.json"));
    for art in manifest["artifacts"].as_array().unwrap() {
        let bytes = fs::read(dir.path().join(art["file"].as_str().unwrap())).unwrap();
        assert_eq!(
            art["sha256"].as_str().unwrap(),
            cfe::output::sha256_hex(&bytes)
        );
    }
    assert!(manifest["parameters"].get("threads").is_none());

    let bad = cfe(&["reproduce", "bees", "--out", s(dir.path())]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn reproduce_neural_emits_discrepancy_report() {
    let dir = TempDir::new().unwrap();
    run_ok(&["reproduce", "neural", "--out", s(dir.path())]);
    let report = fs::read_to_string(dir.path().join("neural_report.txt")).unwrap();
    assert!(report.contains("analytic_peak: 3.1523"));
    assert!(report.contains("reference_beta_star: 0.71"));
    assert!(report.contains("cannot be reached"));
}

#[test]
fn reruns_are_idempotent_and_seed_sensitive() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    run_ok(&["reproduce", "fish", "--out", s(a.path())]);
    run_ok(&["reproduce", "fish", "--out", s(b.path())]);
    run_ok(&["reproduce", "fish", "--seed", "7", "--out", s(c.path())]);
    let read = |d: &TempDir| fs::read(d.path().join("fish_samples.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn bad_usage_exits_two() {
    assert_eq!(cfe(&[]).status.code(), Some(2));
    assert_eq!(cfe(&["gibbs", "--beta", "x"]).status.code(), Some(2));
    assert_eq!(
        cfe(&["gibbs", "--threads", "0", "--beta", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(cfe(&["dividends"]).status.code(), Some(2));
}
