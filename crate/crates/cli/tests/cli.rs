use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fusionlasso"));
    c.env_remove("FUSIONLASSO_SEED").env_remove("FUSIONLASSO_THREADS").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is a single JSON document")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Four units on a shared slope; units a, b at 0 and c, d at 1.5.
fn write_problem(dir: &Path, intercept: bool) -> (PathBuf, PathBuf) {
    let mut csv = String::from("y,unit,x\n");
    let mut state = 12345u64;
    let mut unif = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    };
    for (u, eff) in [("a", 0.0), ("b", 0.0), ("c", 1.5), ("d", 1.5)] {
        for _ in 0..25 {
            let x = unif() * 2.0 - 1.0;
            let e = (unif() + unif() + unif() - 1.5) * 2.0;
            csv.push_str(&format!("{},{u},{x}\n", eff + 0.5 * x + e));
        }
    }
    let data = dir.join("d.csv");
    std::fs::write(&data, csv).unwrap();
    let config = dir.join("c.json");
    let cfg = serde_json::json!({
        "outcome": "y",
        "columns": {"unit": "categorical"},
        "formula": "unit + x",
        "intercept": intercept,
    });
    std::fs::write(&config, cfg.to_string()).unwrap();
    (data, config)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(out: &Path) -> Output {
    run(&["simulate", "--G", "25", "--r", "20", "--S", "12", "--reps", "5", "--seed", "1", "--out", s(out)])
}

#[test]
fn simulate_twice_gives_identical_replicate_csvs() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ja = stdout_json(&simulate(&a));
    stdout_json(&simulate(&b));
    for f in ["replicates.csv", "effects.csv", "result.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(ja["summaries"].as_array().unwrap().len(), 4);
    let rows = std::fs::read_to_string(a.join("replicates.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 5 * 4);
}

#[test]
fn fusion_only_structure_without_data_is_prior_improper() {
    let dir = TempDir::new().unwrap();
    let structure = dir.path().join("s.json");
    let graph = serde_json::json!({
        "p": 3,
        "labels": ["b0", "b1", "b2"],
        "edges": [{"i": 0, "j": 1, "weight": 1.0}, {"i": 1, "j": 2, "weight": 1.0}],
    });
    std::fs::write(&structure, graph.to_string()).unwrap();
    let spec = format!("file:{}", s(&structure));
    let out = dir.path().join("o");
    let report = stdout_json(&run(&["check-propriety", "--structure", &spec, "--out", s(&out)]));
    assert_eq!(report["prior_proper"], false);
    assert_eq!(report["rank_dbar"], 2);
    assert_eq!(report["nullspace_dim"], 1);
    assert!(report["posterior_proper"].is_null());
    assert_eq!(read_json(&out.join("propriety.json")), report);
    assert!(out.join("run.json").exists());
}

#[test]
fn fit_em_grid_writes_calibration_and_best_solution() {
    let dir = TempDir::new().unwrap();
    let (data, config) = write_problem(dir.path(), false);
    let out = dir.path().join("o");
    let args = ["fit-em", "--data", s(&data), "--config", s(&config), "--lambda", "grid", "--adaptive", "1"];
    let cal = stdout_json(&run(&[&args[..], &["--out", s(&out)]].concat()));
    let best = read_json(&out.join("em.json"));
    assert_eq!(cal["grid"].as_array().unwrap().len(), 50);
    assert_eq!(cal["lambda_star"], best["lambda"]);
    assert_eq!(read_json(&out.join("calibration.json")), cal);
    let grid = std::fs::read_to_string(out.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 51);
    let coefs = std::fs::read_to_string(out.join("coefficients.csv")).unwrap();
    assert_eq!(coefs.lines().count(), 6);
    assert!(coefs.starts_with("coefficient,estimate,group"));

    let single = dir.path().join("single");
    let sol = stdout_json(&run(&[&args[..5], &["--lambda", "0.5", "--out", s(&single)]].concat()));
    assert_eq!(sol["lambda"], 0.5);
    assert_eq!(sol["beta_hat"].as_array().unwrap().len(), 5);
}

#[test]
fn replay_reproduces_outputs() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    let o = run(&["simulate", "--G", "6", "--r", "10", "--S", "2", "--reps", "2", "--seed", "9", "--out", s(&first)]);
    stdout_json(&o);
    let record = read_json(&first.join("run.json"));
    assert_eq!(record["seed"], 9);
    assert_eq!(record["command"]["command"], "simulate");

    let second = dir.path().join("second");
    stdout_json(&run(&["replay", s(&first.join("run.json")), "--out", s(&second)]));
    for f in ["replicates.csv", "effects.csv", "result.json"] {
        assert_eq!(std::fs::read(first.join(f)).unwrap(), std::fs::read(second.join(f)).unwrap(), "{f}");
    }
    let mut replayed = read_json(&second.join("run.json"));
    replayed["command"]["out"] = record["command"]["out"].clone();
    assert_eq!(replayed, record);
}

#[test]
fn seed_can_come_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["simulate", "--G", "4", "--r", "6", "--S", "1", "--reps", "1", "--methods", "fe,pooled"];
    let o = bin().args(args).args(["--out", s(&a)]).env("FUSIONLASSO_SEED", "5").output().unwrap();
    stdout_json(&o);
    stdout_json(&run(&[&args[..], &["--seed", "5", "--out", s(&b)]].concat()));
    assert_eq!(std::fs::read(a.join("replicates.csv")).unwrap(), std::fs::read(b.join("replicates.csv")).unwrap());
    assert_eq!(read_json(&a.join("run.json"))["seed"], 5);
}

#[test]
fn validation_errors_exit_with_status_two() {
    let dir = TempDir::new().unwrap();
    let (data, config) = write_problem(dir.path(), false);
    let out = dir.path().join("o");
    let cases: Vec<Vec<&str>> = vec![
        vec!["simulate", "--G", "4", "--r", "6", "--S", "1", "--out", s(&out)],
        vec!["simulate", "--G", "4", "--r", "6", "--S", "3", "--seed", "1", "--out", s(&out)],
        vec!["fit-em", "--data", "/nonexistent.csv", "--config", s(&config), "--lambda", "1"],
        vec!["fit-em", "--data", s(&data), "--config", s(&config), "--lambda", "-1"],
        vec!["fit-em", "--data", s(&data), "--config", s(&config), "--lambda", "1", "--structure", "ring"],
        vec!["check-propriety", "--out", s(&out)],
        vec!["bogus"],
    ];
    for args in cases {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(o.stdout.is_empty(), "{args:?}");
        assert!(!o.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn improper_posterior_is_refused_unless_forced() {
    let dir = TempDir::new().unwrap();
    // An intercept next to a full one-hot unit coding leaves a direction
    // that neither the data nor the fusion penalty pins down.
    let (data, config) = write_problem(dir.path(), true);
    let out = dir.path().join("o");
    let base = [
        "sample", "--data", s(&data), "--config", s(&config), "--seed", "2", "--chains", "1", "--iters", "300",
        "--burnin", "100", "--lambda", "1", "--sigma2", "1", "--out", s(&out),
    ];
    let refused = run(&base);
    assert_eq!(refused.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("improper"));

    let report = stdout_json(&run(&["check-propriety", "--data", s(&data), "--config", s(&config), "--out", s(&out)]));
    assert_eq!(report["posterior_proper"], false);

    let forced = run(&[&base[..], &["--force"]].concat());
    assert!(forced.status.success(), "{}", String::from_utf8_lossy(&forced.stderr));
    let summary: Value = serde_json::from_slice(&forced.stdout).unwrap();
    assert_eq!(summary["unverified"], true);
    assert_eq!(read_json(&out.join("run.json"))["command"]["force"], true);
}

#[test]
fn sample_then_diagnose_round_trip() {
    let dir = TempDir::new().unwrap();
    let (data, config) = write_problem(dir.path(), false);
    let out = dir.path().join("o");
    for (format, file) in [("bin", "draws.bin"), ("csv", "draws.csv")] {
        let summary = stdout_json(&run(&[
            "sample", "--data", s(&data), "--config", s(&config), "--seed", "4", "--chains", "3", "--iters", "1500",
            "--burnin", "500", "--format", format, "--out", s(&out), "--threads", "2",
        ]));
        assert_eq!(summary["n_draws"], 3000);
        assert_eq!(summary["unverified"], false);
        let draws = out.join(file);
        let mut args = vec!["diagnose", "--draws", s(&draws), "--out", s(&out)];
        if format == "csv" {
            let o = run(&args);
            assert_eq!(o.status.code(), Some(2), "CSV draws need a family");
            args.extend(["--family", "linear"]);
        }
        let report = stdout_json(&run(&args));
        assert_eq!(report["chains"], 3);
        // 5 coefficients, λ² and σ².
        assert_eq!(report["parameters"].as_array().unwrap().len(), 7);
        assert!(out.join("flagged.csv").exists());
    }
}

#[test]
fn calibrate_reports_cv_and_waic() {
    let dir = TempDir::new().unwrap();
    let (data, config) = write_problem(dir.path(), false);
    let out = dir.path().join("o");
    let args = [
        "calibrate", "--data", s(&data), "--config", s(&config), "--grid", "20", "--folds", "5", "--seed", "3",
        "--waic", "--waic-iters", "1000", "--out", s(&out),
    ];
    let cal = stdout_json(&run(&args));
    assert!(cal["cv_rmse"].as_f64().unwrap() > 0.0);
    assert!(cal["waic"].as_f64().unwrap().is_finite());
    assert_eq!(read_json(&out.join("cv.json"))["folds_used"], 5);
    let again = stdout_json(&run(&args));
    assert_eq!(again, cal);
}
