use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fairij(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairij"))
        .args(args)
        .env_remove("FAIRIJ_SEED")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = fairij(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn input_errors_exit_with_code_one() {
    assert_eq!(fairij(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(fairij(&["train", "--bogus"]).status.code(), Some(1));
    let out = fairij(&["train", "--set", "train.nonsense=3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    assert_eq!(fairij(&["train", "--set", "data.source=csv"]).status.code(), Some(1));
    assert_eq!(fairij(&["--help"]).status.code(), Some(0));
}

#[test]
fn moons_pipeline_writes_consistent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let csv = d.join("moons.csv");
    ok(&["gen-moons", "--n", "300", "--seed", "2", "-o", csv.to_str().unwrap()]);
    let cfg = d.join("moons.cfg");
    let out = d.join("run");
    let (cfg, out) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    let model = format!("{out}/model.json");
    let run = |cmd: &str, with_model: bool| {
        let mut args = vec![cmd, "--config", cfg, "--set", "model.hidden=4", "--set", "train.epochs=20", "--set", "train.learning_rate=0.05", "-o", out];
        if with_model {
            args.extend(["-m", model.as_str()]);
        }
        ok(&args)
    };
    run("train", false);
    run("influence", true);

    let scores = csv_rows(&Path::new(out).join("influence.csv"));
    let sorted = csv_rows(&Path::new(out).join("influence_sorted.csv"));
    assert_eq!(scores.len(), sorted.len());
    // train share of 300 rows after the default validation and test cuts
    assert_eq!(scores.len(), 300 - (300.0f64 * 0.33).floor() as usize - (300.0f64 * 0.2).floor() as usize);
    let vals: Vec<f64> = sorted.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(vals.windows(2).all(|w| w[0] >= w[1]));

    run("mitigate", true);
    run("eval", true);
    let eval: serde_json::Value = serde_json::from_str(&fs::read_to_string(Path::new(out).join("eval.json")).unwrap()).unwrap();
    assert_eq!(eval["command"], "eval");
    assert!(eval["result"]["test"]["accuracy"].as_f64().unwrap() > 0.5);
    let resolved = fs::read_to_string(Path::new(out).join("config.resolved")).unwrap();
    assert!(resolved.contains("model.hidden=4"));
    assert!(resolved.contains("train.epochs=20"));
}
