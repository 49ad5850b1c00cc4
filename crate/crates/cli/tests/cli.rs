use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
runs = 2
methods = ["3C-EA", "ReLU"]
[dataset.synthetic]
rows = 80
features = 4
min_extreme = 2
seed = 3
[missingness]
mechanism = "MNAR"
rate = 0.3
[gp]
population_size = 4
generations = 2
[mlp]
hidden_widths = [4]
short = { max_epochs = 2, patience = 1 }
full = { max_epochs = 5, patience = 2 }
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    let config = dir.join("tiny.toml");
    fs::write(&config, TINY).unwrap();
    Command::new(env!("CARGO_BIN_EXE_trichannel"))
        .args(args)
        .arg("--config")
        .arg(&config)
        .arg("--threads")
        .arg("1")
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn compare_writes_result_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&run(dir.path(), &["compare", "--out-dir", "res", "--seed", "4"]));
    assert!(out.contains("3C-EA") && out.contains("ReLU"));
    let res = dir.path().join("res");
    assert_eq!(fs::read_to_string(res.join("runs.csv")).unwrap().lines().count(), 1 + 4);
    assert_eq!(fs::read_to_string(res.join("winners.txt")).unwrap().lines().count(), 2);
    assert!(fs::read_to_string(res.join("manifest.txt")).unwrap().contains("seeds: 4 5"));
    assert_eq!(fs::read_dir(res.join("histories")).unwrap().count(), 2);
}

#[test]
fn evolve_and_eval_formula() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&run(dir.path(), &["evolve", "--out-dir", "ev"]));
    assert!(out.contains("winner") && out.contains("test: acc="));
    let winner = fs::read_to_string(dir.path().join("ev/winner.txt")).unwrap();
    let out = stdout(&run(dir.path(), &["eval-formula", winner.trim(), "--runs", "2"]));
    assert_eq!(out.lines().filter(|l| l.starts_with("seed ")).count(), 2);
    assert!(out.contains("accuracy"));
}

#[test]
fn sweep_and_ablate() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&run(dir.path(), &["sweep", "--rate", "0.1,0.3", "--runs", "1", "--out-dir", "sw"]));
    let sweep = fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().next(), Some("rate,method,metric,mean,std"));
    assert!(dir.path().join("sw/rate_0.3/aggregate.csv").exists());

    let out = stdout(&run(dir.path(), &["ablate", "--variant", "no_flag,no_channelprop", "--runs", "1", "--out-dir", "ab"]));
    assert!(out.contains("3C-EA[no_flag]") && out.contains("3C-EA[no_channelprop]"));
    assert!(dir.path().join("ab/ablation.csv").exists());
}

#[test]
fn prepare_reports_splits() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&run(dir.path(), &["prepare", "--rate", "0.2"]));
    assert!(out.contains("80 rows") && out.contains("train") && out.contains("injected rate"));
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["ablate", "--variant", "no_everything"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown ablation variant"));
    let o = run(dir.path(), &["eval-formula", "(add x"]);
    assert!(!o.status.success());
    let o = run(dir.path(), &["compare", "--runs", "0"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("runs must be at least 1"));
}
