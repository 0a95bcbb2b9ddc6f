use std::fs;
use std::process::{Command, Output};

fn cellgrid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellgrid")).args(args).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn baseline_profile_runs_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = cellgrid(&["run", "--profile", "paper-baseline", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("1/1 points solved"));
    for f in ["results.csv", "allocations.csv", "diagnostics.csv", "run_meta.json", "profit-vs-axis.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn partially_infeasible_sweep_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    fs::write(&cfg, "profile = \"paper-baseline\"\n[sweep]\naxis = \"operators.op3.coverage_target\"\nvalues = [0.9, 0.999]\n").unwrap();
    let o = cellgrid(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o.stderr));
    assert!(text(&o.stderr).contains("infeasible at 0.999"), "{}", text(&o.stderr));
}

#[test]
fn invalid_config_exits_with_one_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "profile = \"paper-baseline\"\n[physics]\npath_loss_exp = 4\nbogus = 1\n").unwrap();
    let o = cellgrid(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("bogus"), "{}", text(&o.stderr));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn sweep_and_mc_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = cellgrid(&[
        "run",
        "--profile",
        "paper-baseline",
        "--sweep",
        "fairness=1,0",
        "--mc-trials",
        "50",
        "--seed",
        "3",
        "--solver",
        "subgradient",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    let axis: Vec<&str> = results.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(axis, vec!["0e0", "1e0"]);
    let meta = fs::read_to_string(out.join("run_meta.json")).unwrap();
    assert!(meta.contains("\"trials\": 50") && meta.contains("\"subgradient\""), "{meta}");
}

#[test]
fn profile_subcommand_prints_a_loadable_scenario() {
    let o = cellgrid(&["profile", "fig1"]);
    assert_eq!(o.status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fig1.toml");
    fs::write(&cfg, &o.stdout).unwrap();
    let r = cellgrid(&["run", cfg.to_str().unwrap(), "--sweep", "operators.op1.sinr_threshold_db=5", "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", text(&r.stderr));
}

#[test]
fn missing_scenario_is_an_error() {
    let o = cellgrid(&["run"]);
    assert_eq!(o.status.code(), Some(1));
    let o = cellgrid(&["run", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(1));
}
