use std::fs;
use std::path::{Path, PathBuf};

use doi_cli::run;

const SMALL: &str = r#"{
  "environment": {"gridworld": {"width": 5, "height": 5, "slip": 0.1, "walls": [[2, 2]], "goal": [4, 4], "absorbing_goal": false}, "discount": 0.95},
  "expert": {"kind": "greedy_path"},
  "data": {"transitions": 4000, "expert_episodes": 40, "noise": 0.0},
  "run": {"num_skills": 3, "outer_steps": 10, "checkpoint_every": 5},
  "sweep": {"epsilons": [0.0, 0.5, 1.0, 2.0, 4.0], "alphas": [0.0, 16.0]}
}"#;

fn config(dir: &Path) -> PathBuf {
    let p = dir.join("small.json");
    fs::write(&p, SMALL).unwrap();
    p
}

fn doi(args: &[&str]) -> i32 {
    let mut argv = vec!["doi".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    run(argv)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(doi(&["--help"]), 0);
    assert_eq!(doi(&[]), 1);
    assert_eq!(doi(&["frobnicate"]), 1);
    assert_eq!(doi(&["sweep", "--over", "gamma"]), 1);
    assert_eq!(doi(&["doi", "--epsilon", "lots"]), 1);
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(doi(&["smodice", "--config", s(&missing), "--out", s(dir.path())]), 2);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"environment": {"gridworld": {"width": 0, "height": 3}}}"#).unwrap();
    assert_eq!(doi(&["smodice", "--config", s(&bad), "--out", s(dir.path())]), 2);
    let cfg = config(dir.path());
    assert_eq!(doi(&["doi", "--config", s(&cfg), "--epsilon=-1", "--out", s(dir.path())]), 2);
}

#[test]
fn end_to_end_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let out = dir.path().join("run");
    let o = s(&out);
    assert_eq!(doi(&["gen-data", "--config", s(&cfg), "--out", o]), 0);
    for f in ["coverage.jsonl", "expert.jsonl", "experiment.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(doi(&["smodice", "--config", s(&cfg), "--data", o, "--out", o]), 0);
    assert!(out.join("smodice.json").exists());
    assert_eq!(doi(&["doi", "--config", s(&cfg), "--data", o, "--epsilon", "1", "--out", o]), 0);
    assert!(out.join("bundle.json").exists());
    assert!(out.join("checkpoints/checkpoint_00005.json").exists());
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("iteration,skill_or_pair,metric,value,seed,epsilon"));

    let bundle = out.join("bundle.json");
    assert_eq!(doi(&["eval", "--config", s(&cfg), "--data", o, "--bundle", s(&bundle), "--out", o]), 0);
    let eval = fs::read_to_string(out.join("eval.csv")).unwrap();
    assert!(eval.contains("ratio_l1,all,"));
    assert!(eval.contains("return_fraction,z2,"));
    let sf = fs::read_to_string(out.join("sf.csv")).unwrap();
    // header, three skills, expert
    assert_eq!(sf.lines().count(), 5);
    assert!(sf.starts_with("policy,psi_0,psi_1"));

    // The regenerated data is the data written above.
    let again = dir.path().join("again");
    assert_eq!(doi(&["doi", "--config", s(&cfg), "--epsilon", "1", "--out", s(&again)]), 0);
    assert_eq!(fs::read(again.join("bundle.json")).unwrap(), fs::read(&bundle).unwrap());
}

#[test]
fn sequential_and_parallel_runs_match() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(doi(&["doi", "--config", s(&cfg), "--out", s(&a)]), 0);
    assert_eq!(doi(&["doi", "--config", s(&cfg), "--sequential", "--out", s(&b)]), 0);
    for f in ["bundle.json", "metrics.csv", "checkpoints/checkpoint_00010.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let full = dir.path().join("full");
    assert_eq!(doi(&["uncon", "--config", s(&cfg), "--alpha", "16", "--out", s(&full)]), 0);
    let resumed = dir.path().join("resumed");
    let ckpt = full.join("checkpoints/checkpoint_00005.json");
    assert_eq!(
        doi(&["uncon", "--config", s(&cfg), "--alpha", "16", "--resume", s(&ckpt), "--out", s(&resumed)]),
        0
    );
    assert_eq!(
        fs::read(full.join("bundle.json")).unwrap(),
        fs::read(resumed.join("bundle.json")).unwrap()
    );
}

#[test]
fn sweep_writes_one_row_per_setting() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let out = dir.path().join("sweep");
    assert_eq!(doi(&["sweep", "--config", s(&cfg), "--steps", "4", "--out", s(&out)]), 0);
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.starts_with("epsilon,")));
    assert_eq!(doi(&["sweep", "--over", "alpha", "--config", s(&cfg), "--steps", "4", "--out", s(&out)]), 0);
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn offline_mode_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    assert_eq!(doi(&["doi", "--config", s(&cfg), "--mode", "offline", "--steps", "3", "--out", s(dir.path())]), 0);
}

#[test]
fn quick_oracle_checks_pass() {
    assert_eq!(doi(&["oracle", "--quick"]), 0);
}

#[test]
fn bundled_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let bench: doi_core::experiment::Experiment =
        serde_json::from_str(&fs::read_to_string(root.join("benchmark.json")).unwrap()).unwrap();
    assert_eq!(bench, doi_core::experiment::Experiment::benchmark());
    let small: doi_core::experiment::Experiment =
        serde_json::from_str(&fs::read_to_string(root.join("small.json")).unwrap()).unwrap();
    small.run.validate().unwrap();
    small.build().unwrap();
}
