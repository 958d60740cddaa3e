//! Exit codes and outputs of the `loopcat` binary.

use std::path::Path;
use std::process::{Command, Output};

fn loopcat(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loopcat")).env("LOOPCAT_OUT", out).env("LOOPCAT_THREADS", "1").args(args).output().unwrap()
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(loopcat(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(loopcat(dir.path(), &["sweep", "sideways"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = loopcat(dir.path(), &["eval", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[[stage]]\nkind = \"herald\"\nname = \"a\"\nn = 1\nbogus = 3\n").unwrap();
    assert_eq!(loopcat(dir.path(), &["breed", bad.to_str().unwrap(), "--dry-run"]).status.code(), Some(2));

    assert_eq!(loopcat(dir.path(), &["sweep", "fixed", "--step", "0"]).status.code(), Some(2));
    assert_eq!(loopcat(dir.path(), &["table", dir.path().join("none.jsonl").to_str().unwrap(), "--prefix", "1,2"]).status.code(), Some(2));
}

#[test]
fn dry_run_lists_the_bundled_stages() {
    let dir = tempfile::tempdir().unwrap();
    let out = loopcat(dir.path(), &["breed", "--dry-run"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().count(), 4);
    assert!(text.contains("gkp: breed GKP cat x cat"));
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn train_eval_and_table_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = loopcat(&run, &["train", "--profile", "smoke", "--seed", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt = String::from_utf8_lossy(&out.stdout).trim().to_string();
    assert!(Path::new(&ckpt).exists());
    assert!(run.join("curve.csv").exists());
    assert!(run.join("manifest.json").exists());

    let ev = dir.path().join("eval");
    let out = loopcat(&ev, &["eval", &ckpt, "--episodes", "5", "--seeds", "0,1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for h in ["output_fidelity", "photons", "steps", "steps_between_resets"] {
        assert!(ev.join(format!("hist_{h}.csv")).exists());
    }
    let lookup = ev.join("lookup.jsonl");
    assert_eq!(std::fs::read_to_string(&lookup).unwrap().lines().count(), 10);

    let all = loopcat(&ev, &["table", lookup.to_str().unwrap()]);
    assert_eq!(all.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&all.stdout).lines().count(), 10);
    let none = loopcat(&ev, &["table", lookup.to_str().unwrap(), "--prefix", "9,9,9"]);
    assert_eq!(String::from_utf8_lossy(&none.stdout).lines().count(), 0);

    // resuming a finished run with a larger budget continues from its checkpoint
    let more = loopcat(&run, &["train", "--resume", &ckpt, "--steps", "320"]);
    assert_eq!(more.status.code(), Some(0), "{}", String::from_utf8_lossy(&more.stderr));
}
