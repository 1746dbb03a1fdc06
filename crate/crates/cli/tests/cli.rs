//! Binary-level behaviour: exit codes, error messages and config handling.

use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sip-bench"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_lists_every_command() {
    let o = bench(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["gen-demos", "train", "train-classifier", "eval", "ablate"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn missing_inputs_name_the_producing_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = bench(&["train", "--out", out]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("gen-demos"), "{}", stderr(&o));
    let o = bench(&["eval", "--out", out]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("train"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "task = \"push_block\"\nsurprise = 1\n").unwrap();
    let o = bench(&["gen-demos", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("surprise"), "{}", stderr(&o));

    let out = dir.path().to_str().unwrap();
    let o = bench(&["eval", "--out", out, "--mode", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bench(&["gen-demos", "--out", out, "--task", "juggle"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_demos_writes_data_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "task = \"peg_in_slot\"\nseed = 9\n[demos]\ncount = 3\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = bench(&[
        "gen-demos",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "10",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = sip_bench::manifest::Manifest::read(&out.join("manifest-gen-demos.toml")).unwrap();
    assert_eq!(m.seed, 10);
    assert_eq!(m.outputs.len(), 1);
    assert_eq!(m.outputs[0].path, "demos.sipd");
    let set = sip_core::envs::load_demos(&out.join("demos.sipd")).unwrap();
    assert_eq!(set.demos.len(), 3);
}
