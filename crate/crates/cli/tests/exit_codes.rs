use std::process::{Command, Output};

fn cospadi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cospadi"))
        .args(args)
        .env("COSPADI_THREADS", "2")
        .output()
        .expect("binary runs")
}

#[test]
fn plan_prints_json() {
    let out = cospadi(&["plan", "--d1", "4096", "--d2", "4096", "--gamma", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["k"], 1364);
    assert_eq!(v["s"], 682);
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(cospadi(&["plan", "--d1", "8"]).status.code(), Some(2));
    assert_eq!(cospadi(&["plan", "--d1", "8", "--d2", "8", "--gamma", "1.2"]).status.code(), Some(2));
    assert_eq!(cospadi(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cospadi(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"not a tensor file").unwrap();
    let junk = junk.to_str().unwrap();
    let out = cospadi(&["compress", "--weights", junk, "--calib", junk, "--gamma", "0.3", "--out", junk]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());
}

#[test]
fn synth_compress_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.bin");
    let model = dir.path().join("m.cospadi");
    let (data, model) = (data.to_str().unwrap(), model.to_str().unwrap());
    assert_eq!(cospadi(&["synth", "--d1", "8", "--d2", "16", "--n", "32", "--subspaces", "2", "--out", data]).status.code(), Some(0));
    let c = cospadi(&["compress", "--weights", data, "--calib", data, "--gamma", "0.3", "--iters", "5", "--out", model]);
    assert_eq!(c.status.code(), Some(0));
    let e = cospadi(&["eval", "--weights", data, "--calib", data, "--compressed", model]);
    assert_eq!(e.status.code(), Some(0));
    let field = |o: &Output| String::from_utf8(o.stdout.clone()).unwrap().lines().nth(1).unwrap().split(',').nth(9).unwrap().to_string();
    assert_eq!(field(&c), field(&e));
}
