//! End-to-end runs of the `jamwatch` binary on a miniature experiment.

use std::path::Path;
use std::process::{Command, Output};

fn jamwatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jamwatch"))
        .args(args)
        .env_remove("JAMWATCH_OUT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = jamwatch(args);
    assert!(
        out.status.success(),
        "jamwatch {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("exp.toml");
    std::fs::write(
        &path,
        r#"
seed = 11

[model]
kind = "cnn"
scale = "desk"

[splits]
train = { empty = 8, active = 8, jammed = 8 }
val = { empty = 3, active = 3, jammed = 3 }
test = { empty = 3, active = 3, jammed = 3 }

[training]
max_epochs = 3
"#,
    )
    .unwrap();
    path
}

fn run_pipeline(config: &Path, out: &Path) {
    let c = config.to_str().unwrap();
    let o = out.to_str().unwrap();
    ok(&["simulate", "--config", c, "--out", o, "--layout", "concat"]);
    ok(&["spectrogram", "--config", c, "--out", o]);
    ok(&["train", "--config", c, "--out", o]);
    ok(&["eval", "--config", c, "--out", o]);
}

#[test]
fn pipeline_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_pipeline(&config, &a);
    run_pipeline(&config, &b);

    for rel in [
        "iq/train/corpus.iq",
        "iq/test/corpus.json",
        "data/train.sgd",
        "data/val.sgd",
        "data/test.sgd",
        "model.nnc",
        "loss.csv",
        "sweep.csv",
        "eval_summary.json",
    ] {
        let x = std::fs::read(a.join(rel)).unwrap_or_else(|_| panic!("missing {rel}"));
        let y = std::fs::read(b.join(rel)).unwrap();
        assert_eq!(x, y, "{rel} differs between identical runs");
    }
}

#[test]
fn overwrite_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let out = tmp.path().join("run");
    let c = config.to_str().unwrap();
    let o = out.to_str().unwrap();
    ok(&["simulate", "--config", c, "--out", o]);
    let second = jamwatch(&["simulate", "--config", c, "--out", o]);
    assert!(!second.status.success());
    let stderr = String::from_utf8_lossy(&second.stderr);
    assert!(stderr.starts_with("error:"), "stderr: {stderr}");
    assert!(stderr.contains("--force"), "stderr: {stderr}");
    ok(&["simulate", "--config", c, "--out", o, "--force"]);
}

#[test]
fn missing_inputs_give_single_error_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = jamwatch(&[
        "describe",
        "--checkpoint",
        tmp.path().join("nope.nnc").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error:"), "stderr: {stderr}");
    assert!(stderr.contains("nope.nnc"), "stderr: {stderr}");
    assert_eq!(stderr.trim_end().lines().count(), 1, "stderr: {stderr}");
}

#[test]
fn bench_and_describe_run_on_trained_model() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let out = tmp.path().join("run");
    run_pipeline(&config, &out);
    let c = config.to_str().unwrap();
    let o = out.to_str().unwrap();
    ok(&["bench", "--config", c, "--out", o, "--trials", "15"]);
    assert!(out.join("latency.csv").exists());
    assert!(out.join("bench_summary.json").exists());

    let table = jamwatch(&["describe", "--config", c, "--out", o]);
    assert!(table.status.success());
    let stdout = String::from_utf8_lossy(&table.stdout);
    assert!(stdout.contains("Dense"), "stdout: {stdout}");
    assert!(stdout.contains("Total"), "stdout: {stdout}");
}

#[test]
fn bad_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "definitely_not_a_key = true\n").unwrap();
    let out = jamwatch(&["simulate", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
