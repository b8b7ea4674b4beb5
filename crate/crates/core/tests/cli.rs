//! The `mirec` binary end to end on a tiny synthetic set.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mirec(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mirec"))
        .env("MIREC_OUTPUT_ROOT", root)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn wrote(o: &Output) -> PathBuf {
    let out = stdout(o);
    let line = out.lines().find_map(|l| l.strip_prefix("wrote ")).expect("no output dir printed");
    PathBuf::from(line)
}

const TINY: [&str; 16] = [
    "--set", "d=8", "--set", "d_h=8", "--set", "d_b=4", "--set", "n_z=2",
    "--set", "epochs=2", "--set", "batch_size=32", "--set", "s_neg=16", "--set", "output_dir=run",
];

#[test]
fn synth_train_eval_diagnose() {
    let root = tempfile::tempdir().unwrap();
    let synth = wrote(&mirec(root.path(), &["synth", "--out", "data", "--users", "80", "--items-per-cluster", "15", "--focus-width", "6"]));
    assert!(synth.starts_with(root.path()), "synth ignored the output root: {}", synth.display());
    for f in ["interactions.tsv", "labels.tsv"] {
        assert!(synth.join(f).is_file(), "missing {f}");
    }

    let data = synth.join("interactions.tsv");
    let dataset = format!("dataset={}", data.display());
    let mut args = vec!["train", "--set", &dataset];
    args.extend(TINY);
    let run = wrote(&mirec(root.path(), &args));
    assert!(run.starts_with(root.path()));
    for f in ["model.ckpt", "report.txt", "report.record", "resolved.cfg", "split.tsv", "train.log"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }

    let ckpt = run.join("model.ckpt");
    let ckpt = ckpt.to_str().unwrap();
    let eval = stdout(&mirec(root.path(), &["eval", "--checkpoint", ckpt, "--split", "valid", "--cutoffs", "5,10"]));
    assert!(eval.contains("recall@10"), "{eval}");
    assert!(run.join("eval_valid.txt").is_file());

    let diag = stdout(&mirec(root.path(), &["diagnose", "--checkpoint", ckpt]));
    assert!(diag.contains("intra: "), "{diag}");
    assert!(run.join("embeddings_test.tsv").is_file());
}

#[test]
fn errors_exit_nonzero() {
    let root = tempfile::tempdir().unwrap();
    let o = mirec(root.path(), &["train", "--set", "dataset=/nonexistent/log.tsv"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not exist"));

    let o = mirec(root.path(), &["train", "--set", "no_such_key=1"]);
    assert!(!o.status.success());

    let o = mirec(root.path(), &["eval", "--checkpoint", "/nonexistent/model.ckpt"]);
    assert!(!o.status.success());
}

#[test]
fn eval_rejects_zero_cutoff() {
    let root = tempfile::tempdir().unwrap();
    let synth = wrote(&mirec(root.path(), &["synth", "--users", "60", "--items-per-cluster", "12", "--focus-width", "5"]));
    let dataset = format!("dataset={}", synth.join("interactions.tsv").display());
    let mut args = vec!["train", "--set", &dataset];
    args.extend(TINY);
    args.extend(["--set", "epochs=1"]);
    let run = wrote(&mirec(root.path(), &args));
    let ckpt = run.join("model.ckpt");
    let o = mirec(root.path(), &["eval", "--checkpoint", ckpt.to_str().unwrap(), "--cutoffs", "0,20"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("cutoff"));
}
