//! End-to-end runs of the `snode` binary on tiny problems.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use snode_core::spectral::{SnapshotDataset, Split};
use tempfile::TempDir;

fn snode(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snode"))
        .current_dir(dir)
        .env_remove("SNODE_DATA_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = snode(dir, args);
    assert!(
        out.status.success(),
        "snode {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

const VBE: &[&str] = &[
    "--system", "vbe", "--data-dir", "data",
    "--set", "grid=32", "--set", "solver_grid=64", "--set", "horizon=0.25",
];

fn vbe(extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = VBE.iter().map(|s| s.to_string()).collect();
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run(dir: &Path, cmd: &str, extra: &[&str]) -> Output {
    let mut args = vec![cmd.to_string()];
    args.extend(vbe(extra));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(dir, &refs)
}

fn small_vbe(dir: &Path) -> PathBuf {
    run(dir, "generate", &["--train-ics", "10", "--test-ics", "2"]);
    dir.join("data/vbe.snod")
}

const TINY_MODEL: &[&str] = &["--set", "hidden=8,8", "--batch-size", "16"];

fn train(dir: &Path, extra: &[&str]) -> Output {
    let mut args = TINY_MODEL.to_vec();
    args.extend_from_slice(extra);
    run(dir, "train", &args)
}

#[test]
fn generate_writes_requested_trajectories_and_is_seeded() {
    let tmp = TempDir::new().unwrap();
    let ds_path = small_vbe(tmp.path());
    let ds = SnapshotDataset::load(&ds_path).unwrap();
    assert_eq!(ds.n_traj(), 12);
    assert_eq!(ds.n_snap(), 6);
    assert_eq!(ds.dim(), 32);
    assert_eq!(ds.split, Split::Trajectories { train: 10 });

    run(tmp.path(), "generate", &["--train-ics", "10", "--test-ics", "2", "--dataset", "again.snod"]);
    let again = SnapshotDataset::load(&tmp.path().join("again.snod")).unwrap();
    assert_eq!(ds.sha256(), again.sha256());

    run(tmp.path(), "generate", &["--train-ics", "10", "--test-ics", "2", "--seed", "1", "--dataset", "other.snod"]);
    let other = SnapshotDataset::load(&tmp.path().join("other.snod")).unwrap();
    assert_ne!(ds.sha256(), other.sha256());
}

#[test]
fn kse_dataset_marks_a_snapshot_split() {
    let tmp = TempDir::new().unwrap();
    ok(
        tmp.path(),
        &["generate", "--system", "kse", "--data-dir", "data", "--horizon", "20", "--set", "transient=10"],
    );
    let ds = SnapshotDataset::load(&tmp.path().join("data/kse.snod")).unwrap();
    assert_eq!(ds.n_traj(), 1);
    assert_eq!(ds.n_snap(), 81);
    assert_eq!(ds.split, Split::Snapshots { train: 64 });
}

#[test]
fn manifests_reproduce_every_stage_byte_for_byte() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let ds = small_vbe(dir);
    train(dir, &["--variant", "learned-linear", "--epochs", "3"]);
    run(dir, "evaluate", &["--variant", "learned-linear", "--times", "0.1,0.2"]);
    run(dir, "stencil-report", &["--variant", "learned-linear"]);

    let artifacts = [
        (ds.clone(), ds.with_extension("snod.run")),
        (dir.join("data/vbe-learned-linear.snck"), dir.join("data/vbe-learned-linear.snck.run")),
        (dir.join("data/vbe-learned-linear-error.csv"), dir.join("data/vbe-learned-linear-error.csv.run")),
        (dir.join("data/vbe-learned-linear-stencil.csv"), dir.join("data/vbe-learned-linear-stencil.csv.run")),
    ];
    let before: Vec<Vec<u8>> = artifacts.iter().map(|(a, _)| fs::read(a).unwrap()).collect();
    for ((artifact, manifest), bytes) in artifacts.iter().zip(&before) {
        let text = fs::read_to_string(manifest).unwrap();
        let command = text
            .lines()
            .find_map(|l| l.strip_prefix("command = "))
            .unwrap_or_else(|| panic!("{} has no command", manifest.display()));
        ok(dir, &[command, "--config", manifest.to_str().unwrap()]);
        assert_eq!(&fs::read(artifact).unwrap(), bytes, "{} changed on re-run", artifact.display());
    }
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    small_vbe(dir);
    train(dir, &["--variant", "fixed-linear", "--epochs", "4", "--checkpoint", "full.ckpt"]);
    train(dir, &["--variant", "fixed-linear", "--epochs", "4", "--set", "stop_after=2", "--checkpoint", "half.ckpt"]);
    train(dir, &["--variant", "fixed-linear", "--epochs", "4", "--resume", "half.ckpt", "--checkpoint", "resumed.ckpt"]);
    assert_eq!(fs::read(dir.join("full.ckpt")).unwrap(), fs::read(dir.join("resumed.ckpt")).unwrap());
}

#[test]
fn exit_codes_follow_the_failure_class() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();

    let unknown = snode(dir, &["generate", "--set", "no_such_key=1"]);
    assert_eq!(code(&unknown), 2);
    let bad_flag = snode(dir, &["train", "--epochs", "many"]);
    assert_eq!(code(&bad_flag), 2);
    let missing = snode(dir, &["train", "--data-dir", "nowhere"]);
    assert_eq!(code(&missing), 4);

    small_vbe(dir);
    let nonlinear_stencil = {
        train(dir, &["--variant", "nonlinear", "--epochs", "1"]);
        let mut args = vec!["stencil-report".to_string()];
        args.extend(vbe(&["--variant", "nonlinear"]));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        snode(dir, &refs)
    };
    assert_eq!(code(&nonlinear_stencil), 2);

    let blown = {
        let mut args = vec!["train".to_string()];
        args.extend(vbe(TINY_MODEL));
        args.extend(
            ["--variant", "nonlinear", "--epochs", "3", "--set", "lr_nonlinear=1e300", "--set", "weight_init=normal:0:1"]
                .iter()
                .map(|s| s.to_string()),
        );
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        snode(dir, &refs)
    };
    assert_eq!(code(&blown), 3, "{}", String::from_utf8_lossy(&blown.stderr));
}

#[test]
fn rerun_refuses_a_changed_input() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    small_vbe(dir);
    run(dir, "evaluate", &["--rhs", "true", "--times", "0.1"]);
    let manifest = dir.join("data/vbe-true-error.csv.run");
    ok(dir, &["evaluate", "--config", manifest.to_str().unwrap()]);

    run(dir, "generate", &["--train-ics", "10", "--test-ics", "2", "--seed", "5"]);
    let out = snode(dir, &["evaluate", "--config", manifest.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let wrong_command = snode(dir, &["train", "--config", manifest.to_str().unwrap()]);
    assert_eq!(code(&wrong_command), 2);
}
