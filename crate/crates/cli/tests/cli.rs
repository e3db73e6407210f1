use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = "# tiny end-to-end run
input_shape = 10,10,10
conv1 = 3,3
conv2 = 3,2
batch_size = 8
max_epochs = 2
window = 2
stride = 2
n_runs = 2
pca_components = 4
baseline_l2 = 1
parcel_grid = 2,2,1
phantom_n_young = 8
phantom_n_old = 8
phantom_frames = 4
phantom_shape = 10,10,10
phantom_regions = 5,5,5,2,0,2
";

fn bold3d(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bold3d"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = bold3d(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn full_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("run.cfg"), CONFIG).unwrap();
    let c = ["--config", "run.cfg"];
    let with = |extra: &[&'static str]| -> Vec<&str> { c.iter().chain(extra).copied().collect() };

    assert!(ok(d, &with(&["synth"])).contains("16 series"));
    assert!(d.join("data/cohort.csv").exists());
    ok(d, &with(&["prepare"]));
    let train = ok(d, &with(&["train", "--seed", "5"]));
    assert!(train.contains("method,n_runs,f1,auc"));
    assert!(d.join("out/run_01/model.vckp").exists());

    let eval = ok(d, &with(&["eval"]));
    assert_eq!(eval, fs::read_to_string(d.join("out/run_00/report.txt")).unwrap());
    let eval1 = ok(
        d,
        &with(&["eval", "--checkpoint", "out/run_01/model.vckp", "--manifest", "out/run_01/manifest.csv"]),
    );
    assert_eq!(eval1, fs::read_to_string(d.join("out/run_01/report.txt")).unwrap());

    let interp = ok(d, &with(&["interpret", "--percentile", "90"]));
    assert_eq!(interp.lines().count(), 2);
    assert!(interp.contains("dice"));

    ok(d, &with(&["baseline", "--kind", "fisherz-lr"]));
    let table = ok(d, &with(&["baseline", "--kind", "pca-lr"]));
    assert_eq!(table.lines().filter(|l| l.contains(',')).count(), 4);

    // Same config, new output directory: identical table.
    ok(d, &with(&["train", "--seed", "5", "--out", "again"]));
    assert_eq!(
        fs::read_to_string(d.join("again/table.csv")).unwrap(),
        "method,n_runs,f1,auc\n".to_string() + train.lines().find(|l| l.starts_with("cnn,")).unwrap() + "\n"
    );
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("typo.cfg"), "windw = 2\n").unwrap();
    assert_eq!(bold3d(d, &["--config", "typo.cfg", "train"]).status.code(), Some(2));
    assert_eq!(bold3d(d, &["train", "--window", "0"]).status.code(), Some(2));
    assert_eq!(bold3d(d, &["baseline", "--kind", "svm"]).status.code(), Some(2));
    // No cohort in the data directory.
    let out = bold3d(d, &["train", "--data", "missing"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cohort.csv"));
}
