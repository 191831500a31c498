use std::path::Path;
use std::process::{Command, Output};

fn ridgeless(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ridgeless"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn ridgeless")
}

fn data_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(str::to_string)
        .collect()
}

#[test]
fn table1_has_six_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = ridgeless(dir.path(), &["table1", "--seeds", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&dir.path().join("table1.csv"));
    assert_eq!(rows.len(), 6);
    let header = std::fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    assert!(header.starts_with("kappa,ratio,n,d,r,V_mean,V_sd,B_mean,B_sd,seeds\n"));
    assert!(dir.path().join("table1.manifest.json").exists());
}

#[test]
fn linear_kernel_certificate_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = ridgeless(
        dir.path(),
        &["certificate", "--kernel", "linear", "--n", "50", "--d", "20"],
    );
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("can become very large"), "{err}");
}

#[test]
fn sweep_grid_has_nine_kappas() {
    let dir = tempfile::tempdir().unwrap();
    let o = ridgeless(
        dir.path(),
        &[
            "sweep-kappa",
            "--grid-log",
            "-2:2:9",
            "--d",
            "20",
            "--n",
            "60",
            "--n-test",
            "50",
            "--centers",
            "10",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let path = dir.path().join("sweep.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("kappa,n,d,seed,error,V,B,r\n"));
    assert_eq!(data_rows(&path).len(), 9);
}

#[test]
fn manifest_replays_to_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = ridgeless(
        a.path(),
        &[
            "--seed",
            "7",
            "sweep-kappa",
            "--grid-log",
            "-1:1:3",
            "--d",
            "15",
            "--n",
            "40",
            "--n-test",
            "30",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = a.path().join("sweep-kappa.manifest.json");
    let o = ridgeless(
        b.path(),
        &["--seed", "7", "sweep-kappa", "--params", manifest.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read(a.path().join("sweep.csv")).unwrap();
    let second = std::fs::read(b.path().join("sweep.csv")).unwrap();
    assert_eq!(first, second);

    let m1: serde_json::Value = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    let m2: serde_json::Value =
        serde_json::from_slice(&std::fs::read(b.path().join("sweep-kappa.manifest.json")).unwrap()).unwrap();
    assert_eq!(m1["input_hash"], m2["input_hash"]);
}

#[test]
fn fit_interpolates_training_data() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    let y = dir.path().join("y.csv");
    std::fs::write(&x, "a,b\n0,0\n1,0\n0,1\n1,1\n").unwrap();
    std::fs::write(&y, "1\n-1\n0.5\n2\n").unwrap();
    let o = ridgeless(
        dir.path(),
        &[
            "fit",
            "--x",
            x.to_str().unwrap(),
            "--y",
            y.to_str().unwrap(),
            "--xtest",
            x.to_str().unwrap(),
            "--ytest",
            y.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("fit.json")).unwrap()).unwrap();
    assert!(fit["test_error"].as_f64().unwrap() < 1e-10);
}

#[test]
fn bad_arguments_exit_one_and_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        ridgeless(dir.path(), &["sweep-kappa", "--grid-log", "1:2"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(ridgeless(dir.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(ridgeless(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn singular_interpolation_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    let y = dir.path().join("y.csv");
    std::fs::write(&x, "1,2\n1,2\n0,1\n").unwrap();
    std::fs::write(&y, "1\n2\n3\n").unwrap();
    let args = ["fit", "--x", x.to_str().unwrap(), "--y", y.to_str().unwrap()];
    let o = ridgeless(dir.path(), &args);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let mut with_pinv = vec!["--pseudo-inverse"];
    with_pinv.extend(args);
    assert!(ridgeless(dir.path(), &with_pinv).status.success());
}
