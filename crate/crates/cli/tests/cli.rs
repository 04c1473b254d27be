use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mvprobit"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_output_passes_validation() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("gen.csv");
    let out = run(&[
        "synth-data",
        "--schema",
        "generic",
        "--rows",
        "40",
        "--dims",
        "2",
        "--seed",
        "9",
        "--out",
        path_str(&csv),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let out = run(&["validate-data", "--data", path_str(&csv), "--schema", "generic"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.lines().any(|l| l == "ok"), "{text}");
    assert!(text.contains("n=40"), "{text}");
    assert!(text.contains("p=2"), "{text}");
}

#[test]
fn malformed_rows_exit_with_the_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "y1,x1_const,x1_z\n1,1.0,0.2\n7,1.0,-0.4\n").unwrap();
    let out = run(&["validate-data", "--data", path_str(&csv), "--schema", "generic"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn missing_data_file_exits_with_the_data_code() {
    let out = run(&["validate-data", "--data", "/nonexistent/x.csv"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn sample_tmvn_reruns_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out_dir: &str| {
        vec![
            "sample-tmvn".to_string(),
            "--mu".into(),
            "0,0".into(),
            "--sigma".into(),
            "1,0.9;0.9,1".into(),
            "--orthant".into(),
            "++".into(),
            "--particles".into(),
            "800".into(),
            "--seed".into(),
            "5".into(),
            "--out-dir".into(),
            out_dir.into(),
        ]
    };
    let d1 = dir.path().join("a");
    let out1 = bin().args(args(path_str(&d1))).output().unwrap();
    assert_eq!(code(&out1), 0, "{}", stderr(&out1));
    let first = fs::read(d1.join("particles.csv")).unwrap();
    let first_diag = fs::read(d1.join("diagnostics.log")).unwrap();

    fs::remove_dir_all(&d1).unwrap();
    let out2 = bin().args(args(path_str(&d1))).output().unwrap();
    assert_eq!(code(&out2), 0, "{}", stderr(&out2));
    assert_eq!(first, fs::read(d1.join("particles.csv")).unwrap());
    assert_eq!(first_diag, fs::read(d1.join("diagnostics.log")).unwrap());
    assert_eq!(stdout(&out1), stdout(&out2));
}

#[test]
fn fit_writes_artifacts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("gen.csv");
    let out = run(&[
        "synth-data",
        "--schema",
        "generic",
        "--rows",
        "60",
        "--dims",
        "2",
        "--seed",
        "4",
        "--out",
        path_str(&csv),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let fit_args = |out_dir: &str| {
        vec![
            "fit".to_string(),
            "--data".into(),
            path_str(&csv).to_string(),
            "--schema".into(),
            "generic".into(),
            "--particles-schedule".into(),
            "60,60,3,0,240".into(),
            "--vr-steps".into(),
            "2".into(),
            "--seed".into(),
            "3".into(),
            "--skip-se".into(),
            "--out-dir".into(),
            out_dir.into(),
        ]
    };
    let d1 = dir.path().join("fit1");
    let out1 = bin().args(fit_args(path_str(&d1))).output().unwrap();
    assert_eq!(code(&out1), 0, "{}", stderr(&out1));
    for name in ["estimates.tsv", "loglik_trace.tsv", "diagnostics.log"] {
        assert!(d1.join(name).exists(), "missing {name}");
    }
    let estimates = fs::read_to_string(d1.join("estimates.tsv")).unwrap();
    assert!(estimates.contains("lambda_1"), "{estimates}");
    assert!(estimates.contains("omega_12"), "{estimates}");

    let d2 = dir.path().join("fit2");
    let out2 = bin().args(fit_args(path_str(&d2))).output().unwrap();
    assert_eq!(code(&out2), 0, "{}", stderr(&out2));
    assert_eq!(estimates, fs::read_to_string(d2.join("estimates.tsv")).unwrap());
    assert_eq!(
        fs::read_to_string(d1.join("loglik_trace.tsv")).unwrap(),
        fs::read_to_string(d2.join("loglik_trace.tsv")).unwrap()
    );
}

#[test]
fn unknown_objective_is_a_config_error() {
    let out = run(&["fit", "--data", "x.csv", "--objective", "huber"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn fix_sigma11_needs_unconstrained_qtilde() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("gen.csv");
    run(&[
        "synth-data", "--schema", "generic", "--rows", "20", "--dims", "2", "--out",
        path_str(&csv),
    ]);
    let out = run(&["fit", "--data", path_str(&csv), "--schema", "generic", "--fix-sigma11"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("--fix-sigma11"), "{}", stderr(&out));
}

#[test]
fn non_positive_definite_sigma_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "sample-tmvn",
        "--mu",
        "0,0",
        "--sigma",
        "1,2;2,1",
        "--orthant",
        "++",
        "--out-dir",
        path_str(&dir.path().join("o")),
    ]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn show_config_prints_without_running() {
    let dir = tempfile::tempdir().unwrap();
    let od = dir.path().join("none");
    let out = run(&["fit", "--show-config", "--out-dir", path_str(&od)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("schema"), "{text}");
    assert!(text.contains("seed"), "{text}");
    assert!(!od.exists(), "show-config must not write artifacts");
}

#[test]
fn config_file_fills_unset_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[fit]\nseed = 77\nobjective = \"qtilde\"\nmode = \"unconstrained\"\n",
    )
    .unwrap();
    let out = run(&[
        "fit",
        "--config",
        path_str(&cfg),
        "--seed",
        "5",
        "--show-config",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("seed") && text.contains('5'), "{text}");
    assert!(text.contains("qtilde"), "{text}");
}
