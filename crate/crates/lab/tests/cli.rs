use std::path::Path;
use std::process::Command;

use csp_lab::{run, ExperimentConfig, ExperimentKind, ExperimentResult};

const SMALL: &str = "n = 8\ncodec.b = 2\ncodec.max_jumps = 2\ntrials = 12\n";

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_csp-lab"));
    cmd.env_remove("CSP_LAB_THREADS");
    cmd
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("exp.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn small_configs() -> Vec<(ExperimentKind, String)> {
    vec![
        (ExperimentKind::Sample, "n = 64\n".into()),
        (ExperimentKind::CodecEval, "n = 64\ncodec.b = 6\ncodec.max_jumps = all\ncodec.mode = variable\ntrials = 20\n".into()),
        (ExperimentKind::CspRun, SMALL.into()),
        (ExperimentKind::CspRun, format!("{SMALL}noise.sigma_m = 0.05\n")),
        (ExperimentKind::UcspRun, format!("{SMALL}codec.mode = variable\n")),
        (ExperimentKind::SweepM, format!("{SMALL}sweep.ratios = 0.25,0.5,0.75,1\n")),
        (ExperimentKind::DimEstimate, "dim.b_grid = 2..6\ndim.n_samples = 20000\n".into()),
        (ExperimentKind::DimEstimate, "dim.target = rdd\nn = 64\ndim.rd_bits = 3..7\ndim.rd_trials = 10\n".into()),
        (ExperimentKind::Bounds, format!("{SMALL}bounds.etas = 1.5,3\n")),
    ]
}

#[test]
fn csv_is_independent_of_worker_count() {
    for (kind, text) in small_configs() {
        let one = ExperimentConfig::parse(kind, &text, &[("threads".into(), "1".into())]).unwrap();
        let four = ExperimentConfig::parse(kind, &text, &[("threads".into(), "4".into())]).unwrap();
        let a = run(&one).unwrap().to_csv();
        let b = run(&four).unwrap().to_csv();
        assert_eq!(a, b, "{kind} differs between 1 and 4 workers");
    }
}

#[test]
fn reloaded_csv_gives_the_same_summary() {
    for (kind, text) in small_configs() {
        let config = ExperimentConfig::parse(kind, &text, &[]).unwrap();
        let result = run(&config).unwrap();
        let back = ExperimentResult::from_csv(kind, &result.to_csv()).unwrap();
        assert_eq!(back.summary, result.summary, "{kind}");
        assert_eq!(back.summary_text(), result.summary_text());
    }
}

#[test]
fn cli_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run.csv");
    let output = bin()
        .args(["csp-run", "--config"])
        .arg(&cfg)
        .args(["--set", "trials=3", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("failure probability"));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 2 + 3);
    assert!(csv.lines().nth(1).unwrap().starts_with("trial,seed,n,m,R_bits,D_target"));
}

#[test]
fn env_threads_do_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}.csv"));
        let status = bin()
            .env("CSP_LAB_THREADS", threads)
            .args(["sweep-m", "--config"])
            .arg(&cfg)
            .args(["--set", "sweep.ratios=0.5,1", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

fn exit_code(args: &[&str], out: &Path) -> (i32, String) {
    let output = bin().args(args).arg("--out").arg(out).output().unwrap();
    let stderr = String::from_utf8(output.stderr).unwrap();
    (output.status.code().unwrap(), stderr)
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");

    let (code, err) = exit_code(&["csp-run", "--set", "bogus.key=1"], &out);
    assert_eq!(code, 2);
    assert_eq!(err.lines().count(), 1);
    assert!(err.contains("bogus.key"));

    let (code, err) = exit_code(&["csp-run", "--set", "source.p=2"], &out);
    assert_eq!(code, 2);
    assert!(err.contains("source.p"));

    let (code, err) = exit_code(&["csp-run", "--set", "codebook.cap=100"], &out);
    assert_eq!(code, 3);
    assert!(err.contains("100472"));

    let (code, err) = exit_code(
        &["csp-run", "--set", "n=8", "--set", "trials=1"],
        &dir.path().join("missing").join("x.csv"),
    );
    assert_eq!(code, 4);
    assert!(err.contains("missing"));

    let (code, _) = exit_code(&["sample", "--config", "/nonexistent/exp.cfg"], &out);
    assert_eq!(code, 4);

    let (code, err) = exit_code(&["sample"], &out);
    assert_eq!(code, 0, "{err}");
}
