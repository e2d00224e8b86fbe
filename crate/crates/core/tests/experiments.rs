use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use qpsk_receiver::error::Error;
use qpsk_receiver::experiments::{
    emit_results, read_results, row_artifact_names, run_config, run_sweep, ExperimentConfig,
    SweepSpec, Variant,
};
use qpsk_receiver::limits::{p_err_helstrom, p_err_homodyne, Amplitude};

fn tiny(levels: &str, dir: &Path) -> SweepSpec {
    let text = format!(
        r#"
sweep = "message-amplitude"
message_db = {levels}
width = 8
train_per_key = 12
test_per_key = 10
cnn_holdout_per_key = 4
gnn_epochs = 5
cnn_epochs = 2
replicates = 1
seed = 3
"#
    );
    let mut cfg = ExperimentConfig::from_toml(&text).unwrap();
    cfg.output_dir = Some(dir.to_path_buf());
    cfg.resolve().unwrap()
}

fn quiet(_: &str) {}

#[test]
fn minimal_sweep_is_fast_and_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = run_sweep(&tiny("[-10.5]", dir.path()), &quiet).unwrap();
    assert!(start.elapsed() < Duration::from_secs(60));
    assert_eq!(out.rows.len(), 2);
    assert!(out.failures.is_empty());
    let csv = fs::read_to_string(out.results_path()).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(read_results(&csv).unwrap(), out.rows);
    assert!(out.run_dir.join("config.snapshot").exists());
    assert!(out.run_dir.file_name().unwrap().to_str().unwrap().ends_with("-s3"));
}

#[test]
fn rows_carry_the_analytic_limits() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_sweep(&tiny("[-12.0, -9.3]", dir.path()), &quiet).unwrap();
    assert_eq!(out.rows.len(), 4);
    for r in &out.rows {
        let a = Amplitude::from_db(r.message_db);
        let want = p_err_homodyne(a) - p_err_helstrom(a);
        assert!((r.p_relative_hd - want).abs() <= 1e-12);
        assert!((r.p_relative - (r.p_err - r.p_hel)).abs() <= 1e-15);
    }
    for pair in out.rows.chunks(2) {
        assert_eq!(pair[0].variant, Variant::HdCnn);
        assert_eq!(pair[1].variant, Variant::HdGnnCnn);
        assert_eq!(pair[0].coordinate, pair[1].coordinate);
        assert_eq!(pair[0].p_hel, pair[1].p_hel);
        assert_eq!(pair[0].p_relative_hd, pair[1].p_relative_hd);
    }
}

#[test]
fn reruns_are_idempotent_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny("[-12.0, -10.5, -9.0]", dir.path());
    let first = run_sweep(&spec, &quiet).unwrap();
    let csv = fs::read(first.results_path()).unwrap();
    assert_eq!(first.models_trained, 4);

    let again = run_sweep(&spec, &quiet).unwrap();
    assert_eq!((again.models_trained, again.jobs_evaluated, again.jobs_skipped), (0, 0, 3));
    assert_eq!(fs::read(again.results_path()).unwrap(), csv);

    let names = row_artifact_names(&spec);
    assert_eq!(names.len(), 3);
    fs::remove_file(first.run_dir.join("rows").join(&names[1])).unwrap();
    let resumed = run_sweep(&spec, &quiet).unwrap();
    assert_eq!((resumed.models_trained, resumed.jobs_evaluated, resumed.jobs_skipped), (0, 1, 2));
    assert_eq!(fs::read(resumed.results_path()).unwrap(), csv);
}

#[test]
fn fresh_runs_give_identical_csv() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_sweep(&tiny("[-10.5]", a.path()), &quiet).unwrap();
    let rb = run_sweep(&tiny("[-10.5]", b.path()), &quiet).unwrap();
    assert_eq!(fs::read(ra.results_path()).unwrap(), fs::read(rb.results_path()).unwrap());
}

#[test]
fn config_files_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    fs::write(&path, "sweep = \"scan-range\"\nepochs = 3\n").unwrap();
    match run_config(&path, false, &quiet) {
        Err(Error::Config(problems)) => assert!(problems.iter().any(|p| p.contains("epochs")), "{problems:?}"),
        other => panic!("expected a config error, got {other:?}"),
    }

    fs::write(&path, "sweep = \"scan-range\"\nwidths = [7, 40]\nreplicates = 0\n").unwrap();
    match run_config(&path, false, &quiet) {
        Err(Error::Config(problems)) => assert_eq!(problems.len(), 3, "{problems:?}"),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn emitted_csv_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_sweep(&tiny("[-10.5]", dir.path()), &quiet).unwrap();
    let csv = dir.path().join("copy.csv");
    let svg = dir.path().join("copy.svg");
    emit_results(&out.rows, &csv, Some((&svg, "message level (dB)"))).unwrap();
    assert_eq!(read_results(&fs::read_to_string(&csv).unwrap()).unwrap(), out.rows);
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    assert!(emit_results(&[], &csv, None).is_err());
}
