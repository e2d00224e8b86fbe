//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.
//!
//! The end-to-end criteria train three full-size denoisers and take tens of
//! minutes. Set `QHD_ACCEPTANCE_DIR` to keep their run directory between
//! invocations; by default a fresh temporary directory is used.

mod common;

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qpsk_receiver::experiments::{run_sweep, ExperimentConfig, SweepKind, SweepOutcome, Variant};
use qpsk_receiver::homodyne::{generate_dataset, sample_trace, slice_scan, DatasetRole, LoScan};
use qpsk_receiver::limits::{p_err_helstrom, p_err_homodyne, Amplitude, ErrorBounds, QpskKey};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn degenerate_point() -> Outcome {
    let zero = Amplitude::new(0.0).unwrap();
    let (hd, hel) = (p_err_homodyne(zero), p_err_helstrom(zero));
    check(
        (hd - 0.75).abs() <= 1e-12 && (hel - 0.75).abs() <= 1e-12,
        format!("P_HD(0) = {hd}, P_Hel(0) = {hel}"),
    )
}

fn relative_limits() -> Outcome {
    let rel = |db: f64| ErrorBounds::at(Amplitude::from_db(db)).relative_hd();
    let (r93, r105) = (rel(-9.3), rel(-10.5));
    let ok = (r93 - 1.5e-2).abs() <= 5e-4
        && (r105 - 1.1e-2).abs() <= 5e-4
        && (r93 - 1.474e-2).abs() < 5e-6
        && (r105 - 1.063e-2).abs() < 5e-6;
    check(ok, format!("-9.3 dB: {r93:.6e}, -10.5 dB: {r105:.6e}"))
}

fn ordering() -> Outcome {
    let mut prev = (f64::INFINITY, f64::INFINITY);
    for i in 0..97 {
        let db = -15.0 + 0.25 * i as f64;
        let a = Amplitude::from_db(db);
        let (hd, hel) = (p_err_homodyne(a), p_err_helstrom(a));
        if !(0.0 <= hel && hel <= hd) {
            return Err(format!("at {db} dB: P_Hel {hel:e} > P_HD {hd:e}"));
        }
        if !(hd < prev.0 && hel < prev.1) {
            return Err(format!("not strictly decreasing at {db} dB: P_HD {hd:e}, P_Hel {hel:e}"));
        }
        prev = (hd, hel);
    }
    Ok(format!("97 points, P_HD(9 dB) = {:.3e}, P_Hel(9 dB) = {:.3e}", prev.0, prev.1))
}

fn sampler_statistics() -> Outcome {
    // 16 points over [0, 2π): point 2 sits at γ = π/4, the phase of key 1
    let scan = LoScan {
        total_points: 16,
        gamma_max: TAU,
        base_grid_points: 900,
        lo_amplitude: 100.0,
    };
    let key = QpskKey::new(1).unwrap();
    assert_eq!(scan.gamma(2), key.phase());
    let a = Amplitude::from_db(-10.5);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| sample_trace(key, a, &scan, &mut rng)[2]).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let band = 5.0 * 100.0 / (n as f64).sqrt();
    check(
        (mean - 17.83).abs() <= band && (var / 1e4 - 1.0).abs() <= 0.05,
        format!("mean {mean:.3} (target 17.83 ± {band:.2}), variance {var:.1}"),
    )
}

fn gradients() -> Outcome {
    let mut worst = (0.0_f64, "");
    for (name, net, batch, seed) in common::gradient_cases() {
        let e = common::check(net, batch, seed);
        if e >= worst.0 {
            worst = (e, name);
        }
    }
    check(
        worst.0 < common::TOLERANCE,
        format!("{} cases, worst relative error {:.2e} ({})", common::gradient_cases().len(), worst.0, worst.1),
    )
}

fn cnn_separability(run: &SweepOutcome) -> Outcome {
    let mut accs = Vec::new();
    for rep in 0..3 {
        let path = run.run_dir.join("models").join(format!("cnn_t9_w30_r{rep}.json"));
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let meta: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        accs.push(meta["report"]["held_out_accuracy"].as_f64().ok_or("missing accuracy")?);
    }
    let perfect = accs.iter().filter(|&&a| a == 1.0).count();
    check(perfect >= 2, format!("held-out accuracies {accs:?}"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn end_to_end(run: &SweepOutcome) -> Outcome {
    if !run.failures.is_empty() {
        return Err(format!("failed jobs: {:?}", run.failures));
    }
    if run.rows.iter().any(|r| !(r.p_relative.is_finite() && r.p_err.is_finite())) {
        return Err("non-finite result row".into());
    }
    let of = |v: Variant| run.rows.iter().filter(|r| r.variant == v).map(|r| r.p_relative).collect::<Vec<_>>();
    let (cnn, gnn) = (of(Variant::HdCnn), of(Variant::HdGnnCnn));
    let limit = ErrorBounds::at(Amplitude::from_db(-10.5)).relative_hd();
    let (m_cnn, m_gnn) = (median(cnn.clone()), median(gnn.clone()));
    let detail = format!(
        "median p_relative hd-cnn {m_cnn:.4} {cnn:.4?}, hd-gnn-cnn {m_gnn:.4} {gnn:.4?}, limit {limit:.4}"
    );
    check(cnn.len() == 3 && m_cnn - m_gnn >= 3e-2 && (m_gnn - limit).abs() <= 2.5e-2, detail)
}

fn slicing() -> Outcome {
    let scan = LoScan::reference_slice(28).unwrap();
    let exact = 784.0 / 900.0 * 2.0 * PI;
    let ds = generate_dataset(-10.5, 2, LoScan::full(), 1, DatasetRole::Test).unwrap();
    let sliced = slice_scan(&ds, 28).unwrap();
    let ok = scan.gamma_max == exact
        && sliced.scan.gamma_max == exact
        && (scan.range_over_pi() - 1.742).abs() < 5e-4
        && slice_scan(&ds, 30).unwrap() == ds;
    check(ok, format!("width 28 covers {:.4}π; width 30 is the identity", scan.range_over_pi()))
}

fn reproducibility(dir: &Path) -> Outcome {
    let text = r#"
sweep = "message-amplitude"
message_db = [-12.0, -9.3]
width = 8
train_per_key = 12
test_per_key = 10
cnn_holdout_per_key = 4
gnn_epochs = 5
cnn_epochs = 2
replicates = 2
seed = 11
"#;
    let mut csv = Vec::new();
    for sub in ["a", "b"] {
        let mut cfg = ExperimentConfig::from_toml(text).map_err(|e| e.to_string())?;
        cfg.output_dir = Some(dir.join(sub));
        let out = run_sweep(&cfg.resolve().map_err(|e| e.to_string())?, &|_| {}).map_err(|e| e.to_string())?;
        csv.push(std::fs::read(out.results_path()).map_err(|e| e.to_string())?);
    }
    check(csv[0] == csv[1], format!("two fresh runs, {} bytes each", csv[0].len()))
}

fn full_protocol(dir: &Path) -> Result<SweepOutcome, String> {
    let cfg = ExperimentConfig {
        sweep: Some(SweepKind::MessageAmplitude),
        message_db: Some(vec![-10.5]),
        replicates: Some(3),
        seed: Some(0),
        output_dir: Some(dir.to_path_buf()),
        ..Default::default()
    };
    let spec = cfg.resolve().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let log = |line: &str| eprintln!("    [{:>6.0} s] {line}", start.elapsed().as_secs_f64());
    run_sweep(&spec, &log).map_err(|e| e.to_string())
}

fn main() {
    let scratch = tempfile::tempdir().expect("temporary directory");
    let run_root: PathBuf = std::env::var_os("QHD_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| scratch.path().join("full"));

    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 degenerate point", degenerate_point()),
        ("2 relative homodyne limits", relative_limits()),
        ("3 bound ordering", ordering()),
        ("4 sampler statistics", sampler_statistics()),
        ("5 gradient suite", gradients()),
    ];
    for (name, r) in &results {
        report(name, r);
    }

    eprintln!("running the full protocol at -10.5 dB (3 seeds) in {}", run_root.display());
    let late: Vec<(&str, Outcome)> = match full_protocol(&run_root) {
        Ok(run) => vec![
            ("6 classifier separability", cnn_separability(&run)),
            ("7 end-to-end denoising gain", end_to_end(&run)),
        ],
        Err(e) => vec![
            ("6 classifier separability", Err(e.clone())),
            ("7 end-to-end denoising gain", Err(e)),
        ],
    };
    let tail = vec![
        ("8 scan slicing", slicing()),
        ("9 sweep reproducibility", reproducibility(scratch.path())),
    ];
    for (name, r) in late.iter().chain(&tail) {
        report(name, r);
    }
    results.extend(late);
    results.extend(tail);

    let failed = results.iter().filter(|(_, r)| r.is_err()).count();
    println!("\nacceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn report(name: &str, r: &Outcome) {
    match r {
        Ok(d) => println!("PASS criterion {name}: {d}"),
        Err(d) => println!("FAIL criterion {name}: {d}"),
    }
}
