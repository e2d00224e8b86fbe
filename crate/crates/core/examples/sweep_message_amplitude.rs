//! A miniature message-level sweep: trains one classifier and one denoiser
//! per level, writes results.csv and results.svg, then shows that a second
//! run reuses every artifact.
//!
//!     cargo run --release --example sweep_message_amplitude [run_dir]

use qpsk_receiver::experiments::{run_sweep_with, ExperimentConfig};

const CONFIG: &str = r#"
sweep = "message-amplitude"
message_db = [-9.0, -6.0, -3.0]
width = 16
train_per_key = 80
test_per_key = 40
cnn_holdout_per_key = 20
gnn_epochs = 20
cnn_epochs = 5
replicates = 1
seed = 5
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig::from_toml(CONFIG)?;
    cfg.output_dir = Some(std::env::args().nth(1).unwrap_or_else(|| "sweep_demo".into()).into());
    let spec = cfg.resolve()?;
    let log = |line: &str| println!("  {line}");

    let first = run_sweep_with(&spec, true, &log)?;
    println!("{} rows in {}", first.rows.len(), first.results_path().display());
    for r in &first.rows {
        println!(
            "  {:>6.2} dB  {:<10}  network error {:.3}  above Helstrom {:.4}",
            r.message_db,
            r.variant.as_str(),
            r.p_network,
            r.p_relative
        );
    }

    let again = run_sweep_with(&spec, true, &log)?;
    println!(
        "second run: {} models trained, {} jobs evaluated, {} reused",
        again.models_trained, again.jobs_evaluated, again.jobs_skipped
    );
    Ok(())
}
