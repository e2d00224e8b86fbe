use std::io;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use qpsk_receiver::experiments::{ExperimentConfig, SweepKind};
use qpsk_receiver::homodyne::{generate_dataset, read_dataset, write_dataset, DatasetRole, LoScan};
use qpsk_receiver::io::write_atomic;
use qpsk_receiver::limits::{limits_grid, write_limits_csv};
use qpsk_receiver::neuralnet::{load_network, save_network};
use qpsk_receiver::receiver::{
    evaluate, train_cnn, train_gnn_with_progress, CnnConfig, GnnConfig, InputEncoding,
};

/// Homodyne QPSK receiver toolkit.
#[derive(Parser)]
#[command(name = "qhd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the homodyne and Helstrom error limits.
    Limits {
        #[arg(long, default_value_t = -15.0, allow_negative_numbers = true)]
        min_db: f64,
        #[arg(long, default_value_t = 9.0, allow_negative_numbers = true)]
        max_db: f64,
        #[arg(long, default_value_t = 0.5)]
        step_db: f64,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a labeled dataset of homodyne images.
    Gen {
        #[arg(long, allow_negative_numbers = true)]
        alpha_db: f64,
        #[arg(long)]
        per_key: usize,
        #[arg(long, default_value_t = 30)]
        width: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// gnn-input, gnn-target, cnn-train or test.
        #[arg(long, default_value = "test")]
        role: DatasetRole,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the denoising network on paired weak and strong datasets.
    TrainGnn(TrainGnn),
    /// Train the classifier on a strong-signal dataset.
    TrainCnn(TrainCnn),
    /// Error probabilities of a trained receiver on a test set.
    Eval(Eval),
    /// Run a resumable parameter sweep.
    Sweep(Sweep),
}

#[derive(Args)]
struct TrainGnn {
    /// Weak-signal input dataset.
    #[arg(long)]
    train: PathBuf,
    /// Strong-signal target dataset with the same width and per-key count.
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long, default_value_t = 150)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// pixel or quadrature.
    #[arg(long)]
    input_encoding: Option<InputEncoding>,
}

#[derive(Args)]
struct TrainCnn {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trailing images of each key block kept out of training.
    #[arg(long, default_value_t = 30)]
    holdout_per_key: usize,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    test: PathBuf,
    /// Trained classifier.
    #[arg(long)]
    model_in: PathBuf,
    /// Trained denoiser applied before classification.
    #[arg(long, conflicts_with = "no_gnn")]
    gnn_in: Option<PathBuf>,
    /// Classify the raw test images.
    #[arg(long)]
    no_gnn: bool,
    /// Report destination; JSON for a `.json` extension, CSV otherwise.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct Sweep {
    /// TOML experiment config; flags below override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// target-amplitude, scan-range or message-amplitude.
    #[arg(long)]
    kind: Option<SweepKind>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    message_db: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    gnn_epochs: Option<usize>,
    #[arg(long)]
    cnn_epochs: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for run artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also render results.svg.
    #[arg(long)]
    plot: bool,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Limits {
            min_db,
            max_db,
            step_db,
            out,
        } => {
            let rows = limits_grid(min_db, max_db, step_db)?;
            match out {
                Some(path) => {
                    let mut buf = Vec::new();
                    write_limits_csv(&rows, &mut buf)?;
                    write_atomic(&path, &buf)?;
                }
                None => write_limits_csv(&rows, io::stdout().lock())?,
            }
        }
        Command::Gen {
            alpha_db,
            per_key,
            width,
            seed,
            role,
            out,
        } => {
            let scan = LoScan::reference_slice(width)?;
            let ds = generate_dataset(alpha_db, per_key, scan, seed, role)?;
            write_dataset(&ds, &out)?;
            eprintln!("wrote {} images of width {width} to {}", ds.len(), out.display());
        }
        Command::TrainGnn(a) => train_gnn_cmd(a)?,
        Command::TrainCnn(a) => {
            let ds = read_dataset(&a.train).with_context(|| format!("reading {}", a.train.display()))?;
            if a.holdout_per_key >= ds.per_key() {
                bail!("holdout {} leaves no training images out of {} per key", a.holdout_per_key, ds.per_key());
            }
            let cfg = CnnConfig {
                epochs: a.epochs,
                train_per_key: ds.per_key() - a.holdout_per_key,
                test_per_key: a.holdout_per_key,
                ..CnnConfig::new(ds.width(), a.seed)
            };
            let (net, report) = train_cnn(&ds, &cfg)?;
            save_network(&net, &a.model_out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Eval(a) => eval_cmd(a)?,
        Command::Sweep(a) => sweep_cmd(a)?,
    }
    Ok(())
}

fn train_gnn_cmd(a: TrainGnn) -> Result<()> {
    let noisy = read_dataset(&a.train).with_context(|| format!("reading {}", a.train.display()))?;
    let target = read_dataset(&a.target).with_context(|| format!("reading {}", a.target.display()))?;
    let mut cfg = GnnConfig::new(noisy.width(), a.seed);
    cfg.epochs = a.epochs;
    if let Some(lr) = a.learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(enc) = a.input_encoding {
        cfg.input_encoding = enc;
    }
    let (net, _) = train_gnn_with_progress(&noisy, &target, &cfg, |epoch, loss| {
        eprintln!("epoch {:>4}  loss {loss:.6}", epoch + 1);
    })?;
    save_network(&net, &a.model_out)?;
    Ok(())
}

fn eval_cmd(a: Eval) -> Result<()> {
    if a.gnn_in.is_none() && !a.no_gnn {
        bail!("pass --gnn-in <model> for the denoised receiver or --no-gnn for the plain classifier");
    }
    let test = read_dataset(&a.test).with_context(|| format!("reading {}", a.test.display()))?;
    let cnn = load_network(&a.model_in)?;
    let gnn = a.gnn_in.as_deref().map(load_network).transpose()?;
    let report = evaluate(&test, &cnn, gnn.as_ref())?;
    println!(
        "p_network {:.6}  p_err {:.6}  p_relative {:.6}  p_relative_hd {:.6}",
        report.p_network, report.p_err, report.p_relative, report.p_relative_hd
    );
    if let Some(path) = a.report {
        let body = if path.extension().is_some_and(|e| e == "json") {
            serde_json::to_string_pretty(&report)? + "\n"
        } else {
            report.to_csv()
        };
        write_atomic(&path, body.as_bytes())?;
    }
    Ok(())
}

fn sweep_cmd(a: Sweep) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if a.kind.is_some() {
        cfg.sweep = a.kind;
    }
    if cfg.sweep.is_none() {
        bail!("give --config with a `sweep` entry or --kind");
    }
    macro_rules! set {
        ($($field:ident = $value:expr),*) => {$(
            if let Some(v) = $value {
                cfg.$field = Some(v);
            }
        )*};
    }
    set!(
        message_db = a.message_db,
        seed = a.seed,
        replicates = a.replicates,
        gnn_epochs = a.gnn_epochs,
        cnn_epochs = a.cnn_epochs,
        workers = a.workers,
        output_dir = a.out
    );
    let spec = cfg.resolve()?;
    let log = |line: &str| eprintln!("{line}");
    let outcome = qpsk_receiver::experiments::run_sweep_with(&spec, a.plot, &log)?;
    eprintln!(
        "{} rows ({} models trained, {} jobs evaluated, {} reused)",
        outcome.rows.len(),
        outcome.models_trained,
        outcome.jobs_evaluated,
        outcome.jobs_skipped
    );
    for f in &outcome.failures {
        eprintln!("failed: {f:?}");
    }
    println!("{}", outcome.results_path().display());
    if a.plot {
        println!("{}", outcome.run_dir.join("results.svg").display());
    }
    if !outcome.failures.is_empty() {
        bail!("{} jobs failed", outcome.failures.len());
    }
    Ok(())
}
