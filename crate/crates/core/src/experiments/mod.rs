//! Sweep drivers over target level, scan range and message level, with
//! resumable on-disk runs and CSV/SVG result emission.

mod plot;
mod run;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::receiver::{DropoutReading, InputEncoding};

pub use plot::render_svg;
pub use run::{row_artifact_names, run_config, run_sweep, run_sweep_with, JobFailure, SweepOutcome};

/// Which parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// Varies the GNN target level |α′| at fixed message levels.
    TargetAmplitude,
    /// Varies the LO scan range through the image width.
    ScanRange,
    /// Varies the message level |α_m| at a fixed target level.
    MessageAmplitude,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::TargetAmplitude => "target-amplitude",
            SweepKind::ScanRange => "scan-range",
            SweepKind::MessageAmplitude => "message-amplitude",
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target-amplitude" => Ok(SweepKind::TargetAmplitude),
            "scan-range" => Ok(SweepKind::ScanRange),
            "message-amplitude" => Ok(SweepKind::MessageAmplitude),
            _ => Err(Error::InvalidArgument(format!("unknown sweep kind `{s}`"))),
        }
    }
}

/// `n` points from `a` to `b` inclusive, uniform in dB.
pub fn db_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    b
                } else {
                    a + (b - a) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// The 17 target levels from −15 dB to 9.08 dB.
pub fn default_target_grid() -> Vec<f64> {
    db_grid(-15.0, 9.08, 17)
}

/// The 15 message levels from −15 dB to −9.12 dB.
pub fn default_message_grid() -> Vec<f64> {
    db_grid(-15.0, -9.12, 15)
}

/// Widths 28, 26, …, 4.
pub fn default_scan_widths() -> Vec<usize> {
    (2..=14).rev().map(|k| 2 * k).collect()
}

/// Experiment config file contents. Every field except `sweep` is optional
/// and falls back to the per-sweep default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sweep: Option<SweepKind>,
    pub message_db: Option<Vec<f64>>,
    pub target_db: Option<f64>,
    pub target_grid_db: Option<Vec<f64>>,
    pub width: Option<usize>,
    pub widths: Option<Vec<usize>>,
    pub train_per_key: Option<usize>,
    pub test_per_key: Option<usize>,
    pub cnn_holdout_per_key: Option<usize>,
    pub gnn_epochs: Option<usize>,
    pub gnn_learning_rate: Option<f64>,
    pub gnn_input_encoding: Option<InputEncoding>,
    pub cnn_epochs: Option<usize>,
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub dropout_reading: Option<DropoutReading>,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Fills defaults and validates, reporting every problem at once.
    pub fn resolve(&self) -> Result<SweepSpec> {
        let mut problems = Vec::new();
        let Some(kind) = self.sweep else {
            return Err(Error::Config(vec!["missing required key `sweep`".into()]));
        };
        let amplitude_sweep = kind != SweepKind::ScanRange;
        if amplitude_sweep && self.widths.is_some() {
            problems.push(format!("`widths` applies only to scan-range sweeps, not {kind}"));
        }
        if !amplitude_sweep && self.width.is_some() {
            problems.push("`width` applies only to amplitude sweeps; use `widths`".into());
        }
        if kind != SweepKind::TargetAmplitude && self.target_grid_db.is_some() {
            problems.push(format!("`target_grid_db` applies only to target-amplitude sweeps, not {kind}"));
        }
        if kind == SweepKind::TargetAmplitude && self.target_db.is_some() {
            problems.push("`target_db` is swept by target-amplitude; use `target_grid_db`".into());
        }

        let message_db = self.message_db.clone().unwrap_or_else(|| match kind {
            SweepKind::TargetAmplitude => vec![-12.0, -10.5, -9.3],
            SweepKind::ScanRange => vec![-10.5, -9.3],
            SweepKind::MessageAmplitude => default_message_grid(),
        });
        let target_db = match kind {
            SweepKind::TargetAmplitude => self.target_grid_db.clone().unwrap_or_else(default_target_grid),
            _ => vec![self.target_db.unwrap_or(9.0)],
        };
        let widths = match kind {
            SweepKind::ScanRange => self.widths.clone().unwrap_or_else(default_scan_widths),
            _ => vec![self.width.unwrap_or(30)],
        };
        let spec = SweepSpec {
            kind,
            message_db,
            target_db,
            widths,
            train_per_key: self.train_per_key.unwrap_or(200),
            test_per_key: self.test_per_key.unwrap_or(90),
            cnn_holdout_per_key: self.cnn_holdout_per_key.unwrap_or(30),
            gnn_epochs: self.gnn_epochs.unwrap_or(150),
            gnn_learning_rate: self.gnn_learning_rate.unwrap_or(0.001),
            gnn_input_encoding: self.gnn_input_encoding.unwrap_or_default(),
            cnn_epochs: self.cnn_epochs.unwrap_or(10),
            seed: self.seed.unwrap_or(0),
            replicates: self.replicates.unwrap_or(3),
            dropout_reading: self.dropout_reading.unwrap_or_default(),
            workers: self.workers.unwrap_or(1),
            output_dir: self.output_dir.clone().unwrap_or_else(|| PathBuf::from("runs")),
        };
        problems.extend(spec.problems());
        if problems.is_empty() {
            Ok(spec)
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// A fully resolved sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub kind: SweepKind,
    /// Message levels |α_m| in dB.
    pub message_db: Vec<f64>,
    /// Target levels |α′| in dB; a single entry unless the sweep varies it.
    pub target_db: Vec<f64>,
    /// Image widths; a single entry unless the sweep varies the scan range.
    pub widths: Vec<usize>,
    pub train_per_key: usize,
    pub test_per_key: usize,
    /// Trailing entries of each target key block the CNN holds out.
    pub cnn_holdout_per_key: usize,
    pub gnn_epochs: usize,
    pub gnn_learning_rate: f64,
    pub gnn_input_encoding: InputEncoding,
    pub cnn_epochs: usize,
    pub seed: u64,
    pub replicates: usize,
    pub dropout_reading: DropoutReading,
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl SweepSpec {
    /// Full-size defaults for `kind`.
    pub fn defaults(kind: SweepKind) -> Self {
        ExperimentConfig {
            sweep: Some(kind),
            ..Default::default()
        }
        .resolve()
        .expect("defaults are valid")
    }

    fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let finite = |name: &str, v: &[f64], p: &mut Vec<String>| {
            if v.is_empty() {
                p.push(format!("`{name}` must not be empty"));
            }
            if let Some(x) = v.iter().find(|x| !x.is_finite()) {
                p.push(format!("`{name}` contains non-finite level {x}"));
            }
        };
        finite("message_db", &self.message_db, &mut p);
        finite("target_db", &self.target_db, &mut p);
        if self.widths.is_empty() {
            p.push("`widths` must not be empty".into());
        }
        for &w in &self.widths {
            if w % 2 != 0 || !(4..=30).contains(&w) {
                p.push(format!("width {w} is not even and in [4, 30]"));
            }
        }
        if self.train_per_key == 0 || self.test_per_key == 0 {
            p.push("`train_per_key` and `test_per_key` must be positive".into());
        }
        if self.cnn_holdout_per_key >= self.train_per_key {
            p.push(format!(
                "`cnn_holdout_per_key` ({}) must be below `train_per_key` ({})",
                self.cnn_holdout_per_key, self.train_per_key
            ));
        }
        if !(self.gnn_learning_rate > 0.0 && self.gnn_learning_rate.is_finite()) {
            p.push(format!("`gnn_learning_rate` {} must be positive", self.gnn_learning_rate));
        }
        if self.replicates == 0 {
            p.push("`replicates` must be at least 1".into());
        }
        if self.workers == 0 {
            p.push("`workers` must be at least 1".into());
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// Digest of every setting that affects results (not `workers` or
    /// `output_dir`).
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        let digest = Sha256::digest(json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// `<output_dir>/<hash>-s<seed>`.
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir
            .join(format!("{}-s{}", self.config_hash(), self.seed))
    }

    pub fn snapshot(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }
}

/// Deterministic sub-seed for one artifact: SHA-256 over the base seed, a
/// tag and integer coordinates (levels enter as their bit patterns).
pub fn derive_seed(base: u64, tag: &str, parts: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag.as_bytes());
    for p in parts {
        h.update(p.to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// Receiver variant of a result row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    HdCnn,
    HdGnnCnn,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::HdCnn => "hd-cnn",
            Variant::HdGnnCnn => "hd-gnn-cnn",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hd-cnn" => Ok(Variant::HdCnn),
            "hd-gnn-cnn" => Ok(Variant::HdGnnCnn),
            _ => Err(Error::InvalidArgument(format!("unknown variant `{s}`"))),
        }
    }
}

/// One evaluated receiver variant at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// dB for amplitude sweeps, γ_max/π for scan-range sweeps.
    pub coordinate: f64,
    pub variant: Variant,
    pub p_network: f64,
    pub p_err: f64,
    pub p_relative: f64,
    pub p_relative_hd: f64,
    pub p_hel: f64,
    /// Seed of the replicate that produced the row.
    pub seed: u64,
    pub replicate: usize,
    /// Message level of the test set.
    pub message_db: f64,
}

pub const CSV_HEADER: &str =
    "coordinate,variant,p_network,p_err,p_relative,p_relative_hd,p_hel,seed,replicate,message_db";

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{:.16e}",
            self.coordinate,
            self.variant.as_str(),
            self.p_network,
            self.p_err,
            self.p_relative,
            self.p_relative_hd,
            self.p_hel,
            self.seed,
            self.replicate,
            self.message_db
        )
    }

    pub fn from_csv_line(line: &str) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            kind: "results CSV",
            reason,
        };
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 10 {
            return Err(bad(format!("expected 10 fields, found {}", f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse().map_err(|_| bad(format!("field {} `{}` is not a number", i + 1, f[i])))
        };
        Ok(ResultRow {
            coordinate: num(0)?,
            variant: f[1].parse()?,
            p_network: num(2)?,
            p_err: num(3)?,
            p_relative: num(4)?,
            p_relative_hd: num(5)?,
            p_hel: num(6)?,
            seed: f[7].parse().map_err(|_| bad(format!("bad seed `{}`", f[7])))?,
            replicate: f[8].parse().map_err(|_| bad(format!("bad replicate `{}`", f[8])))?,
            message_db: num(9)?,
        })
    }
}

/// Writes the results CSV for `rows`.
pub fn write_results<W: Write>(rows: &[ResultRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.to_csv_line())?;
    }
    Ok(())
}

pub fn results_to_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_results(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ASCII output")
}

pub fn read_results(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == CSV_HEADER => {}
        other => {
            return Err(Error::Format {
                kind: "results CSV",
                reason: format!("unexpected header {other:?}"),
            })
        }
    }
    lines.filter(|l| !l.trim().is_empty()).map(ResultRow::from_csv_line).collect()
}

/// Writes `rows` to `path` atomically and, when `plot` is given, an SVG of
/// `p_relative` against the sweep coordinate.
pub fn emit_results(rows: &[ResultRow], path: &Path, plot: Option<(&Path, &str)>) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no result rows to emit".into()));
    }
    write_atomic(path, results_to_string(rows).as_bytes())?;
    if let Some((plot_path, x_label)) = plot {
        write_atomic(plot_path, render_svg(rows, x_label).as_bytes())?;
    }
    Ok(())
}

/// Runs a target-amplitude sweep under `spec.output_dir`.
pub fn sweep_target_amplitude(spec: &SweepSpec) -> Result<SweepOutcome> {
    expect_kind(spec, SweepKind::TargetAmplitude)?;
    run_sweep(spec, &|_| {})
}

/// Runs a scan-range sweep under `spec.output_dir`.
pub fn sweep_scan_range(spec: &SweepSpec) -> Result<SweepOutcome> {
    expect_kind(spec, SweepKind::ScanRange)?;
    run_sweep(spec, &|_| {})
}

/// Runs a message-amplitude sweep under `spec.output_dir`.
pub fn sweep_message_amplitude(spec: &SweepSpec) -> Result<SweepOutcome> {
    expect_kind(spec, SweepKind::MessageAmplitude)?;
    run_sweep(spec, &|_| {})
}

fn expect_kind(spec: &SweepSpec, kind: SweepKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::InvalidArgument(format!(
            "expected a {kind} spec, got {}",
            spec.kind
        )));
    }
    Ok(())
}
