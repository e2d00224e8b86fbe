use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{derive_seed, results_to_string, ExperimentConfig, ResultRow, SweepKind, SweepSpec, Variant};
use crate::error::{Error, Result};
use crate::homodyne::{
    generate_dataset, read_dataset, slice_scan, write_dataset, DatasetRole, HomodyneDataset, LoScan,
};
use crate::io::write_atomic;
use crate::neuralnet::{load_network, save_network, Network};
use crate::receiver::{evaluate, train_cnn, train_gnn, CnnConfig, CnnReport, EvalReport, GnnConfig};

/// A sweep point that could not be produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobFailure {
    pub job: String,
    pub message: String,
}

/// What a sweep run produced.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub run_dir: PathBuf,
    /// All rows in sweep order, including those restored from earlier runs.
    pub rows: Vec<ResultRow>,
    pub failures: Vec<JobFailure>,
    pub models_trained: usize,
    pub jobs_evaluated: usize,
    pub jobs_skipped: usize,
}

impl SweepOutcome {
    pub fn results_path(&self) -> PathBuf {
        self.run_dir.join("results.csv")
    }
}

/// One (target, width, message, replicate) point; yields both variants.
#[derive(Debug, Clone)]
struct Job {
    coordinate: f64,
    message_db: f64,
    target_db: f64,
    width: usize,
    rep: usize,
    rep_seed: u64,
}

impl Job {
    fn name(&self) -> String {
        format!("m{}_t{}_w{}_r{}", self.message_db, self.target_db, self.width, self.rep)
    }

    fn cnn(&self) -> ModelKey {
        ModelKey::Cnn {
            target_db: self.target_db,
            width: self.width,
            rep: self.rep,
            rep_seed: self.rep_seed,
        }
    }

    fn gnn(&self) -> ModelKey {
        ModelKey::Gnn {
            message_db: self.message_db,
            target_db: self.target_db,
            width: self.width,
            rep: self.rep,
            rep_seed: self.rep_seed,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum ModelKey {
    Cnn {
        target_db: f64,
        width: usize,
        rep: usize,
        rep_seed: u64,
    },
    Gnn {
        message_db: f64,
        target_db: f64,
        width: usize,
        rep: usize,
        rep_seed: u64,
    },
}

impl ModelKey {
    fn name(&self) -> String {
        match *self {
            ModelKey::Cnn {
                target_db, width, rep, ..
            } => format!("cnn_t{target_db}_w{width}_r{rep}"),
            ModelKey::Gnn {
                message_db,
                target_db,
                width,
                rep,
                ..
            } => format!("gnn_m{message_db}_t{target_db}_w{width}_r{rep}"),
        }
    }
}

/// Full-scan datasets a run draws from, keyed by role, level and replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct DataKey {
    role: u8,
    level_bits: u64,
    rep: usize,
}

impl DataKey {
    fn noisy(db: f64, rep: usize) -> Self {
        DataKey { role: 0, level_bits: db.to_bits(), rep }
    }

    fn target(db: f64, rep: usize) -> Self {
        DataKey { role: 1, level_bits: db.to_bits(), rep }
    }

    fn test(db: f64, rep: usize) -> Self {
        DataKey { role: 2, level_bits: db.to_bits(), rep }
    }

    fn role(&self) -> DatasetRole {
        match self.role {
            0 => DatasetRole::GnnInput,
            1 => DatasetRole::GnnTarget,
            _ => DatasetRole::Test,
        }
    }

    fn db(&self) -> f64 {
        f64::from_bits(self.level_bits)
    }

    fn file_name(&self) -> String {
        let tag = match self.role() {
            DatasetRole::GnnInput => "gnn-input",
            DatasetRole::GnnTarget => "gnn-target",
            DatasetRole::CnnTrain => "cnn-train",
            DatasetRole::Test => "test",
        };
        format!("{tag}_{}_r{}.qhd", self.db(), self.rep)
    }

    fn seed(&self, rep_seed: u64) -> u64 {
        // training and test sets draw from separately tagged seeds
        let tag = match self.role() {
            DatasetRole::Test => "test-set",
            _ => "training-set",
        };
        derive_seed(rep_seed, tag, &[self.role as u64, self.level_bits])
    }
}

fn jobs(spec: &SweepSpec) -> Vec<Job> {
    let mut out = Vec::new();
    for &target_db in &spec.target_db {
        for &width in &spec.widths {
            for &message_db in &spec.message_db {
                for rep in 0..spec.replicates {
                    let coordinate = match spec.kind {
                        SweepKind::TargetAmplitude => target_db,
                        SweepKind::ScanRange => LoScan::reference_slice(width)
                            .map(|s| s.range_over_pi())
                            .unwrap_or(f64::NAN),
                        SweepKind::MessageAmplitude => message_db,
                    };
                    out.push(Job {
                        coordinate,
                        message_db,
                        target_db,
                        width,
                        rep,
                        rep_seed: derive_seed(spec.seed, "replicate", &[rep as u64]),
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct RowArtifact {
    rows: Vec<ResultRow>,
    reports: Vec<EvalReport>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GnnArtifact {
    seed: u64,
    epoch_losses: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CnnArtifact {
    seed: u64,
    report: CnnReport,
}

/// Loads, resolves and runs the sweep described by a TOML config file.
pub fn run_config(path: &Path, plot: bool, log: &(dyn Fn(&str) + Sync)) -> Result<SweepOutcome> {
    let spec = ExperimentConfig::load(path)?.resolve()?;
    run_sweep_with(&spec, plot, log)
}

/// Runs `spec` under its run directory, reusing every artifact already
/// present, and writes `results.csv`.
pub fn run_sweep(spec: &SweepSpec, log: &(dyn Fn(&str) + Sync)) -> Result<SweepOutcome> {
    run_sweep_with(spec, false, log)
}

/// [`run_sweep`] that also renders `results.svg` when `plot` is set.
pub fn run_sweep_with(spec: &SweepSpec, plot: bool, log: &(dyn Fn(&str) + Sync)) -> Result<SweepOutcome> {
    spec.validate()?;
    let run_dir = spec.run_dir();
    let (data_dir, model_dir, row_dir) = (run_dir.join("datasets"), run_dir.join("models"), run_dir.join("rows"));
    for d in [&run_dir, &data_dir, &model_dir, &row_dir] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let snapshot = run_dir.join("config.snapshot");
    if !snapshot.exists() {
        write_atomic(&snapshot, spec.snapshot().as_bytes())?;
    }

    let all = jobs(spec);
    let mut finished: Vec<Option<Vec<ResultRow>>> = vec![None; all.len()];
    let mut pending = Vec::new();
    for (i, job) in all.iter().enumerate() {
        let path = row_dir.join(format!("{}.json", job.name()));
        match std::fs::read(&path).ok().and_then(|b| serde_json::from_slice::<RowArtifact>(&b).ok()) {
            Some(a) => finished[i] = Some(a.rows),
            None => pending.push(i),
        }
    }
    let jobs_skipped = all.len() - pending.len();
    log(&format!(
        "{}: {} points, {} already done",
        run_dir.display(),
        all.len(),
        jobs_skipped
    ));

    // datasets, generated once on the full scan
    let mut needed = BTreeMap::new();
    for &i in &pending {
        let j = &all[i];
        for (key, n) in [
            (DataKey::noisy(j.message_db, j.rep), spec.train_per_key),
            (DataKey::target(j.target_db, j.rep), spec.train_per_key),
            (DataKey::test(j.message_db, j.rep), spec.test_per_key),
        ] {
            needed.insert(key, (n, j.rep_seed));
        }
    }
    let mut data: BTreeMap<DataKey, Arc<HomodyneDataset>> = BTreeMap::new();
    for (key, (n, rep_seed)) in needed {
        let ds = load_or_generate(&data_dir.join(key.file_name()), key, n, key.seed(rep_seed))?;
        data.insert(key, Arc::new(ds));
    }
    let sliced = |key: DataKey, width: usize| -> Result<HomodyneDataset> {
        let full = &data[&key];
        if width == full.width() {
            Ok((**full).clone())
        } else {
            slice_scan(full, width)
        }
    };

    // models, each trained at most once
    let mut model_keys: BTreeMap<String, ModelKey> = BTreeMap::new();
    for &i in &pending {
        for k in [all[i].cnn(), all[i].gnn()] {
            model_keys.entry(k.name()).or_insert(k);
        }
    }
    let model_list: Vec<(String, ModelKey)> = model_keys.into_iter().collect();
    let trained = AtomicUsize::new(0);
    let models: Vec<std::result::Result<Network, String>> = pool_map(spec.workers, &model_list, |(name, key)| {
        let path = model_dir.join(format!("{name}.qnn"));
        if let Ok(net) = load_network(&path) {
            return Ok(net);
        }
        log(&format!("training {name}"));
        let net = train_model(spec, *key, &sliced, &model_dir, name).map_err(|e| e.to_string())?;
        save_network(&net, &path).map_err(|e| e.to_string())?;
        trained.fetch_add(1, Ordering::Relaxed);
        Ok(net)
    });
    let models: BTreeMap<&str, &std::result::Result<Network, String>> =
        model_list.iter().map(|(n, _)| n.as_str()).zip(&models).collect();

    // evaluation of both variants per point
    let failures = Mutex::new(Vec::new());
    let evaluated: Vec<Option<Vec<ResultRow>>> = pool_map(spec.workers, &pending, |&i| {
        let job = &all[i];
        let result = (|| -> std::result::Result<Vec<ResultRow>, String> {
            let cnn = models[job.cnn().name().as_str()].as_ref().map_err(|e| format!("CNN: {e}"))?;
            let gnn = models[job.gnn().name().as_str()].as_ref().map_err(|e| format!("GNN: {e}"))?;
            let test = sliced(DataKey::test(job.message_db, job.rep), job.width).map_err(|e| e.to_string())?;
            let mut rows = Vec::with_capacity(2);
            let mut reports = Vec::with_capacity(2);
            for (variant, g) in [(Variant::HdCnn, None), (Variant::HdGnnCnn, Some(gnn))] {
                let r = evaluate(&test, cnn, g).map_err(|e| e.to_string())?;
                rows.push(ResultRow {
                    coordinate: job.coordinate,
                    variant,
                    p_network: r.p_network,
                    p_err: r.p_err,
                    p_relative: r.p_relative,
                    p_relative_hd: r.p_relative_hd,
                    p_hel: r.p_hel,
                    seed: job.rep_seed,
                    replicate: job.rep,
                    message_db: job.message_db,
                });
                reports.push(r);
            }
            let artifact = serde_json::to_vec_pretty(&RowArtifact {
                rows: rows.clone(),
                reports,
            })
            .map_err(|e| e.to_string())?;
            write_atomic(&row_dir.join(format!("{}.json", job.name())), &artifact).map_err(|e| e.to_string())?;
            Ok(rows)
        })();
        match result {
            Ok(rows) => Some(rows),
            Err(message) => {
                log(&format!("{} failed: {message}", job.name()));
                failures.lock().unwrap().push(JobFailure {
                    job: job.name(),
                    message,
                });
                None
            }
        }
    });
    let jobs_evaluated = evaluated.iter().filter(|r| r.is_some()).count();
    for (&i, rows) in pending.iter().zip(evaluated) {
        finished[i] = rows;
    }

    let mut failures = failures.into_inner().unwrap();
    failures.sort_by(|a, b| a.job.cmp(&b.job));
    let failure_path = run_dir.join("failures.json");
    if failures.is_empty() {
        let _ = std::fs::remove_file(&failure_path);
    } else {
        write_atomic(&failure_path, &serde_json::to_vec_pretty(&failures)?)?;
    }

    let rows: Vec<ResultRow> = finished.into_iter().flatten().flatten().collect();
    let outcome = SweepOutcome {
        run_dir,
        rows,
        failures,
        models_trained: trained.into_inner(),
        jobs_evaluated,
        jobs_skipped,
    };
    if !outcome.rows.is_empty() {
        write_if_changed(&outcome.results_path(), results_to_string(&outcome.rows).as_bytes())?;
        if plot {
            let x_label = match spec.kind {
                SweepKind::TargetAmplitude => "target level |α′| (dB)",
                SweepKind::ScanRange => "LO scan range (γ_max / π)",
                SweepKind::MessageAmplitude => "message level |α_m| (dB)",
            };
            let svg = super::render_svg(&outcome.rows, x_label);
            write_if_changed(&outcome.run_dir.join("results.svg"), svg.as_bytes())?;
        }
    }
    Ok(outcome)
}

fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<()> {
    if std::fs::read(path).is_ok_and(|old| old == bytes) {
        return Ok(());
    }
    write_atomic(path, bytes)
}

fn load_or_generate(path: &Path, key: DataKey, per_key: usize, seed: u64) -> Result<HomodyneDataset> {
    if let Ok(ds) = read_dataset(path) {
        let full = ds.scan.total_points == LoScan::full().total_points;
        if ds.seed == seed && ds.per_key() == per_key && ds.signal_db == key.db() && full {
            return Ok(ds);
        }
    }
    let ds = generate_dataset(key.db(), per_key, LoScan::full(), seed, key.role())?;
    write_dataset(&ds, path)?;
    Ok(ds)
}

fn train_model(
    spec: &SweepSpec,
    key: ModelKey,
    sliced: &(dyn Fn(DataKey, usize) -> Result<HomodyneDataset> + Sync),
    model_dir: &Path,
    name: &str,
) -> Result<Network> {
    match key {
        ModelKey::Cnn {
            target_db,
            width,
            rep,
            rep_seed,
        } => {
            let labeled = sliced(DataKey::target(target_db, rep), width)?;
            let seed = derive_seed(rep_seed, "cnn", &[target_db.to_bits(), width as u64]);
            let cfg = CnnConfig {
                epochs: spec.cnn_epochs,
                train_per_key: spec.train_per_key - spec.cnn_holdout_per_key,
                test_per_key: spec.cnn_holdout_per_key,
                dropout_reading: spec.dropout_reading,
                ..CnnConfig::new(width, seed)
            };
            let (net, report) = train_cnn(&labeled, &cfg)?;
            let meta = serde_json::to_vec_pretty(&CnnArtifact { seed, report })?;
            write_atomic(&model_dir.join(format!("{name}.json")), &meta)?;
            Ok(net)
        }
        ModelKey::Gnn {
            message_db,
            target_db,
            width,
            rep,
            rep_seed,
        } => {
            let noisy = sliced(DataKey::noisy(message_db, rep), width)?;
            let targets = sliced(DataKey::target(target_db, rep), width)?;
            let seed = derive_seed(
                rep_seed,
                "gnn",
                &[message_db.to_bits(), target_db.to_bits(), width as u64],
            );
            let cfg = GnnConfig {
                epochs: spec.gnn_epochs,
                learning_rate: spec.gnn_learning_rate,
                input_encoding: spec.gnn_input_encoding,
                dropout_reading: spec.dropout_reading,
                ..GnnConfig::new(width, seed)
            };
            let (net, epoch_losses) = train_gnn(&noisy, &targets, &cfg)?;
            let meta = serde_json::to_vec_pretty(&GnnArtifact { seed, epoch_losses })?;
            write_atomic(&model_dir.join(format!("{name}.json")), &meta)?;
            Ok(net)
        }
    }
}

/// Applies `f` to every item on up to `workers` threads; results keep the
/// item order.
fn pool_map<T: Sync, R: Send>(workers: usize, items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.min(items.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|r| r.expect("every item ran")).collect()
}

/// File names under `rows/` of the per-point artifacts a spec produces, in
/// sweep order. Deleting one makes the next run re-evaluate that point.
pub fn row_artifact_names(spec: &SweepSpec) -> Vec<String> {
    let names: Vec<String> = jobs(spec).iter().map(|j| format!("{}.json", j.name())).collect();
    debug_assert_eq!(names.iter().collect::<BTreeSet<_>>().len(), names.len());
    names
}
