use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{normalize_to_image, sample_trace, LoScan, QuadratureImage, REFERENCE_GRID_POINTS};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::limits::{Amplitude, QpskKey};

const MAGIC: &[u8; 4] = b"QHD1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetRole {
    GnnInput,
    GnnTarget,
    CnnTrain,
    Test,
}

impl std::str::FromStr for DatasetRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gnn-input" => Ok(DatasetRole::GnnInput),
            "gnn-target" => Ok(DatasetRole::GnnTarget),
            "cnn-train" => Ok(DatasetRole::CnnTrain),
            "test" => Ok(DatasetRole::Test),
            other => Err(Error::InvalidArgument(format!("unknown dataset role `{other}`"))),
        }
    }
}

/// Labeled homodyne images sharing one scan geometry, grouped in equal
/// per-key blocks (all key-1 images first, then key 2, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct HomodyneDataset {
    pub entries: Vec<(QuadratureImage, QpskKey)>,
    pub signal_db: f64,
    pub scan: LoScan,
    pub seed: u64,
    pub role: DatasetRole,
}

impl HomodyneDataset {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn width(&self) -> usize {
        self.scan.width()
    }

    pub fn per_key(&self) -> usize {
        self.entries.len() / 4
    }

    pub fn amplitude(&self) -> Amplitude {
        Amplitude::from_db(self.signal_db)
    }

    /// Checks block structure and image geometry.
    pub fn validate(&self) -> Result<()> {
        self.scan.validate()?;
        if self.entries.len() % 4 != 0 {
            return Err(Error::Dataset(format!(
                "{} entries do not split into four key blocks",
                self.entries.len()
            )));
        }
        let per_key = self.per_key();
        for (i, (img, key)) in self.entries.iter().enumerate() {
            if img.width() != self.width() {
                return Err(Error::Dataset(format!(
                    "entry {i} has width {} but scan width is {}",
                    img.width(),
                    self.width()
                )));
            }
            if key.class() != i / per_key.max(1) {
                return Err(Error::Dataset(format!("entry {i} breaks key-block ordering")));
            }
        }
        Ok(())
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            magic: String::from_utf8_lossy(MAGIC).into_owned(),
            width: self.width(),
            per_key: self.per_key(),
            signal_db: self.signal_db,
            seed: self.seed,
            role: self.role,
            gamma_max: self.scan.gamma_max,
            base_grid_points: self.scan.base_grid_points,
            lo_amplitude: self.scan.lo_amplitude,
            entries: self.entries.len(),
        }
    }
}

/// Simulates `n_per_key` normalized images per QPSK key.
///
/// Entry `i` draws from its own ChaCha stream `(seed, i)`, so the output is a
/// pure function of the arguments.
pub fn generate_dataset(
    signal_db: f64,
    n_per_key: usize,
    scan: LoScan,
    seed: u64,
    role: DatasetRole,
) -> Result<HomodyneDataset> {
    if n_per_key == 0 {
        return Err(Error::InvalidArgument("n_per_key must be at least 1".into()));
    }
    if !signal_db.is_finite() {
        return Err(Error::InvalidArgument(format!("signal level {signal_db} dB")));
    }
    scan.validate()?;
    let a = Amplitude::from_db(signal_db);
    let mut entries = Vec::with_capacity(4 * n_per_key);
    for key in QpskKey::ALL {
        for j in 0..n_per_key {
            let index = key.class() * n_per_key + j;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index as u64);
            let raw = sample_trace(key, a, &scan, &mut rng);
            entries.push((normalize_to_image(&raw, scan.lo_amplitude)?, key));
        }
    }
    Ok(HomodyneDataset {
        entries,
        signal_db,
        scan,
        seed,
        role,
    })
}

/// Keeps the first `target_width²` LO phases of every full-scan trace.
pub fn slice_scan(ds: &HomodyneDataset, target_width: usize) -> Result<HomodyneDataset> {
    if ds.scan.total_points != REFERENCE_GRID_POINTS
        || (ds.scan.gamma_max - std::f64::consts::TAU).abs() > 1e-12
    {
        return Err(Error::InvalidArgument(
            "slicing requires a dataset on the full 900-point 2π scan".into(),
        ));
    }
    if target_width % 2 != 0 || !(4..=30).contains(&target_width) {
        return Err(Error::InvalidArgument(format!(
            "slice width must be even and in [4, 30], got {target_width}"
        )));
    }
    let scan = LoScan {
        lo_amplitude: ds.scan.lo_amplitude,
        ..LoScan::reference_slice(target_width)?
    };
    let m = scan.total_points;
    let entries = ds
        .entries
        .iter()
        .map(|(img, key)| {
            // pixel normalization is pointwise, so slicing pixels equals
            // re-normalizing the sliced trace
            let pixels = img.pixels()[..m].to_vec();
            QuadratureImage::from_pixels(target_width, pixels).map(|im| (im, *key))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HomodyneDataset {
        entries,
        scan,
        ..ds.clone()
    })
}

/// Human-readable sidecar duplicating the binary header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub magic: String,
    pub width: usize,
    pub per_key: usize,
    pub signal_db: f64,
    pub seed: u64,
    pub role: DatasetRole,
    pub gamma_max: f64,
    pub base_grid_points: usize,
    pub lo_amplitude: f64,
    pub entries: usize,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

fn encode(ds: &HomodyneDataset) -> Vec<u8> {
    let w = ds.width();
    let mut buf = Vec::with_capacity(32 + ds.len() * (1 + 8 * w * w));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(w as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.per_key() as u32).to_le_bytes());
    buf.extend_from_slice(&ds.signal_db.to_le_bytes());
    buf.extend_from_slice(&ds.seed.to_le_bytes());
    for (img, key) in &ds.entries {
        buf.push(key.index());
        for p in img.pixels() {
            buf.extend_from_slice(&p.to_le_bytes());
        }
    }
    buf
}

/// Writes the `QHD1` binary file and its `.meta.json` sidecar.
pub fn write_dataset(ds: &HomodyneDataset, path: &Path) -> Result<()> {
    ds.validate()?;
    write_atomic(path, &encode(ds))?;
    let meta = serde_json::to_vec_pretty(&ds.meta())?;
    write_atomic(&sidecar_path(path), &meta)
}

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        kind: "dataset",
        reason: reason.into(),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format_err("unexpected end of file"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Reads a `QHD1` file. The sidecar, when present, supplies role and scan
/// metadata; otherwise the reference-grid slice for the stored width and a
/// `test` role are assumed.
pub fn read_dataset(path: &Path) -> Result<HomodyneDataset> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(format_err("bad magic bytes"));
    }
    let width = cur.u32()? as usize;
    let per_key = cur.u32()? as usize;
    let signal_db = cur.f64()?;
    let seed = cur.u64()?;

    let sidecar = sidecar_path(path);
    let meta: Option<DatasetMeta> = if sidecar.exists() {
        let text = fs::read(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        Some(serde_json::from_slice(&text)?)
    } else {
        None
    };
    let mut scan = LoScan::reference_slice(width)?;
    let mut role = DatasetRole::Test;
    if let Some(m) = &meta {
        if m.width != width || m.per_key != per_key || m.seed != seed {
            return Err(format_err("sidecar disagrees with binary header"));
        }
        scan.gamma_max = m.gamma_max;
        scan.base_grid_points = m.base_grid_points;
        scan.lo_amplitude = m.lo_amplitude;
        scan.validate()?;
        role = m.role;
    }

    let mut entries = Vec::with_capacity(4 * per_key);
    for _ in 0..4 * per_key {
        let key = QpskKey::new(cur.take(1)?[0])?;
        let pixels = (0..width * width)
            .map(|_| cur.f64())
            .collect::<Result<Vec<_>>>()?;
        entries.push((QuadratureImage::from_pixels(width, pixels)?, key));
    }
    if cur.pos != bytes.len() {
        return Err(format_err("trailing bytes after last entry"));
    }
    let ds = HomodyneDataset {
        entries,
        signal_db,
        scan,
        seed,
        role,
    };
    ds.validate()?;
    Ok(ds)
}
