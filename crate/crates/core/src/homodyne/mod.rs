//! Monte Carlo balanced homodyne detection of QPSK coherent states.
//!
//! The local oscillator phase γ is scanned over a uniform half-open grid; at
//! each grid point the difference count is Gaussian with mean
//! `2|β||α|cos(γ − φ)` and variance `|β|²`. Traces are mapped to images
//! through a fixed quadrature window so that amplitude information survives
//! normalization.

mod dataset;

pub use dataset::{
    generate_dataset, read_dataset, slice_scan, write_dataset, DatasetMeta, DatasetRole,
    HomodyneDataset,
};

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limits::{Amplitude, QpskKey};

/// Points on the full 0..2π reference scan.
pub const REFERENCE_GRID_POINTS: usize = 900;
pub const DEFAULT_LO_AMPLITUDE: f64 = 100.0;

/// Half-width of the fixed quadrature window mapped onto pixel range [0, 1].
pub const QUADRATURE_WINDOW: f64 = 10.0;

/// Geometry of the local-oscillator phase scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoScan {
    pub total_points: usize,
    pub gamma_max: f64,
    pub base_grid_points: usize,
    pub lo_amplitude: f64,
}

impl LoScan {
    /// The full 30×30 scan over [0, 2π).
    pub fn full() -> Self {
        Self::reference_slice(30).expect("30 is a valid width")
    }

    /// The first `width²` points of the 900-point reference grid, covering
    /// LO phases `[0, (width²/900)·2π)`.
    pub fn reference_slice(width: usize) -> Result<Self> {
        let total_points = width * width;
        let scan = LoScan {
            total_points,
            gamma_max: total_points as f64 / REFERENCE_GRID_POINTS as f64 * TAU,
            base_grid_points: REFERENCE_GRID_POINTS,
            lo_amplitude: DEFAULT_LO_AMPLITUDE,
        };
        scan.validate()?;
        Ok(scan)
    }

    pub fn with_lo_amplitude(mut self, beta: f64) -> Result<Self> {
        self.lo_amplitude = beta;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.width();
        if w * w != self.total_points || !(16..=900).contains(&self.total_points) {
            return Err(Error::InvalidArgument(format!(
                "scan must have a perfect-square point count in [16, 900], got {}",
                self.total_points
            )));
        }
        if !(self.lo_amplitude > 0.0) || !self.lo_amplitude.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "LO amplitude must be positive, got {}",
                self.lo_amplitude
            )));
        }
        if !(self.gamma_max > 0.0) || !self.gamma_max.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "scan range must be positive, got {}",
                self.gamma_max
            )));
        }
        Ok(())
    }

    /// Image side length `W` with `W² = total_points` (rounded down).
    pub fn width(&self) -> usize {
        integer_sqrt(self.total_points)
    }

    /// LO phase of grid point `i`: `gamma_max·i/M`.
    pub fn gamma(&self, i: usize) -> f64 {
        self.gamma_max * i as f64 / self.total_points as f64
    }

    /// Scan range in units of π.
    pub fn range_over_pi(&self) -> f64 {
        self.gamma_max / std::f64::consts::PI
    }
}

pub(crate) fn integer_sqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Expected balanced-detector difference count `2β|α|cos(γ − φ)`.
pub fn homodyne_mean(a: Amplitude, phi: f64, gamma: f64, beta: f64) -> f64 {
    2.0 * beta * a.linear() * (gamma - phi).cos()
}

/// Draws one homodyne trace: one Gaussian difference count per scan point.
pub fn sample_trace<R: Rng + ?Sized>(
    key: QpskKey,
    a: Amplitude,
    scan: &LoScan,
    rng: &mut R,
) -> Vec<f64> {
    let beta = scan.lo_amplitude;
    let phi = key.phase();
    (0..scan.total_points)
        .map(|i| {
            let z: f64 = StandardNormal.sample(rng);
            homodyne_mean(a, phi, scan.gamma(i), beta) + beta * z
        })
        .collect()
}

/// Noise-free trace (the per-point means) for `key` at amplitude `a`.
pub fn mean_trace(key: QpskKey, a: Amplitude, scan: &LoScan) -> Vec<f64> {
    (0..scan.total_points)
        .map(|i| homodyne_mean(a, key.phase(), scan.gamma(i), scan.lo_amplitude))
        .collect()
}

/// A `W×W` grid of homodyne samples, row-major in LO-phase order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureImage {
    width: usize,
    pixels: Vec<f64>,
    raw_units: bool,
}

impl QuadratureImage {
    /// Wraps normalized pixels; every value must lie in [0, 1].
    pub fn from_pixels(width: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * width {
            return Err(Error::Shape(format!(
                "{} pixels cannot form a {width}x{width} image",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!(
                "normalized pixel {p} outside [0, 1]"
            )));
        }
        Ok(QuadratureImage {
            width,
            pixels,
            raw_units: false,
        })
    }

    /// Wraps raw difference counts without normalization.
    pub fn from_raw(raw: Vec<f64>) -> Result<Self> {
        let width = integer_sqrt(raw.len());
        if width * width != raw.len() {
            return Err(Error::Shape(format!(
                "trace of {} samples is not a perfect square",
                raw.len()
            )));
        }
        Ok(QuadratureImage {
            width,
            pixels: raw,
            raw_units: true,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn is_raw(&self) -> bool {
        self.raw_units
    }

    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }
}

/// Maps a difference count to a pixel: `q = n/(2β)`, then
/// `clamp((q + 10)/20, 0, 1)`.
pub fn count_to_pixel(n: f64, beta: f64) -> f64 {
    let q = n / (2.0 * beta);
    ((q + QUADRATURE_WINDOW) / (2.0 * QUADRATURE_WINDOW)).clamp(0.0, 1.0)
}

/// Inverse of [`count_to_pixel`] for unclamped pixels.
pub fn pixel_to_count(p: f64, beta: f64) -> f64 {
    (p * 2.0 * QUADRATURE_WINDOW - QUADRATURE_WINDOW) * 2.0 * beta
}

pub fn normalize_to_image(raw: &[f64], beta: f64) -> Result<QuadratureImage> {
    let width = integer_sqrt(raw.len());
    if width * width != raw.len() || raw.is_empty() {
        return Err(Error::Shape(format!(
            "trace of {} samples is not a perfect square",
            raw.len()
        )));
    }
    Ok(QuadratureImage {
        width,
        pixels: raw.iter().map(|&n| count_to_pixel(n, beta)).collect(),
        raw_units: false,
    })
}

/// Normalized noise-free image of `key` at amplitude `a`.
pub fn template_image(key: QpskKey, a: Amplitude, scan: &LoScan) -> QuadratureImage {
    normalize_to_image(&mean_trace(key, a, scan), scan.lo_amplitude)
        .expect("validated scans have square point counts")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn mean_closed_form() {
        let a = Amplitude::new(0.5).unwrap();
        assert!((homodyne_mean(a, 0.3, 0.3, 100.0) - 100.0).abs() < 1e-12);
        assert!(homodyne_mean(a, 0.3, 0.3 + FRAC_PI_2, 100.0).abs() < 1e-12);
        let a = Amplitude::from_db(-10.5);
        assert!((homodyne_mean(a, 1.0, 1.0, 100.0) - 17.825_018_762_674_91).abs() < 1e-9);
    }

    #[test]
    fn vacuum_trace_is_zero_mean_unit_beta_noise() {
        let scan = LoScan::full();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut all = Vec::new();
        for _ in 0..50 {
            all.extend(sample_trace(QpskKey::ALL[0], Amplitude::new(0.0).unwrap(), &scan, &mut rng));
        }
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 5.0 * 100.0 / n.sqrt());
        assert!((var / 1e4 - 1.0).abs() < 0.05);
    }

    #[test]
    fn pixel_mapping_examples() {
        assert_eq!(count_to_pixel(0.0, 100.0), 0.5);
        assert_eq!(count_to_pixel(2.0 * 100.0 * 10.0, 100.0), 1.0);
        assert_eq!(count_to_pixel(-1e6, 100.0), 0.0);
        let p = count_to_pixel(2.0 * 100.0 * 7.943, 100.0);
        assert!((p - 0.897_15).abs() < 1e-12);
        assert!(normalize_to_image(&[0.0; 10], 100.0).is_err());
        let img = normalize_to_image(&[0.0; 16], 100.0).unwrap();
        assert_eq!(img.width(), 4);
        assert!(!img.is_raw());
    }

    #[test]
    fn reference_slices() {
        let s = LoScan::reference_slice(28).unwrap();
        assert_eq!(s.total_points, 784);
        assert!((s.range_over_pi() - 784.0 / 450.0).abs() < 1e-15);
        assert!((LoScan::full().gamma_max - 2.0 * PI).abs() < 1e-15);
        assert!(LoScan::reference_slice(2).is_err());
        assert!(LoScan::reference_slice(31).is_err());
        assert!(LoScan::full().with_lo_amplitude(0.0).is_err());
        // half-open grid: last point is short of gamma_max
        let full = LoScan::full();
        assert!((full.gamma(899) - 2.0 * PI * 899.0 / 900.0).abs() < 1e-15);
    }

    #[test]
    fn template_extremes() {
        let a = Amplitude::from_db(9.0);
        let key = QpskKey::new(1).unwrap();
        let img = template_image(key, a, &LoScan::full());
        let max = img.pixels().iter().cloned().fold(f64::MIN, f64::max);
        // the grid hits γ = π/4 exactly at i = 112.5 only approximately
        assert!(max <= 0.897_164_117_362_140_8 + 1e-12 && max > 0.89);
    }
}
