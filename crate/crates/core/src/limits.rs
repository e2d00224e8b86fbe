//! QPSK constellation, amplitude decibel conversions and the closed-form
//! discrimination bounds (ideal homodyne and Helstrom) together with the
//! compositions used when a trained network sits behind the detector.
//!
//! Amplitude decibels are amplitude decibels: `dB = 10·log10(|α|)`, not of
//! the mean photon number `|α|²`.

use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the four QPSK constellation symbols, indexed 1 to 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct QpskKey(u8);

impl QpskKey {
    pub const ALL: [QpskKey; 4] = [QpskKey(1), QpskKey(2), QpskKey(3), QpskKey(4)];

    pub fn new(k: u8) -> Result<Self> {
        if (1..=4).contains(&k) {
            Ok(QpskKey(k))
        } else {
            Err(Error::InvalidKey(k))
        }
    }

    /// Builds a key from a zero-based class index (0..=3).
    pub fn from_class(class: usize) -> Result<Self> {
        u8::try_from(class + 1)
            .map_err(|_| Error::InvalidKey(u8::MAX))
            .and_then(Self::new)
    }

    /// Symbol index `k` in 1..=4.
    pub fn index(self) -> u8 {
        self.0
    }

    /// Zero-based class index used for one-hot targets.
    pub fn class(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn phase(self) -> f64 {
        (f64::from(self.0) - 0.5) * FRAC_PI_2
    }
}

impl TryFrom<u8> for QpskKey {
    type Error = Error;

    fn try_from(k: u8) -> Result<Self> {
        QpskKey::new(k)
    }
}

impl From<QpskKey> for u8 {
    fn from(k: QpskKey) -> u8 {
        k.0
    }
}

/// Phase `(k − 1/2)·π/2` of QPSK symbol `k`.
pub fn qpsk_phase(k: u8) -> Result<f64> {
    QpskKey::new(k).map(QpskKey::phase)
}

/// Coherent-state magnitude `|α|`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Amplitude(f64);

impl Amplitude {
    pub fn new(linear: f64) -> Result<Self> {
        if linear.is_finite() && linear >= 0.0 {
            Ok(Amplitude(linear))
        } else {
            Err(Error::InvalidArgument(format!(
                "amplitude must be finite and non-negative, got {linear}"
            )))
        }
    }

    pub fn from_db(db: f64) -> Self {
        Amplitude(db_to_linear(db))
    }

    pub fn linear(self) -> f64 {
        self.0
    }

    pub fn to_db(self) -> Result<f64> {
        linear_to_db(self.0)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> Result<f64> {
    if linear > 0.0 && linear.is_finite() {
        Ok(10.0 * linear.log10())
    } else {
        Err(Error::InvalidArgument(format!(
            "decibels undefined for amplitude {linear}"
        )))
    }
}

/// Complementary error function.
pub fn erfc(u: f64) -> f64 {
    libm::erfc(u)
}

/// Error probability of ideal homodyne QPSK discrimination (the standard
/// quantum limit).
pub fn p_err_homodyne(a: Amplitude) -> f64 {
    let e = erfc(a.linear() / SQRT_2);
    e * (1.0 - 0.25 * e)
}

/// Helstrom minimum error probability for the four QPSK coherent states.
///
/// With `s = |α|²`, the damped terms are `A = e^{-s}cosh s = (1 + e^{-2s})/2`,
/// `B = e^{-s}sinh s` and `c, d = e^{-s}cos s, e^{-s}sin s`. Writing the
/// bracket as `2(√2 − D)` with `D = 2·gap(½) + gap(A) + gap(B)`, every gap
/// nonnegative, gives `P = D(2√2 − D)/2` with no cancellation at either
/// end of the amplitude range.
pub fn p_err_helstrom(a: Amplitude) -> f64 {
    let s = a.linear() * a.linear();
    let damp = (-s).exp();
    let e2 = (-2.0 * s).exp();
    let big_a = 0.5 * (1.0 + e2);
    let big_b = -0.5 * (-2.0 * s).exp_m1();
    let (c, d) = (damp * s.cos(), damp * s.sin());
    let (a_minus_c, b_minus_d) = if s < 1.0 {
        (damp * cosh_minus_cos(s), damp * sinh_minus_sin(s))
    } else {
        (big_a - c, big_b - d)
    };
    let total_gap = 2.0 * gap(0.5, 0.5 * e2, big_a, big_b)
        + gap(big_a, c, big_a + c, a_minus_c)
        + gap(big_b, d, big_b + d, b_minus_d);
    (0.5 * total_gap * (2.0 * SQRT_2 - total_gap)).clamp(0.0, 1.0)
}

/// `√a − (√p + √m)/2` for `p, m = a ± u`, evaluated as
/// `u² / (2(a + √(pm))(√a + (√p + √m)/2))`.
fn gap(a: f64, u: f64, p: f64, m: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    let (p, m) = (p.max(0.0), m.max(0.0));
    let half_sum = 0.5 * (p.sqrt() + m.sqrt());
    u * u / (2.0 * (a + (p * m).sqrt()) * (a.sqrt() + half_sum))
}

// cosh s − cos s = 2·Σ s^(4j+2)/(4j+2)!
fn cosh_minus_cos(s: f64) -> f64 {
    let s4 = s.powi(4);
    let mut term = s * s / 2.0;
    let mut sum = 0.0_f64;
    let mut n = 2.0;
    while term > 0.1 * f64::EPSILON * sum && n < 60.0 {
        sum += term;
        term *= s4 / ((n + 1.0) * (n + 2.0) * (n + 3.0) * (n + 4.0));
        n += 4.0;
    }
    2.0 * sum
}

// sinh s − sin s = 2·Σ s^(4j+3)/(4j+3)!
fn sinh_minus_sin(s: f64) -> f64 {
    let s4 = s.powi(4);
    let mut term = s * s * s / 6.0;
    let mut sum = 0.0_f64;
    let mut n = 3.0;
    while term > 0.1 * f64::EPSILON * sum && n < 60.0 {
        sum += term;
        term *= s4 / ((n + 1.0) * (n + 2.0) * (n + 3.0) * (n + 4.0));
        n += 4.0;
    }
    2.0 * sum
}

/// Homodyne and Helstrom bounds evaluated at one amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBounds {
    pub p_hd: f64,
    pub p_hel: f64,
}

impl ErrorBounds {
    pub fn at(a: Amplitude) -> Self {
        ErrorBounds {
            p_hd: p_err_homodyne(a),
            p_hel: p_err_helstrom(a),
        }
    }

    /// `P_HD − P_Hel`, the homodyne limit on the Helstrom-relative scale.
    pub fn relative_hd(&self) -> f64 {
        self.p_hd - self.p_hel
    }
}

fn check_probability(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::ProbabilityOutOfRange { name, value })
    }
}

/// Overall error `1 − (1 − p_hd)(1 − p_network)` when an independent
/// classifier follows a detector limited at `p_hd`.
///
/// Expanded as `p + q − pq`, which is symmetric bit for bit and returns the
/// other argument exactly when one is zero.
pub fn combine_error(p_hd: f64, p_network: f64) -> Result<f64> {
    let p = check_probability("p_hd", p_hd)?;
    let q = check_probability("p_network", p_network)?;
    Ok((p + q - p * q).min(1.0))
}

/// Returns `(p_err − p_hel, p_hd − p_hel)`.
pub fn relative_errors(p_err: f64, p_hd: f64, p_hel: f64) -> (f64, f64) {
    (p_err - p_hel, p_hd - p_hel)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitsRow {
    pub alpha_db: f64,
    pub alpha_linear: f64,
    pub p_hd: f64,
    pub p_hel: f64,
    pub relative_hd: f64,
}

/// Evaluates both bounds on the inclusive grid `min_db, min_db + step, …, max_db`.
pub fn limits_grid(min_db: f64, max_db: f64, step_db: f64) -> Result<Vec<LimitsRow>> {
    if !(step_db > 0.0) || !min_db.is_finite() || !max_db.is_finite() || max_db < min_db {
        return Err(Error::InvalidArgument(format!(
            "bad dB grid [{min_db}, {max_db}] step {step_db}"
        )));
    }
    let n = ((max_db - min_db) / step_db + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|i| {
            let alpha_db = min_db + step_db * i as f64;
            let a = Amplitude::from_db(alpha_db);
            let b = ErrorBounds::at(a);
            LimitsRow {
                alpha_db,
                alpha_linear: a.linear(),
                p_hd: b.p_hd,
                p_hel: b.p_hel,
                relative_hd: b.relative_hd(),
            }
        })
        .collect())
}

pub fn write_limits_csv<W: Write>(rows: &[LimitsRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "alpha_db,alpha_linear,p_hd,p_hel,relative_hd")?;
    for r in rows {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.alpha_db, r.alpha_linear, r.p_hd, r.p_hel, r.relative_hd
        )?;
    }
    Ok(())
}
