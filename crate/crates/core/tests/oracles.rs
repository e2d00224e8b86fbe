//! Closed-form quantities checked against independently computed values.

use std::f64::consts::PI;

use qpsk_receiver::homodyne::{count_to_pixel, homodyne_mean, mean_trace, LoScan};
use qpsk_receiver::limits::{erfc, p_err_helstrom, p_err_homodyne, Amplitude, ErrorBounds, QpskKey};
use qpsk_receiver::neuralnet::AdamState;

/// erfc from the all-positive series `erf x = 2/√π·e^{-x²}·Σ 2ⁿx^{2n+1}/(2n+1)!!`
/// for small arguments and the Laplace continued fraction beyond.
fn erfc_reference(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc_reference(-x);
    }
    if x <= 0.8 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term > 1e-20 * sum {
            n += 1.0;
            term *= 2.0 * x * x / (2.0 * n + 1.0);
            sum += term;
        }
        1.0 - 2.0 / PI.sqrt() * (-x * x).exp() * sum
    } else {
        let mut t = x;
        for n in (1..=5000).rev() {
            t = x + (n as f64 / 2.0) / t;
        }
        (-x * x).exp() / (PI.sqrt() * t)
    }
}

#[test]
fn erfc_matches_reference_on_the_working_range() {
    let mut worst: f64 = 0.0;
    for i in 0..=1200 {
        let x = -6.0 + 0.01 * i as f64;
        let (a, b) = (erfc(x), erfc_reference(x));
        worst = worst.max((a - b).abs() / b);
    }
    assert!(worst < 1e-12, "worst relative error {worst:.3e}");
}

#[test]
fn erfc_at_rounded_argument() {
    // 0.70711 is not 1/√2; the two differ in the sixth digit
    assert!((erfc(0.70711) - 0.3173083049230719381).abs() < 1e-15);
    assert!((erfc(std::f64::consts::FRAC_1_SQRT_2) - 0.31731050786291410283).abs() < 1e-15);
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs()
}

#[test]
fn homodyne_limit_values() {
    for (db, want) in [
        (-15.0, 0.73722733778115955173),
        (-10.5, 0.71323037587265563041),
        (-9.3, 0.70104910739082774546),
        (0.0, 0.29213901826285898466),
        (6.0, 0.000068604071062826535087),
        (9.0, 1.9690004877595780409e-15),
    ] {
        let got = p_err_homodyne(Amplitude::from_db(db));
        assert!(close(got, want, 1e-12), "{db} dB: {got:e} vs {want:e}");
    }
}

#[test]
fn helstrom_limit_values() {
    for (db, want) in [
        (-15.0, 0.73383338900492904785),
        (-10.5, 0.70259860423960869523),
        (-9.25, 0.68551773158869820886),
        (0.0, 0.092421415604458982959),
        (3.0, 0.00017427379044102245103),
        (6.0, 8.5656957919235873657e-15),
        (9.0, 7.847139975427285347e-56),
    ] {
        let got = p_err_helstrom(Amplitude::from_db(db));
        assert!(close(got, want, 1e-12), "{db} dB: {got:e} vs {want:e}");
    }
}

#[test]
fn relative_homodyne_limits() {
    for (db, want) in [
        (-10.5, 0.010631771633046935),
        (-10.23, 0.011429884902593243),
        (-9.3, 0.014735738131017209),
        (-13.26, 0.0052163081268679),
    ] {
        let got = ErrorBounds::at(Amplitude::from_db(db)).relative_hd();
        assert!(close(got, want, 1e-9), "{db} dB: {got:e} vs {want:e}");
    }
}

#[test]
fn homodyne_mean_and_pixels() {
    let a = Amplitude::from_db(-10.5);
    let key = QpskKey::new(2).unwrap();
    let m = homodyne_mean(a, key.phase(), key.phase(), 100.0);
    assert!(close(m, 17.825018762674910599, 1e-14));
    let strong = mean_trace(QpskKey::new(1).unwrap(), Amplitude::from_db(9.0), &LoScan::full());
    // γ = 0, φ = π/4: 2β|α′|cos(π/4)
    assert!(close(count_to_pixel(strong[0], 100.0), 0.7808, 1e-4));
    assert!((count_to_pixel(200.0 * 7.943282347242815, 100.0) - 0.89716411736214075).abs() < 1e-15);
}

#[test]
fn adam_decreases_a_parabola() {
    let mut s = AdamState::new(0.1);
    let mut x = vec![1.0];
    let mut last = 1.0_f64;
    for _ in 0..10 {
        let g = vec![2.0 * x[0]];
        s.update(&mut [&mut x], &[&g]).unwrap();
        assert!(x[0].abs() < last);
        last = x[0].abs();
    }
    assert_eq!(s.t, 10);
}
