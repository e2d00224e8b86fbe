//! Homodyne and Helstrom error limits for QPSK over a range of signal levels.
//!
//!     cargo run --release --example limits_table

use qpsk_receiver::limits::{combine_error, limits_grid, relative_errors, Amplitude, ErrorBounds};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>7} {:>8} {:>10} {:>10} {:>10}", "dB", "|α|", "P_HD", "P_Hel", "P_HD-P_Hel");
    for row in limits_grid(-15.0, 9.0, 3.0)? {
        println!(
            "{:>7.1} {:>8.4} {:>10.3e} {:>10.3e} {:>10.3e}",
            row.alpha_db, row.alpha_linear, row.p_hd, row.p_hel, row.relative_hd
        );
    }

    // A receiver whose network misclassifies 5% of images at -10.5 dB.
    let b = ErrorBounds::at(Amplitude::from_db(-10.5));
    let p_err = combine_error(b.p_hd, 0.05)?;
    let (rel, rel_hd) = relative_errors(p_err, b.p_hd, b.p_hel);
    println!("\nat -10.5 dB with 5% network error:");
    println!("  total error      {p_err:.4}");
    println!("  above Helstrom   {rel:.4}  (homodyne alone: {rel_hd:.4})");
    Ok(())
}
