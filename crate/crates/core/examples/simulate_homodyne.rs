//! Simulates homodyne images for each QPSK key and writes a small dataset.
//!
//!     cargo run --release --example simulate_homodyne [out.qhd]

use qpsk_receiver::homodyne::{
    generate_dataset, read_dataset, template_image, write_dataset, DatasetRole, LoScan,
    QuadratureImage,
};
use qpsk_receiver::limits::{Amplitude, QpskKey};

const SHADES: &[u8] = b" .:-=+*#%@";

fn ascii(img: &QuadratureImage) -> String {
    let w = img.width();
    let mut s = String::new();
    for r in 0..w {
        for c in 0..w {
            let k = (img.pixel(r, c) * (SHADES.len() - 1) as f64).round() as usize;
            s.push(SHADES[k.min(SHADES.len() - 1)] as char);
        }
        s.push('\n');
    }
    s
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "homodyne_demo.qhd".into());
    let scan = LoScan::full();
    println!("scan: {} points over {:.3}π", scan.width().pow(2), scan.range_over_pi());

    for k in 1..=4 {
        let key = QpskKey::new(k)?;
        println!("key {k}, noise-free at 9 dB:\n{}", ascii(&template_image(key, Amplitude::from_db(9.0), &scan)));
    }

    let weak = generate_dataset(-10.5, 5, scan, 7, DatasetRole::Test)?;
    let (img, key) = &weak.entries[0];
    println!("a -10.5 dB sample of key {}:\n{}", key.index(), ascii(img));

    write_dataset(&weak, out.as_ref())?;
    let back = read_dataset(out.as_ref())?;
    assert_eq!(back, weak);
    println!("wrote and re-read {} images at {} dB to {out}", back.len(), back.signal_db);
    Ok(())
}
