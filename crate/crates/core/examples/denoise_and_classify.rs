//! Trains a small denoiser and classifier, then compares the plain and the
//! denoised receiver on weak test signals. Uses a reduced scan so it finishes
//! in about a minute.
//!
//!     cargo run --release --example denoise_and_classify

use qpsk_receiver::homodyne::{generate_dataset, slice_scan, DatasetRole, LoScan};
use qpsk_receiver::neuralnet::{decode_network, encode_network};
use qpsk_receiver::receiver::{
    evaluate, train_cnn, train_gnn_with_progress, CnnConfig, GnnConfig,
};

const WIDTH: usize = 16;
const MESSAGE_DB: f64 = -9.0;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scan = LoScan::full();
    // generate on the full scan, then keep the first WIDTH² points
    let weak = slice_scan(&generate_dataset(MESSAGE_DB, 100, scan, 1, DatasetRole::GnnInput)?, WIDTH)?;
    let strong = slice_scan(&generate_dataset(9.0, 100, scan, 2, DatasetRole::GnnTarget)?, WIDTH)?;
    let test = slice_scan(&generate_dataset(MESSAGE_DB, 50, scan, 3, DatasetRole::Test)?, WIDTH)?;

    let gnn_cfg = GnnConfig {
        epochs: 30,
        ..GnnConfig::new(WIDTH, 11)
    };
    let (gnn, _) = train_gnn_with_progress(&weak, &strong, &gnn_cfg, |e, loss| {
        if (e + 1) % 5 == 0 {
            println!("denoiser epoch {:>3}  mse {loss:.5}", e + 1);
        }
    })?;

    let cnn_cfg = CnnConfig {
        train_per_key: 80,
        test_per_key: 20,
        ..CnnConfig::new(WIDTH, 12)
    };
    let (cnn, report) = train_cnn(&strong, &cnn_cfg)?;
    println!("classifier held-out accuracy on strong signals: {:.3}", report.held_out_accuracy);

    // models survive a round trip through the binary format
    let gnn = decode_network(&encode_network(&gnn))?;

    for (name, g) in [("classifier only", None), ("denoise + classify", Some(&gnn))] {
        let r = evaluate(&test, &cnn, g)?;
        println!(
            "{name:<20} network error {:.3}  total {:.4}  above Helstrom {:.4}  (homodyne {:.4})",
            r.p_network, r.p_err, r.p_relative, r.p_relative_hd
        );
    }
    Ok(())
}
