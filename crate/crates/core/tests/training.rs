use qpsk_receiver::homodyne::{generate_dataset, template_image, DatasetRole, HomodyneDataset, LoScan};
use qpsk_receiver::limits::{Amplitude, QpskKey};
use qpsk_receiver::neuralnet::encode_network;
use qpsk_receiver::receiver::{
    classify, evaluate, reconstruct, train_cnn, train_gnn, CnnConfig, GnnConfig,
};

fn data(db: f64, per_key: usize, width: usize, seed: u64, role: DatasetRole) -> HomodyneDataset {
    generate_dataset(db, per_key, LoScan::reference_slice(width).unwrap(), seed, role).unwrap()
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

#[test]
fn gnn_learns_the_identity() {
    let noisy = data(0.0, 10, 8, 1, DatasetRole::GnnInput);
    let targets = HomodyneDataset {
        role: DatasetRole::GnnTarget,
        ..noisy.clone()
    };
    let cfg = GnnConfig {
        epochs: 20,
        ..GnnConfig::new(8, 3)
    };
    let (net, losses) = train_gnn(&noisy, &targets, &cfg).unwrap();
    assert_eq!(losses.len(), 20);
    let last = *losses.last().unwrap();
    assert!(last < 0.1 * losses[0], "loss {} -> {last}", losses[0]);
    assert!(net.params().all(|p| p.data().iter().all(|v| v.is_finite())));
}

#[test]
fn training_is_deterministic() {
    let noisy = data(-10.5, 5, 8, 1, DatasetRole::GnnInput);
    let targets = data(9.0, 5, 8, 2, DatasetRole::GnnTarget);
    let cfg = GnnConfig {
        epochs: 3,
        ..GnnConfig::new(8, 4)
    };
    let (a, la) = train_gnn(&noisy, &targets, &cfg).unwrap();
    let (b, lb) = train_gnn(&noisy, &targets, &cfg).unwrap();
    assert_eq!(la, lb);
    assert_eq!(encode_network(&a), encode_network(&b));

    let labeled = data(9.0, 10, 8, 5, DatasetRole::CnnTrain);
    let cfg = CnnConfig {
        epochs: 2,
        train_per_key: 8,
        test_per_key: 2,
        ..CnnConfig::new(8, 6)
    };
    let (a, ra) = train_cnn(&labeled, &cfg).unwrap();
    let (b, rb) = train_cnn(&labeled, &cfg).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(encode_network(&a), encode_network(&b));
}

#[test]
fn untrained_cnn_is_at_chance() {
    let labeled = data(9.0, 40, 8, 7, DatasetRole::CnnTrain);
    let cfg = CnnConfig {
        epochs: 0,
        train_per_key: 20,
        test_per_key: 20,
        ..CnnConfig::new(8, 8)
    };
    let (_, report) = train_cnn(&labeled, &cfg).unwrap();
    assert!((report.held_out_accuracy - 0.25).abs() <= 0.15, "{}", report.held_out_accuracy);
}

#[test]
fn trained_cnn_reads_templates_and_evaluation_is_read_only() {
    let w = 12;
    let labeled = data(9.0, 40, w, 9, DatasetRole::CnnTrain);
    let cfg = CnnConfig {
        train_per_key: 30,
        test_per_key: 10,
        ..CnnConfig::new(w, 10)
    };
    let (cnn, report) = train_cnn(&labeled, &cfg).unwrap();
    assert_eq!(report.held_out_accuracy, 1.0);

    let scan = LoScan::reference_slice(w).unwrap();
    for k in 1..=4 {
        let key = QpskKey::new(k).unwrap();
        let img = template_image(key, Amplitude::from_db(9.0), &scan);
        let (got, probs) = classify(&cnn, &img).unwrap();
        assert_eq!(got, key);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(classify(&cnn, &img).unwrap(), (got, probs));
    }

    let test = data(9.0, 10, w, 11, DatasetRole::Test);
    let before = encode_network(&cnn);
    let r = evaluate(&test, &cnn, None).unwrap();
    assert_eq!(encode_network(&cnn), before);
    assert_eq!(r.n_wrong, 0);
    assert_eq!(r.p_err, r.p_hd);
    for (k, row) in r.confusion.iter().enumerate() {
        assert_eq!(row.iter().sum::<usize>(), 10, "key {}", k + 1);
    }
}

#[test]
fn trained_gnn_moves_weak_images_toward_templates() {
    let w = 12;
    let noisy = data(-3.0, 60, w, 12, DatasetRole::GnnInput);
    let targets = data(9.0, 60, w, 13, DatasetRole::GnnTarget);
    let cfg = GnnConfig {
        epochs: 20,
        ..GnnConfig::new(w, 14)
    };
    let (gnn, _) = train_gnn(&noisy, &targets, &cfg).unwrap();

    let test = data(-3.0, 10, w, 15, DatasetRole::Test);
    let scan = LoScan::reference_slice(w).unwrap();
    let before = encode_network(&gnn);
    let (mut d_in, mut d_out) = (0.0, 0.0);
    for (img, key) in &test.entries {
        let template = template_image(*key, Amplitude::from_db(9.0), &scan);
        let out = reconstruct(&gnn, img).unwrap();
        assert!(out.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
        d_in += mse(img.pixels(), template.pixels());
        d_out += mse(out.pixels(), template.pixels());
    }
    assert_eq!(encode_network(&gnn), before);
    assert!(d_out < d_in, "reconstruction {d_out} vs input {d_in}");
}
