use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_cnn, build_gnn, classify_batch, images_to_batch, CnnConfig, GnnConfig};
use crate::error::{Error, Result};
use crate::homodyne::{HomodyneDataset, QuadratureImage};
use crate::neuralnet::{mse_loss, one_hot, softmax_crossentropy, AdamState, ArrayND, DropoutMode, Network};

// Stream 0 of the seed initializes weights; training draws from stream 1.
fn training_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Trains the denoiser to map `noisy[i]` onto `targets[i]`.
///
/// Both datasets are in key blocks of equal size, so pairing by position
/// pairs the i-th image of each key with the i-th target of the same key.
/// Returns the trained network and the mean training loss of every epoch.
pub fn train_gnn(
    noisy: &HomodyneDataset,
    targets: &HomodyneDataset,
    cfg: &GnnConfig,
) -> Result<(Network, Vec<f64>)> {
    train_gnn_with_progress(noisy, targets, cfg, |_, _| {})
}

/// [`train_gnn`] that reports `(epoch, mean loss)` after every epoch.
pub fn train_gnn_with_progress(
    noisy: &HomodyneDataset,
    targets: &HomodyneDataset,
    cfg: &GnnConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<(Network, Vec<f64>)> {
    cfg.validate()?;
    if noisy.width() != cfg.input_width || targets.width() != cfg.input_width {
        return Err(Error::Dataset(format!(
            "dataset widths {}/{} do not match configured width {}",
            noisy.width(),
            targets.width(),
            cfg.input_width
        )));
    }
    if noisy.per_key() != targets.per_key() || noisy.len() != targets.len() {
        return Err(Error::Dataset(format!(
            "input and target per-key counts differ ({} vs {})",
            noisy.per_key(),
            targets.per_key()
        )));
    }
    for (i, ((_, a), (_, b))) in noisy.entries.iter().zip(&targets.entries).enumerate() {
        if a != b {
            return Err(Error::Dataset(format!("entry {i} pairs key {a:?} with {b:?}")));
        }
    }

    let mut net = build_gnn(cfg)?;
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut rng = training_rng(cfg.seed);
    let mut order: Vec<usize> = (0..noisy.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let w = cfg.input_width;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let x = images_to_batch(batch.iter().map(|&i| &noisy.entries[i].0), w)?;
            let y = images_to_batch(batch.iter().map(|&i| &targets.entries[i].0), w)?;
            let acts = net.forward(&x, DropoutMode::Sample(&mut rng))?;
            let (loss, grad) = mse_loss(acts.output(), &y)?;
            let grads = net.backward(&acts, &grad)?;
            adam.step(&mut net, &grads)?;
            total += loss * batch.len() as f64;
        }
        let mean = total / noisy.len() as f64;
        progress(epoch, mean);
        history.push(mean);
    }
    Ok((net, history))
}

/// Outcome of classifier training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnReport {
    pub epoch_losses: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub held_out_correct: usize,
    pub held_out_accuracy: f64,
}

/// Trains the classifier on the leading `train_per_key` entries of each key
/// block and scores the trailing `test_per_key` entries.
pub fn train_cnn(labeled: &HomodyneDataset, cfg: &CnnConfig) -> Result<(Network, CnnReport)> {
    cfg.validate()?;
    if labeled.width() != cfg.input_width {
        return Err(Error::Dataset(format!(
            "dataset width {} does not match configured width {}",
            labeled.width(),
            cfg.input_width
        )));
    }
    let per_key = labeled.per_key();
    if per_key != cfg.train_per_key + cfg.test_per_key || labeled.len() != 4 * per_key {
        return Err(Error::Dataset(format!(
            "expected {} + {} entries per key, dataset has {per_key}",
            cfg.train_per_key, cfg.test_per_key
        )));
    }
    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    for k in 0..4 {
        let block = k * per_key;
        train_idx.extend(block..block + cfg.train_per_key);
        test_idx.extend(block + cfg.train_per_key..block + per_key);
    }

    let mut net = build_cnn(cfg)?;
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut rng = training_rng(cfg.seed);
    let w = cfg.input_width;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let x = images_to_batch(batch.iter().map(|&i| &labeled.entries[i].0), w)?;
            let acts = net.forward(&x, DropoutMode::Sample(&mut rng))?;
            let logits = acts.output();
            let n = batch.len();
            let mut grad = ArrayND::zeros(logits.shape());
            for (j, &i) in batch.iter().enumerate() {
                let target = one_hot(labeled.entries[i].1.class(), cfg.classes);
                let (loss, g) = softmax_crossentropy(logits.sample(j), &target)?;
                total += loss;
                for (dst, v) in grad.data_mut()[j * cfg.classes..(j + 1) * cfg.classes]
                    .iter_mut()
                    .zip(g)
                {
                    *dst = v / n as f64;
                }
            }
            let grads = net.backward(&acts, &grad)?;
            adam.step(&mut net, &grads)?;
        }
        epoch_losses.push(total / train_idx.len() as f64);
    }

    let held_out: Vec<&QuadratureImage> = test_idx.iter().map(|&i| &labeled.entries[i].0).collect();
    let decided = if held_out.is_empty() {
        Vec::new()
    } else {
        classify_batch(&net, &held_out)?
    };
    let held_out_correct = test_idx
        .iter()
        .zip(&decided)
        .filter(|(&i, (pred, _))| *pred == labeled.entries[i].1)
        .count();
    let n_test = test_idx.len();
    Ok((
        net,
        CnnReport {
            epoch_losses,
            n_train: train_idx.len(),
            n_test,
            held_out_correct,
            held_out_accuracy: if n_test == 0 {
                f64::NAN
            } else {
                held_out_correct as f64 / n_test as f64
            },
        },
    ))
}
