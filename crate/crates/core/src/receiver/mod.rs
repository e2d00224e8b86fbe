//! The two receiver networks and the error-probability pipeline.
//!
//! The generative network (GNN) is a convolutional denoising autoencoder
//! trained to map weak-signal homodyne images onto strong-signal images of
//! the same key. The classifier (CNN) is trained only on strong-signal
//! images. At the receiver, weak message images are optionally denoised and
//! then classified; the network error rate is composed with the homodyne
//! limit of the message amplitude.

mod config;
mod train;

pub use config::{CnnConfig, DropoutReading, GnnConfig, InputEncoding};
pub use train::{train_cnn, train_gnn, train_gnn_with_progress, CnnReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homodyne::{HomodyneDataset, QuadratureImage};
use crate::limits::{combine_error, relative_errors, ErrorBounds, QpskKey};
use crate::neuralnet::{softmax, ArrayND, LayerSpec, Network};

/// A fixed input scaling (see [`InputEncoding`]), then the encoder: two 5×5
/// same-padded convolutions around a 2×2 max-pool, then a
/// dense projection onto the `(W/2)²` latent. Decoder: dense back to
/// `20×(W/2)×(W/2)` maps, a convolution, a stride-2 transpose convolution and
/// a single-map linear output convolution.
pub fn build_gnn(cfg: &GnnConfig) -> Result<Network> {
    cfg.validate()?;
    let w = cfg.input_width;
    let half = w / 2;
    let maps = cfg.feature_maps;
    let k = cfg.kernel;
    let drop = || LayerSpec::dropout(cfg.dropout_reading.drop_rate(cfg.dropout_rate));
    let (scale, shift) = cfg.input_encoding.coefficients();
    let specs = vec![
        LayerSpec::Affine { scale, shift },
        LayerSpec::conv(k, maps, 1),
        LayerSpec::Relu,
        drop(),
        LayerSpec::max_pool(2, 2),
        LayerSpec::conv(k, maps, 1),
        LayerSpec::Relu,
        drop(),
        LayerSpec::dense(cfg.latent_units()),
        LayerSpec::dense(half * half * maps),
        LayerSpec::Reshape {
            dims: [maps, half, half],
        },
        drop(),
        LayerSpec::conv(k, maps, 1),
        LayerSpec::Relu,
        drop(),
        LayerSpec::transpose_conv(k, maps, 2),
        LayerSpec::Relu,
        drop(),
        LayerSpec::conv(k, 1, 1),
        LayerSpec::Linear,
    ];
    Network::seeded(&[1, w, w], specs, cfg.seed)
}

/// Index of the dense layer producing the latent code in [`build_gnn`].
pub const GNN_LATENT_LAYER: usize = 8;

/// 2×2 convolution with 10 maps, 2×2 max-pool, dense 400 and 50 with ReLU
/// and dropout, and a linear 4-unit output. Softmax is applied by the loss
/// and by [`classify`].
pub fn build_cnn(cfg: &CnnConfig) -> Result<Network> {
    cfg.validate()?;
    let w = cfg.input_width;
    let reading = cfg.dropout_reading;
    let specs = vec![
        LayerSpec::conv(cfg.kernel, cfg.feature_maps, 1),
        LayerSpec::Relu,
        LayerSpec::max_pool(2, 2),
        LayerSpec::dense(cfg.fc_units[0]),
        LayerSpec::Relu,
        LayerSpec::dropout(reading.drop_rate(cfg.dropout_rates[0])),
        LayerSpec::dense(cfg.fc_units[1]),
        LayerSpec::Relu,
        LayerSpec::dropout(reading.drop_rate(cfg.dropout_rates[1])),
        LayerSpec::dense(cfg.classes),
        LayerSpec::Linear,
    ];
    Network::seeded(&[1, w, w], specs, cfg.seed)
}

/// Stacks images into a `[n, 1, W, W]` batch.
pub fn images_to_batch<'a, I>(images: I, width: usize) -> Result<ArrayND>
where
    I: IntoIterator<Item = &'a QuadratureImage>,
{
    let mut data = Vec::new();
    let mut n = 0;
    for img in images {
        if img.width() != width {
            return Err(Error::Shape(format!(
                "image width {} does not match network width {width}",
                img.width()
            )));
        }
        data.extend_from_slice(img.pixels());
        n += 1;
    }
    ArrayND::from_vec(&[n, 1, width, width], data)
}

fn network_width(net: &Network) -> usize {
    net.input_shape().get(1).copied().unwrap_or(0)
}

fn check_width(net: &Network, img: &QuadratureImage) -> Result<()> {
    if img.width() != network_width(net) {
        return Err(Error::Shape(format!(
            "image width {} does not match network input width {}",
            img.width(),
            network_width(net)
        )));
    }
    Ok(())
}

/// Denoises a batch of images; outputs are clamped to [0, 1].
pub fn reconstruct_batch(gnn: &Network, images: &[&QuadratureImage]) -> Result<Vec<QuadratureImage>> {
    let w = network_width(gnn);
    let out = gnn.infer(&images_to_batch(images.iter().copied(), w)?)?;
    (0..out.batch())
        .map(|i| {
            let pixels = out.sample(i).iter().map(|p| p.clamp(0.0, 1.0)).collect();
            QuadratureImage::from_pixels(w, pixels)
        })
        .collect()
}

pub fn reconstruct(gnn: &Network, img: &QuadratureImage) -> Result<QuadratureImage> {
    check_width(gnn, img)?;
    Ok(reconstruct_batch(gnn, &[img])?.remove(0))
}

/// Argmax key (ties toward the lowest index) and softmax probabilities.
pub fn decide(logits: &[f64]) -> Result<(QpskKey, [f64; 4])> {
    if logits.len() != 4 {
        return Err(Error::Shape(format!("expected 4 logits, got {}", logits.len())));
    }
    let p = softmax(logits);
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    Ok((QpskKey::from_class(best)?, [p[0], p[1], p[2], p[3]]))
}

pub fn classify_batch(cnn: &Network, images: &[&QuadratureImage]) -> Result<Vec<(QpskKey, [f64; 4])>> {
    let logits = cnn.infer(&images_to_batch(images.iter().copied(), network_width(cnn))?)?;
    (0..logits.batch()).map(|i| decide(logits.sample(i))).collect()
}

pub fn classify(cnn: &Network, img: &QuadratureImage) -> Result<(QpskKey, [f64; 4])> {
    check_width(cnn, img)?;
    Ok(classify_batch(cnn, &[img])?.remove(0))
}

/// Error probabilities of one receiver variant on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub signal_db: f64,
    pub with_gnn: bool,
    pub n_total: usize,
    pub n_wrong: usize,
    pub p_network: f64,
    pub p_hd: f64,
    pub p_hel: f64,
    /// `1 − (1 − p_hd)(1 − p_network)`.
    pub p_err: f64,
    pub p_relative: f64,
    pub p_relative_hd: f64,
    /// `confusion[true class][predicted class]`.
    pub confusion: [[usize; 4]; 4],
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        1.0 - self.p_network
    }

    /// Builds a report from a confusion matrix at message level `signal_db`.
    pub fn from_confusion(signal_db: f64, with_gnn: bool, confusion: [[usize; 4]; 4]) -> Result<Self> {
        let n_total: usize = confusion.iter().flatten().sum();
        if n_total == 0 {
            return Err(Error::Dataset("cannot evaluate an empty test set".into()));
        }
        let n_correct: usize = (0..4).map(|i| confusion[i][i]).sum();
        let n_wrong = n_total - n_correct;
        let p_network = n_wrong as f64 / n_total as f64;
        let bounds = ErrorBounds::at(crate::limits::Amplitude::from_db(signal_db));
        let p_err = combine_error(bounds.p_hd, p_network)?;
        let (p_relative, p_relative_hd) = relative_errors(p_err, bounds.p_hd, bounds.p_hel);
        Ok(EvalReport {
            signal_db,
            with_gnn,
            n_total,
            n_wrong,
            p_network,
            p_hd: bounds.p_hd,
            p_hel: bounds.p_hel,
            p_err,
            p_relative,
            p_relative_hd,
            confusion,
        })
    }

    pub fn to_csv(&self) -> String {
        format!(
            "signal_db,with_gnn,n_total,n_wrong,p_network,p_hd,p_hel,p_err,p_relative,p_relative_hd\n\
             {:.16e},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            self.signal_db,
            self.with_gnn,
            self.n_total,
            self.n_wrong,
            self.p_network,
            self.p_hd,
            self.p_hel,
            self.p_err,
            self.p_relative,
            self.p_relative_hd
        )
    }
}

const EVAL_CHUNK: usize = 40;

/// Runs the test set through the (optional) GNN and the CNN and composes the
/// network error with the analytic bounds at the test set's signal level.
pub fn evaluate(test: &HomodyneDataset, cnn: &Network, gnn: Option<&Network>) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Dataset("cannot evaluate an empty test set".into()));
    }
    let w = test.width();
    if network_width(cnn) != w || gnn.is_some_and(|g| network_width(g) != w) {
        return Err(Error::Shape(format!(
            "test width {w} does not match the networks"
        )));
    }
    let mut confusion = [[0usize; 4]; 4];
    for chunk in test.entries.chunks(EVAL_CHUNK) {
        let images: Vec<&QuadratureImage> = chunk.iter().map(|(img, _)| img).collect();
        let decided = match gnn {
            Some(g) => {
                let clean = reconstruct_batch(g, &images)?;
                classify_batch(cnn, &clean.iter().collect::<Vec<_>>())?
            }
            None => classify_batch(cnn, &images)?,
        };
        for ((_, truth), (pred, _)) in chunk.iter().zip(decided) {
            confusion[truth.class()][pred.class()] += 1;
        }
    }
    EvalReport::from_confusion(test.signal_db, gnn.is_some(), confusion)
}
