use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homodyne::QUADRATURE_WINDOW;

/// How a configured dropout rate is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropoutReading {
    /// The rate is the probability of zeroing a unit.
    #[default]
    DropProbability,
    /// The rate is the probability of keeping a unit.
    KeepProbability,
}

impl DropoutReading {
    pub fn drop_rate(self, rate: f64) -> f64 {
        match self {
            DropoutReading::DropProbability => rate,
            DropoutReading::KeepProbability => 1.0 - rate,
        }
    }
}

/// Scaling applied to pixels at the generative network's input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputEncoding {
    /// Pixels as stored, in `[0, 1]`.
    Pixel,
    /// Pixels mapped back to quadrature units `n/(2β)`, centred on zero with
    /// unit-order spread. Keeps the second encoder convolution out of the
    /// all-negative regime during the first Adam steps.
    #[default]
    Quadrature,
}

impl InputEncoding {
    /// `(scale, shift)` of the input map `scale·p + shift`.
    pub fn coefficients(self) -> (f64, f64) {
        match self {
            InputEncoding::Pixel => (1.0, 0.0),
            InputEncoding::Quadrature => (2.0 * QUADRATURE_WINDOW, -QUADRATURE_WINDOW),
        }
    }
}

impl std::str::FromStr for InputEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pixel" => Ok(InputEncoding::Pixel),
            "quadrature" => Ok(InputEncoding::Quadrature),
            other => Err(Error::InvalidArgument(format!("unknown input encoding `{other}`"))),
        }
    }
}

/// Hyperparameters of the denoising generative network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub input_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub feature_maps: usize,
    pub kernel: usize,
    pub dropout_rate: f64,
    pub dropout_reading: DropoutReading,
    pub input_encoding: InputEncoding,
    pub seed: u64,
}

impl GnnConfig {
    pub fn new(input_width: usize, seed: u64) -> Self {
        GnnConfig {
            input_width,
            epochs: 150,
            batch_size: 10,
            learning_rate: 0.001,
            feature_maps: 20,
            kernel: 5,
            dropout_rate: 0.2,
            dropout_reading: DropoutReading::DropProbability,
            input_encoding: InputEncoding::Quadrature,
            seed,
        }
    }

    /// Latent size `(W/2)²`.
    pub fn latent_units(&self) -> usize {
        (self.input_width / 2).pow(2)
    }

    pub fn validate(&self) -> Result<()> {
        check_width(self.input_width)?;
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(
                "batch size and learning rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Hyperparameters of the classifying convolutional network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub input_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub feature_maps: usize,
    pub kernel: usize,
    pub fc_units: [usize; 2],
    pub dropout_rates: [f64; 2],
    pub dropout_reading: DropoutReading,
    pub classes: usize,
    /// Leading entries of each key block used for training; the rest are held out.
    pub train_per_key: usize,
    pub test_per_key: usize,
    pub seed: u64,
}

impl CnnConfig {
    pub fn new(input_width: usize, seed: u64) -> Self {
        CnnConfig {
            input_width,
            epochs: 10,
            batch_size: 1,
            learning_rate: 0.001,
            feature_maps: 10,
            kernel: 2,
            fc_units: [400, 50],
            dropout_rates: [0.8, 0.4],
            dropout_reading: DropoutReading::DropProbability,
            classes: 4,
            train_per_key: 170,
            test_per_key: 30,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_width(self.input_width)?;
        if self.classes != 4 {
            return Err(Error::InvalidArgument(format!(
                "the classifier has exactly 4 classes, got {}",
                self.classes
            )));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) || self.train_per_key == 0 {
            return Err(Error::InvalidArgument(
                "batch size, learning rate and training split must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn check_width(w: usize) -> Result<()> {
    if w < 4 || w % 2 != 0 || w > 30 {
        return Err(Error::InvalidArgument(format!(
            "input width must be even and in [4, 30], got {w}"
        )));
    }
    Ok(())
}
