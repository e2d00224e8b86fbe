//! Machine-learning aided balanced homodyne receiver for weak QPSK coherent
//! states.
//!
//! * [`limits`]: constellation, decibel helpers, homodyne and Helstrom bounds.
//! * [`homodyne`]: Monte Carlo homodyne traces and labeled image datasets.
//! * [`neuralnet`]: arrays, layers, losses and Adam with analytic gradients.
//! * [`receiver`]: the denoising generative network, the classifier, their
//!   training loops and error-probability evaluation.
//! * [`experiments`]: sweep drivers, result CSVs, plots and run directories.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod error;
pub mod experiments;
pub mod homodyne;
pub mod io;
pub mod limits;
pub mod neuralnet;
pub mod receiver;

pub use error::{Error, Result};
