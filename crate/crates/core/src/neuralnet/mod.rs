//! Minimal deep-learning stack: row-major `f64` arrays, layers with
//! hand-derived backward passes, losses and Adam.

mod adam;
mod array;
mod gemm;
mod layer;
mod loss;
mod model_io;
mod network;

pub use adam::{adam_update, AdamState};
pub use array::ArrayND;
pub use layer::{maxpool2d, LayerCache, LayerSpec};
pub use loss::{mse_loss, one_hot, softmax, softmax_crossentropy};
pub use model_io::{decode_network, encode_network, load_network, save_network, FORMAT_VERSION};
pub use network::{Activations, DropoutMasks, DropoutMode, Gradients, Network};
