use std::sync::atomic::{AtomicU64, Ordering};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::array::ArrayND;
use super::layer::{check_input, Layer, LayerCache, LayerSpec};
use crate::error::{Error, Result};

static NEXT_NETWORK_ID: AtomicU64 = AtomicU64::new(1);

/// How dropout behaves during a forward pass.
pub enum DropoutMode<'a> {
    /// Inference: dropout layers are the identity.
    Off,
    /// Training: draw fresh masks from the stream.
    Sample(&'a mut dyn RngCore),
    /// Training with masks recorded by an earlier pass.
    Frozen(&'a DropoutMasks),
}

/// Masks recorded for every dropout layer, indexed by layer position.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks(Vec<Option<Vec<f64>>>);

/// Everything a backward pass needs from the forward pass that produced it.
#[derive(Debug, Clone)]
pub struct Activations {
    /// `values[0]` is the input batch; `values[i + 1]` is the output of layer `i`.
    pub values: Vec<ArrayND>,
    caches: Vec<LayerCache>,
    training: bool,
    network_id: u64,
    generation: u64,
}

impl Activations {
    pub fn output(&self) -> &ArrayND {
        self.values.last().expect("activations always hold the input")
    }

    pub fn into_output(mut self) -> ArrayND {
        self.values.pop().expect("activations always hold the input")
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn dropout_masks(&self) -> DropoutMasks {
        DropoutMasks(
            self.caches
                .iter()
                .map(|c| match c {
                    LayerCache::Mask(m) => Some(m.clone()),
                    _ => None,
                })
                .collect(),
        )
    }
}

/// Parameter gradients (per layer, `[weights, bias]` or empty) and the
/// gradient with respect to the input batch.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<Vec<ArrayND>>,
    pub input: ArrayND,
}

impl Gradients {
    pub fn flat(&self) -> impl Iterator<Item = &ArrayND> {
        self.params.iter().flatten()
    }
}

/// An ordered stack of layers with resolved shapes and parameters.
#[derive(Debug)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    id: u64,
    generation: u64,
}

impl Clone for Network {
    fn clone(&self) -> Self {
        Network {
            input_shape: self.input_shape.clone(),
            layers: self.layers.clone(),
            id: NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        }
    }
}

impl PartialEq for Network {
    /// Structural equality: same layers, shapes and parameter values.
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape && self.layers == other.layers
    }
}

impl Network {
    /// Resolves shapes for `specs` applied to per-sample `input_shape`;
    /// parameters start at zero.
    pub fn new(input_shape: &[usize], specs: Vec<LayerSpec>) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for (i, spec) in specs.into_iter().enumerate() {
            let layer = Layer::new(spec, &shape).map_err(|reason| {
                Error::Shape(format!("layer {i}: {reason}"))
            })?;
            shape = layer.output.clone();
            layers.push(layer);
        }
        Ok(Network {
            input_shape: input_shape.to_vec(),
            layers,
            id: NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        })
    }

    /// Builds and initializes weights (He-normal) from `seed`.
    pub fn seeded(input_shape: &[usize], specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut net = Self::new(input_shape, specs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            layer.init_params(&mut rng);
        }
        Ok(net)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers.last().map_or(&self.input_shape, |l| &l.output)
    }

    pub fn specs(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().map(|l| &l.spec)
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Per-sample output shape of layer `i`.
    pub fn layer_output_shape(&self, i: usize) -> &[usize] {
        &self.layers[i].output
    }

    pub fn params(&self) -> impl Iterator<Item = &ArrayND> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    /// Mutable access to every parameter array; counts as a parameter update.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut ArrayND> {
        self.generation += 1;
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut())
    }

    pub fn layer_params_mut(&mut self, i: usize) -> &mut [ArrayND] {
        self.generation += 1;
        &mut self.layers[i].params
    }

    pub fn param_count(&self) -> usize {
        self.params().map(ArrayND::len).sum()
    }

    pub fn forward(&self, batch: &ArrayND, mode: DropoutMode<'_>) -> Result<Activations> {
        check_input(0, &self.input_shape, batch)?;
        let training = !matches!(mode, DropoutMode::Off);
        let mut rng_slot: Option<&mut dyn RngCore> = None;
        let mut frozen: Option<&DropoutMasks> = None;
        match mode {
            DropoutMode::Off => {}
            DropoutMode::Sample(rng) => rng_slot = Some(rng),
            DropoutMode::Frozen(m) => {
                if m.0.len() != self.layers.len() {
                    return Err(Error::StaleActivations(
                        "dropout masks recorded for a different network".into(),
                    ));
                }
                frozen = Some(m);
            }
        }

        let mut values = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        values.push(batch.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = values.last().unwrap();
            let dropout = if !training || !matches!(layer.spec, LayerSpec::Dropout { .. }) {
                None
            } else if let Some(masks) = frozen {
                match &masks.0[i] {
                    Some(m) if m.len() == x.len() => Some(Ok(m.as_slice())),
                    _ => {
                        return Err(Error::StaleActivations(format!(
                            "no dropout mask of matching size for layer {i}"
                        )))
                    }
                }
            } else {
                rng_slot.as_deref_mut().map(Err)
            };
            let (y, cache) = layer.forward(x, dropout);
            values.push(y);
            caches.push(cache);
        }
        Ok(Activations {
            values,
            caches,
            training,
            network_id: self.id,
            generation: self.generation,
        })
    }

    /// Inference-mode output for a batch.
    pub fn infer(&self, batch: &ArrayND) -> Result<ArrayND> {
        Ok(self.forward(batch, DropoutMode::Off)?.into_output())
    }

    /// Back-propagates `upstream` (gradient of the loss w.r.t. the output)
    /// through the activations of a training forward pass.
    pub fn backward(&self, acts: &Activations, upstream: &ArrayND) -> Result<Gradients> {
        if acts.network_id != self.id || acts.generation != self.generation {
            return Err(Error::StaleActivations(
                "activations were produced before the latest parameter update".into(),
            ));
        }
        if !acts.training {
            return Err(Error::StaleActivations(
                "backward requires activations from a training-mode forward pass".into(),
            ));
        }
        if upstream.shape() != acts.output().shape() {
            return Err(Error::LayerShape {
                layer: self.layers.len(),
                expected: acts.output().shape().to_vec(),
                actual: upstream.shape().to_vec(),
            });
        }
        let mut grad = upstream.clone();
        let mut params = vec![Vec::new(); self.layers.len()];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (dx, g) = layer.backward(&acts.values[i], &acts.caches[i], &grad);
            params[i] = g;
            grad = dx;
        }
        Ok(Gradients {
            params,
            input: grad,
        })
    }

    pub(crate) fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn from_layers(input_shape: Vec<usize>, layers: Vec<Layer>) -> Self {
        Network {
            input_shape,
            layers,
            id: NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        }
    }
}
