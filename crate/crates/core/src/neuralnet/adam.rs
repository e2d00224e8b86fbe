use super::array::ArrayND;
use super::network::{Gradients, Network};
use crate::error::{Error, Result};

/// Bias-corrected Adam with per-parameter first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Default moment decays 0.9 / 0.999 and ε = 1e-8.
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    /// One Adam step over matching parameter and gradient buffers.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} parameter arrays vs {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len()
            || params.iter().zip(grads).zip(&self.m).any(|((p, g), m)| p.len() != g.len() || p.len() != m.len())
        {
            return Err(Error::Shape("parameter, gradient and moment shapes differ".into()));
        }
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        // m̂/(√v̂ + ε) = (m/c1)/(√v/√c2 + ε)
        let step = self.lr / (1.0 - b1.powi(t));
        let inv_sqrt_c2 = 1.0 / (1.0 - b2.powi(t)).sqrt();
        let eps = self.epsilon;
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= step * *m / (v.sqrt() * inv_sqrt_c2 + eps);
            }
        }
        Ok(())
    }

    /// Applies one step to every parameter of `net`.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        let g: Vec<&[f64]> = grads.flat().map(ArrayND::data).collect();
        let mut p: Vec<&mut [f64]> = net.params_mut().map(ArrayND::data_mut).collect();
        self.update(&mut p, &g)
    }
}

/// Free-function form of [`AdamState::update`].
pub fn adam_update(state: &mut AdamState, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
    state.update(params, grads)
}
