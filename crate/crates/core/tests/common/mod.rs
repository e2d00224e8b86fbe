//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use qpsk_receiver::neuralnet::{ArrayND, DropoutMode, LayerSpec, Network};
use qpsk_receiver::receiver::{build_cnn, build_gnn, CnnConfig, GnnConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-5;
/// Coordinates probed per array; larger arrays are sampled.
const MAX_PROBES: usize = 400;

fn randn(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> ArrayND {
    let n = shape.iter().product();
    let data = (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    ArrayND::from_vec(shape, data).unwrap()
}

fn dot(a: &ArrayND, b: &ArrayND) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Returns the worst norm-wise relative error over all parameter arrays and
/// the input, for the scalar objective `⟨c, f(x)⟩` with dropout frozen.
pub fn check(mut net: Network, batch: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // nonzero biases so that their gradients are exercised
    for p in net.params_mut() {
        for v in p.data_mut() {
            *v += 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let mut in_shape = vec![batch];
    in_shape.extend_from_slice(net.input_shape());
    let x = randn(&mut rng, &in_shape, 1.0);

    let acts = net.forward(&x, DropoutMode::Sample(&mut rng)).unwrap();
    let masks = acts.dropout_masks();
    let c = randn(&mut rng, acts.output().shape(), 1.0);
    let grads = net.backward(&acts, &c).unwrap();
    let analytic: Vec<Vec<f64>> = grads.flat().map(|g| g.data().to_vec()).collect();

    let objective = |net: &Network, x: &ArrayND| -> f64 {
        dot(net.forward(x, DropoutMode::Frozen(&masks)).unwrap().output(), &c)
    };

    let mut worst: f64 = 0.0;
    let n_arrays = analytic.len();
    for k in 0..n_arrays {
        let len = analytic[k].len();
        let probes: Vec<usize> = if len <= MAX_PROBES {
            (0..len).collect()
        } else {
            (0..MAX_PROBES).map(|_| rng.random_range(0..len)).collect()
        };
        let mut a = Vec::with_capacity(probes.len());
        let mut f = Vec::with_capacity(probes.len());
        for &i in &probes {
            let orig = net.params_mut().nth(k).unwrap().data()[i];
            net.params_mut().nth(k).unwrap().data_mut()[i] = orig + STEP;
            let up = objective(&net, &x);
            net.params_mut().nth(k).unwrap().data_mut()[i] = orig - STEP;
            let down = objective(&net, &x);
            net.params_mut().nth(k).unwrap().data_mut()[i] = orig;
            a.push(analytic[k][i]);
            f.push((up - down) / (2.0 * STEP));
        }
        let e = rel_err(&a, &f);
        assert!(e.is_finite());
        worst = worst.max(e);
    }

    let mut a = Vec::new();
    let mut f = Vec::new();
    let mut xp = x.clone();
    let len = x.len();
    let probes: Vec<usize> = if len <= MAX_PROBES {
        (0..len).collect()
    } else {
        (0..MAX_PROBES).map(|_| rng.random_range(0..len)).collect()
    };
    for i in probes {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + STEP;
        let up = objective(&net, &xp);
        xp.data_mut()[i] = orig - STEP;
        let down = objective(&net, &xp);
        xp.data_mut()[i] = orig;
        a.push(grads.input.data()[i]);
        f.push((up - down) / (2.0 * STEP));
    }
    worst.max(rel_err(&a, &f))
}

fn single(input: &[usize], spec: LayerSpec) -> Network {
    Network::seeded(input, vec![spec], 3).unwrap()
}

/// Named networks covering every layer type and both receiver networks at
/// width 8, each with its batch size and check seed.
pub fn gradient_cases() -> Vec<(&'static str, Network, usize, u64)> {
    vec![
        ("conv 3x3 stride 1", single(&[2, 6, 5], LayerSpec::conv(3, 4, 1)), 2, 1),
        ("conv 2x2 asymmetric padding", single(&[3, 5, 5], LayerSpec::conv(2, 2, 1)), 2, 2),
        ("conv single output map", single(&[3, 7, 6], LayerSpec::conv(5, 1, 1)), 3, 3),
        ("conv stride 2", single(&[2, 7, 8], LayerSpec::conv(3, 3, 2)), 2, 4),
        ("transpose conv 5x5 stride 2", single(&[3, 4, 4], LayerSpec::transpose_conv(5, 2, 2)), 2, 5),
        ("transpose conv 2x2 stride 1", single(&[2, 3, 5], LayerSpec::transpose_conv(2, 3, 1)), 2, 6),
        ("max pool 2x2", single(&[2, 6, 6], LayerSpec::max_pool(2, 2)), 2, 7),
        ("max pool 3x3 overlapping", single(&[1, 5, 5], LayerSpec::max_pool(3, 1)), 2, 8),
        ("dense from maps", single(&[2, 3, 3], LayerSpec::dense(5)), 3, 9),
        ("dense from vector", single(&[7], LayerSpec::dense(4)), 1, 10),
        ("dropout", single(&[2, 4, 4], LayerSpec::dropout(0.3)), 2, 11),
        ("relu", single(&[2, 4, 4], LayerSpec::Relu), 2, 12),
        ("linear", single(&[2, 4, 4], LayerSpec::Linear), 2, 13),
        ("reshape", single(&[32], LayerSpec::Reshape { dims: [2, 4, 4] }), 2, 14),
        ("affine", single(&[2, 4, 4], LayerSpec::Affine { scale: 20.0, shift: -10.0 }), 2, 17),
        ("gnn width 8", build_gnn(&GnnConfig::new(8, 21)).unwrap(), 2, 15),
        ("cnn width 8", build_cnn(&CnnConfig::new(8, 22)).unwrap(), 2, 16),
    ]
}

/// Worst relative error of the named case.
pub fn run_case(name: &str) -> f64 {
    let (_, net, batch, seed) = gradient_cases()
        .into_iter()
        .find(|c| c.0 == name)
        .unwrap_or_else(|| panic!("no gradient case `{name}`"));
    check(net, batch, seed)
}
