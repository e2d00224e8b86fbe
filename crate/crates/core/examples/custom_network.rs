//! Builds a network from layer specs, checks one gradient by finite
//! differences and fits it with Adam.
//!
//!     cargo run --release --example custom_network

use qpsk_receiver::neuralnet::{mse_loss, AdamState, ArrayND, DropoutMode, LayerSpec, Network};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut net = Network::seeded(
        &[1, 6, 6],
        vec![
            LayerSpec::conv(3, 4, 1),
            LayerSpec::Relu,
            LayerSpec::max_pool(2, 2),
            LayerSpec::dense(2),
            LayerSpec::Linear,
        ],
        1,
    )?;
    println!("{} parameters", net.param_count());

    // two fixed patterns with fixed targets
    // a checkerboard and its negative
    let board = |i: usize| ((i / 6 + i % 6) % 2) as f64;
    let pixels = (0..36).map(board).chain((0..36).map(|i| -board(i))).collect();
    let x = ArrayND::from_vec(&[2, 1, 6, 6], pixels)?;
    let y = ArrayND::from_vec(&[2, 2], vec![1.0, -1.0, -0.5, 0.5])?;

    let loss_of = |net: &Network| -> f64 { mse_loss(&net.infer(&x).unwrap(), &y).unwrap().0 };
    // training-mode passes take a random stream for any dropout layers
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let acts = net.forward(&x, DropoutMode::Sample(&mut rng))?;
    let (_, dy) = mse_loss(acts.output(), &y)?;
    let grads = net.backward(&acts, &dy)?;
    let analytic = grads.flat().next().unwrap().data()[0];
    let h = 1e-6;
    net.params_mut().next().unwrap().data_mut()[0] += h;
    let up = loss_of(&net);
    net.params_mut().next().unwrap().data_mut()[0] -= 2.0 * h;
    let down = loss_of(&net);
    net.params_mut().next().unwrap().data_mut()[0] += h;
    println!("dL/dw0: backprop {analytic:.8}, finite difference {:.8}", (up - down) / (2.0 * h));

    let mut adam = AdamState::new(0.01);
    for step in 0..=300 {
        let acts = net.forward(&x, DropoutMode::Sample(&mut rng))?;
        let (loss, dy) = mse_loss(acts.output(), &y)?;
        if step % 50 == 0 {
            println!("step {step:>3}  loss {loss:.6}");
        }
        let grads = net.backward(&acts, &dy)?;
        adam.step(&mut net, &grads)?;
    }
    Ok(())
}
