//! Compares backpropagated gradients with finite differences on a small
//! random network, then shows the check catching a corrupted gradient.
//!
//! ```text
//! cargo run --example gradient_check -- [seed]
//! ```

use outbreak::nn::{grad_check, grad_check_with, init_network};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(3);
    let net = init_network(&[6, 10, 5, 1], seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let target = rng.gen_range(-1.0..1.0);

    println!("network {:?}, {} parameters", net.layer_sizes(), net.parameter_count());
    for lambda in [0.0, 1e-4, 1e-1] {
        let err = grad_check(&net, &x, target, lambda, 1e-5)?;
        println!("lambda {lambda:<6} max relative error {err:.2e}");
    }
    let broken = grad_check_with(&net, &x, target, 1e-4, 1e-5, |g| {
        if let Some(b) = g.layers[0].bias.first_mut() {
            *b += 0.5;
        }
    })?;
    println!("with a corrupted bias gradient: {broken:.2e}");
    Ok(())
}
