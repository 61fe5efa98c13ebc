//! Fits the dense regressor to a noisy nonlinear function, saves a
//! checkpoint and reloads it.
//!
//! ```text
//! cargo run --example train_regressor -- [epochs]
//! ```

use outbreak::features::fit_scaler;
use outbreak::nn::{init_network, parse_checkpoint, predict, train, write_checkpoint, HyperParams, TrainedModel};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn truth(x: &[f64]) -> f64 {
    50.0 + 30.0 * (x[0] * 2.0).sin() + 10.0 * x[1] * x[2]
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(200);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let xs: Vec<Vec<f64>> = (0..400).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let ys: Vec<f64> = xs.iter().map(|x| truth(x) + rng.gen_range(-1.0..1.0)).collect();

    let scaler = fit_scaler(&xs, &ys)?;
    let rows: Vec<(Vec<f64>, f64)> = xs.iter().zip(&ys).map(|(x, &y)| (scaler.apply(x).unwrap(), scaler.scale_target(y))).collect();
    let mut network = init_network(&[3, 32, 16, 1], 42)?;
    let hp = HyperParams {
        epochs,
        ..Default::default()
    };
    let history = train(&mut network, &rows, &hp)?;
    for (i, e) in history.epochs.iter().enumerate().filter(|(i, _)| i % (epochs / 5).max(1) == 0) {
        println!("epoch {:>4}  mse {:.3e}  regularized {:.3e}", i + 1, e.data, e.regularized);
    }

    let model = TrainedModel { network, scaler };
    let mut buf = Vec::new();
    write_checkpoint(&model, &mut buf)?;
    let reloaded = parse_checkpoint(std::str::from_utf8(&buf)?)?;
    println!("checkpoint {} bytes, reload identical: {}", buf.len(), reloaded == model);

    for x in [[0.0, 0.0, 0.0], [0.7, 1.0, -1.0], [-1.5, 0.5, 1.5]] {
        let p = predict(&reloaded.network, &reloaded.scaler, &reloaded.scaler.apply(&x)?)?;
        println!("x {x:?}  truth {:>6.2}  predicted {p:>6.2}", truth(&x));
    }
    Ok(())
}
