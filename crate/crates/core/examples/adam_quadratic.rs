//! Minimises `sum((theta - c)^2)` with bare Adam steps.
//!
//! ```text
//! cargo run --example adam_quadratic -- [steps]
//! ```

use outbreak::nn::{adam_step, AdamState, HyperParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps: usize = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(5000);
    let hp = HyperParams {
        learning_rate: 0.05,
        ..Default::default()
    };
    let c: Vec<f64> = (0..5).map(|i| i as f64 - 2.0).collect();
    let mut theta = vec![3.0; c.len()];
    let mut state = AdamState::new(&[theta.as_slice()]);

    for step in 1..=steps {
        let g: Vec<f64> = theta.iter().zip(&c).map(|(t, c)| 2.0 * (t - c)).collect();
        adam_step(&mut state, &mut [theta.as_mut_slice()], &[g.as_slice()], &hp)?;
        if step.is_power_of_two() || step == steps {
            let f: f64 = theta.iter().zip(&c).map(|(t, c)| (t - c).powi(2)).sum();
            println!("step {step:>5}  f {f:.3e}");
        }
    }
    println!("theta {theta:.4?}");
    println!("c     {c:.4?}");
    Ok(())
}
