use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{accumulate_data_gradients, adam_step, add_l2_gradients, AdamState, Gradients, HyperParams, Network, NnError};
use crate::features::ScalerParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    /// Mean squared error over the epoch's examples, accumulated as the
    /// batches were visited.
    pub data: f64,
    /// `data + lambda * sum(W^2)` with the weights at the end of the epoch.
    pub regularized: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochLoss>,
    /// Number of Adam steps taken.
    pub steps: u64,
}

impl TrainingHistory {
    pub fn final_loss(&self) -> Option<EpochLoss> {
        self.epochs.last().copied()
    }
}

/// Mini-batch Adam on the batch-mean regularized loss.
///
/// Batch order is reshuffled every epoch from a ChaCha8 stream seeded with
/// `hp.seed`, so the result depends only on `(net, rows, hp)`.
pub fn train<V: AsRef<[f64]>>(net: &mut Network, rows: &[(V, f64)], hp: &HyperParams) -> Result<TrainingHistory, NnError> {
    hp.validate()?;
    let first = rows.first().ok_or(NnError::EmptyDataset)?;
    if first.0.as_ref().len() != net.input_dim() {
        return Err(NnError::DimMismatch {
            expected: net.input_dim(),
            found: first.0.as_ref().len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut trace = net.forward(first.0.as_ref())?;
    let mut grads = Gradients::zeros_like(net);
    let mut adam = AdamState::new(&grads.blocks());
    let (mut delta, mut next) = (Vec::new(), Vec::new());
    let mut history = TrainingHistory::default();

    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut sum_sq = 0.0;
        for batch in order.chunks(hp.batch_size) {
            grads.clear();
            for &i in batch {
                let (x, target) = (&rows[i].0, rows[i].1);
                net.forward_into(x.as_ref(), &mut trace)?;
                let diff = trace.prediction - target;
                sum_sq += diff * diff;
                accumulate_data_gradients(net, &trace, target, &mut grads, &mut delta, &mut next);
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads.layers {
                g.weights.iter_mut().for_each(|v| *v *= scale);
                g.bias.iter_mut().for_each(|v| *v *= scale);
            }
            add_l2_gradients(net, hp.lambda, &mut grads);
            let grad_blocks = grads.blocks();
            adam_step(&mut adam, &mut net.parameter_blocks_mut(), &grad_blocks, hp)?;
        }
        let data = sum_sq / rows.len() as f64;
        let regularized = data + hp.lambda * net.weight_square_sum();
        if !data.is_finite() || !regularized.is_finite() {
            return Err(NnError::NonFiniteLoss { epoch });
        }
        history.epochs.push(EpochLoss { data, regularized });
    }
    history.steps = adam.t;
    Ok(history)
}

/// Forward pass on an already scaled row, inverse target scaling, and
/// clamping at zero.
pub fn predict(net: &Network, scaler: &ScalerParams, x: &[f64]) -> Result<f64, NnError> {
    let raw = net.predict_raw(x)?;
    Ok(scaler.invert_target(raw).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_network, DenseLayer, Activation};

    fn linear_rows(n: usize) -> Vec<(Vec<f64>, f64)> {
        (0..n)
            .map(|i| {
                let x = [(i % 7) as f64 / 7.0, (i % 5) as f64 / 5.0];
                (x.to_vec(), 0.3 * x[0] - 0.2 * x[1] + 0.5)
            })
            .collect()
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let mut net = init_network(&[2, 4, 1], 3).unwrap();
        let before = net.clone();
        let hp = HyperParams {
            epochs: 0,
            ..Default::default()
        };
        let h = train(&mut net, &linear_rows(10), &hp).unwrap();
        assert!(h.epochs.is_empty());
        assert_eq!(h.steps, 0);
        assert_eq!(net, before);
    }

    #[test]
    fn training_is_deterministic() {
        let hp = HyperParams {
            epochs: 20,
            batch_size: 8,
            ..Default::default()
        };
        let run = || {
            let mut net = init_network(&[2, 8, 4, 1], 11).unwrap();
            let h = train(&mut net, &linear_rows(50), &hp).unwrap();
            (net, h)
        };
        let (a, ha) = run();
        let (b, hb) = run();
        assert_eq!(ha, hb);
        let bits = |n: &Network| n.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias)).map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        // 50 rows in batches of 8 -> 7 steps per epoch
        assert_eq!(ha.steps, 20 * 7);
    }

    #[test]
    fn loss_decreases_and_regularized_dominates() {
        let hp = HyperParams {
            epochs: 200,
            batch_size: 10,
            learning_rate: 0.01,
            ..Default::default()
        };
        let mut net = init_network(&[2, 8, 1], 5).unwrap();
        let h = train(&mut net, &linear_rows(40), &hp).unwrap();
        let first = h.epochs[0].data;
        let last = h.final_loss().unwrap();
        assert!(last.data < first * 0.1, "{first} -> {}", last.data);
        assert!(h.epochs.iter().all(|e| e.regularized >= e.data));
    }

    #[test]
    fn errors() {
        let mut net = init_network(&[2, 1], 0).unwrap();
        let empty: Vec<(Vec<f64>, f64)> = vec![];
        assert_eq!(train(&mut net, &empty, &HyperParams::default()), Err(NnError::EmptyDataset));
        assert!(matches!(
            train(&mut net, &[(vec![1.0], 0.0)], &HyperParams::default()),
            Err(NnError::DimMismatch { .. })
        ));
        let hp = HyperParams {
            learning_rate: 1e300,
            epochs: 5,
            lambda: 0.0,
            ..Default::default()
        };
        let rows = vec![(vec![1e200, 1e200], 1e300)];
        assert!(matches!(train(&mut net, &rows, &hp), Err(NnError::NonFiniteLoss { epoch: 0 })));
    }

    #[test]
    fn predict_inverts_and_clamps() {
        let scaler = ScalerParams {
            mins: vec![0.0],
            maxs: vec![1.0],
            target_min: 7.0,
            target_max: 107.0,
        };
        let zero = Network {
            layers: vec![DenseLayer {
                inputs: 1,
                outputs: 1,
                weights: vec![0.0],
                bias: vec![0.0],
                activation: Activation::Identity,
            }],
        };
        assert_eq!(predict(&zero, &scaler, &[3.0]).unwrap(), 7.0);
        let mut negative = zero.clone();
        negative.layers[0].bias[0] = -0.193;
        // inverse-scales to -12.3
        assert!((scaler.invert_target(-0.193) + 12.3).abs() < 1e-9);
        assert_eq!(predict(&negative, &scaler, &[3.0]).unwrap(), 0.0);
    }
}
