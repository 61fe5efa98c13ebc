use super::{activate, backward, dot, Activation, ForwardTrace, Gradients, Network, NnError};

/// `activate(z + dz) - activate(z)`, formed without subtracting two nearly
/// equal outputs whenever both points lie on the same linear piece.
fn activation_delta(a: Activation, z: f64, dz: f64) -> f64 {
    match a {
        Activation::Identity => dz,
        Activation::Relu if z > 0.0 && z + dz > 0.0 => dz,
        Activation::Relu if z <= 0.0 && z + dz <= 0.0 => 0.0,
        Activation::Relu => activate(a, z + dz) - activate(a, z),
    }
}

/// Change in the network output when pre-activation `row` of layer `k`
/// moves by `dz`, carried forward through the remaining layers as
/// differences from the unperturbed trace.
fn output_shift(net: &Network, trace: &ForwardTrace, k: usize, row: usize, dz: f64, bufs: &mut [Vec<f64>]) -> f64 {
    let layer = &net.layers[k];
    bufs[k].fill(0.0);
    bufs[k][row] = activation_delta(layer.activation, trace.pre_activations[k][row], dz);
    for m in k + 1..net.layers.len() {
        let (done, rest) = bufs.split_at_mut(m);
        let input = &done[m - 1];
        let l = &net.layers[m];
        for (i, out) in rest[0].iter_mut().enumerate() {
            *out = activation_delta(l.activation, trace.pre_activations[m][i], dot(l.weight_row(i), input));
        }
    }
    bufs[net.layers.len() - 1][0]
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Largest relative error between backpropagated gradients and central
/// differences `(L(theta + h) - L(theta - h)) / 2h` over every parameter.
///
/// The comparison is only meaningful at points where no hidden
/// pre-activation lies within the perturbation of zero: across a ReLU kink
/// the loss has no derivative and the difference quotient mixes both sides.
pub fn grad_check(net: &Network, x: &[f64], target: f64, lambda: f64, h: f64) -> Result<f64, NnError> {
    grad_check_with(net, x, target, lambda, h, |_| {})
}

/// Same as [`grad_check`], but lets `tamper` edit the analytic gradients
/// first. Used to confirm the check notices a wrong gradient.
pub fn grad_check_with<F>(net: &Network, x: &[f64], target: f64, lambda: f64, h: f64, tamper: F) -> Result<f64, NnError>
where
    F: FnOnce(&mut Gradients),
{
    assert!(h > 0.0, "step must be positive");
    let trace = net.forward(x)?;
    let mut analytic = backward(net, &trace, target, lambda)?;
    tamper(&mut analytic);

    let mut bufs: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.outputs]).collect();
    // With p(+-h) = p0 + d(+-), the loss difference factors as
    //   (p+ - t)^2 - (p- - t)^2 = (d+ - d-)(2(p0 - t) + d+ + d-)
    //   lambda((w+h)^2 - (w-h)^2) = 4 lambda w h for the penalized weight.
    let residual = 2.0 * (trace.prediction - target);
    let mut worst: f64 = 0.0;
    let mut numeric = |k: usize, row: usize, dz_plus: f64, dz_minus: f64, reg: f64| {
        let plus = output_shift(net, &trace, k, row, dz_plus, &mut bufs);
        let minus = output_shift(net, &trace, k, row, dz_minus, &mut bufs);
        ((plus - minus) * (residual + plus + minus) + reg) / (2.0 * h)
    };

    for k in 0..net.layers.len() {
        let layer = &net.layers[k];
        for (idx, &w) in layer.weights.iter().enumerate() {
            let (row, col) = (idx / layer.inputs, idx % layer.inputs);
            let input = trace.inputs[k][col];
            let n = numeric(k, row, h * input, -h * input, 4.0 * lambda * w * h);
            worst = worst.max(relative_error(analytic.layers[k].weights[idx], n));
        }
        for row in 0..layer.bias.len() {
            let n = numeric(k, row, h, -h, 0.0);
            worst = worst.max(relative_error(analytic.layers[k].bias[row], n));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_network;

    fn inputs(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0).collect()
    }

    #[test]
    fn small_net_passes() {
        let net = init_network(&[5, 8, 1], 3).unwrap();
        let err = grad_check(&net, &inputs(5), 0.7, 1e-3, 1e-5).unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn zero_gradient_point() {
        let net = init_network(&[5, 8, 1], 3).unwrap();
        let x = inputs(5);
        let target = net.predict_raw(&x).unwrap();
        let err = grad_check(&net, &x, target, 0.0, 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn corrupted_bias_is_detected() {
        let net = init_network(&[7, 16, 8, 1], 9).unwrap();
        let err = grad_check_with(&net, &inputs(7), 0.3, 1e-4, 1e-5, |g| g.layers[0].bias[0] += 0.1).unwrap();
        assert!(err > 1e-2, "{err}");
    }
}
