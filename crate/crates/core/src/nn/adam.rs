use super::{HyperParams, NnError};

/// First and second moment estimates per parameter plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    /// Zeroed moments shaped like `blocks`.
    pub fn new<B: AsRef<[f64]>>(blocks: &[B]) -> Self {
        let zeros = |b: &B| vec![0.0; b.as_ref().len()];
        Self {
            m: blocks.iter().map(zeros).collect(),
            v: blocks.iter().map(zeros).collect(),
            t: 0,
        }
    }
}

/// One Adam update over every parameter block:
///
/// ```text
/// m <- b1 m + (1 - b1) g
/// v <- b2 v + (1 - b2) g^2
/// m_hat = m / (1 - b1^t),  v_hat = v / (1 - b2^t)
/// theta <- theta - eta * m_hat / (sqrt(v_hat) + eps)
/// ```
pub fn adam_step(state: &mut AdamState, params: &mut [&mut [f64]], grads: &[&[f64]], hp: &HyperParams) -> Result<(), NnError> {
    let shapes_agree = params.len() == grads.len()
        && params.len() == state.m.len()
        && params
            .iter()
            .zip(grads)
            .zip(&state.m)
            .all(|((p, g), m)| p.len() == g.len() && p.len() == m.len());
    if !shapes_agree {
        return Err(NnError::ShapeMismatch);
    }
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - hp.beta1.powi(t);
    let bias2 = 1.0 - hp.beta2.powi(t);
    for (k, (theta, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for i in 0..theta.len() {
            let gi = g[i];
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * gi;
            v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * gi * gi;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            theta[i] -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let hp = HyperParams::default();
        let mut theta = vec![1.0, -2.0, 3.0];
        let mut state = AdamState::new(&[theta.clone()]);
        adam_step(&mut state, &mut [&mut theta], &[&[0.0, 0.0, 0.0]], &hp).unwrap();
        assert_eq!(theta, vec![1.0, -2.0, 3.0]);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn shape_mismatch() {
        let hp = HyperParams::default();
        let mut theta = vec![0.0; 2];
        let mut state = AdamState::new(&[theta.clone()]);
        assert_eq!(
            adam_step(&mut state, &mut [&mut theta], &[&[1.0]], &hp),
            Err(NnError::ShapeMismatch)
        );
        assert_eq!(state.t, 0);
    }

    #[test]
    fn first_step_moves_by_about_eta() {
        let hp = HyperParams::default();
        let grads = [1e-2, -0.5, 3.0, -1e3];
        let mut theta = vec![0.0; 4];
        let mut state = AdamState::new(&[theta.clone()]);
        adam_step(&mut state, &mut [&mut theta], &[&grads], &hp).unwrap();
        for (th, g) in theta.iter().zip(grads) {
            let step = th.abs();
            assert!(step < hp.learning_rate && step > 0.999 * hp.learning_rate);
            assert_eq!(th.signum(), -g.signum());
        }
    }
}
