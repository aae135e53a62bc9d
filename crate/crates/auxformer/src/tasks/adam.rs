//! Adam with bias correction.

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::Tensor;

/// First/second moment estimates per parameter, in canonical order.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    moments: Vec<(Tensor, Tensor)>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let moments = params
            .flat()
            .iter()
            .map(|t| (Tensor::zeros(t.shape()), Tensor::zeros(t.shape())))
            .collect();
        AdamState { step: 0, moments }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update. `grads` must be in canonical parameter order.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if grads.len() != state.moments.len() {
        return Err(Error::InvalidArgument(format!(
            "adam_step: {} gradients for {} parameters",
            grads.len(),
            state.moments.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);

    let mut index = 0;
    let mut failure: Option<Error> = None;
    params.visit_mut(|name, tensor| {
        if failure.is_some() {
            return;
        }
        let grad = &grads[index];
        if grad.shape() != tensor.shape() {
            failure = Some(Error::InvalidArgument(format!(
                "adam_step: gradient shape {:?} for {name} with shape {:?}",
                grad.shape(),
                tensor.shape()
            )));
            return;
        }
        let (m, v) = &mut state.moments[index];
        for i in 0..tensor.numel() {
            let g = grad.data()[i];
            let mi = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * g;
            let vi = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * g * g;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            let m_hat = mi / bias1;
            let v_hat = vi / bias2;
            tensor.data_mut()[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        index += 1;
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::tiny_hyper;

    fn setup() -> (ModelParams, AdamState, TrainConfig) {
        let params = ModelParams::init(4, 2, &tiny_hyper(), 0).unwrap();
        let state = AdamState::new(&params);
        (params, state, TrainConfig::default())
    }

    fn zero_grads(params: &ModelParams) -> Vec<Tensor> {
        params.flat().iter().map(|t| Tensor::zeros(t.shape())).collect()
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let (mut params, mut state, cfg) = setup();
        let before: Vec<Vec<f64>> = params.flat().iter().map(|t| t.data().to_vec()).collect();
        let grads = zero_grads(&params);
        adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        let after: Vec<Vec<f64>> = params.flat().iter().map(|t| t.data().to_vec()).collect();
        assert_eq!(before, after);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_matches_hand_evaluation() {
        let (mut params, mut state, mut cfg) = setup();
        cfg.learning_rate = 0.1;
        let p0 = params.encoder.weight.data()[0];
        let mut grads = zero_grads(&params);
        let g = 0.5;
        grads[0].data_mut()[0] = g; // encoder.w is first in canonical order
        adam_step(&mut params, &grads, &mut state, &cfg).unwrap();

        // hand evaluation of the Adam formulas at t = 1
        let m = (1.0 - cfg.beta1) * g;
        let v = (1.0 - cfg.beta2) * g * g;
        let m_hat = m / (1.0 - cfg.beta1);
        let v_hat = v / (1.0 - cfg.beta2);
        let expected = p0 - cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        assert_eq!(params.encoder.weight.data()[0], expected);
        // magnitude is close to lr * sign(g)
        assert!((params.encoder.weight.data()[0] - (p0 - 0.1)).abs() < 1e-8);
    }

    #[test]
    fn two_runs_are_bitwise_identical() {
        let run = || {
            let (mut params, mut state, cfg) = setup();
            let mut grads = zero_grads(&params);
            for (gi, g) in grads.iter_mut().enumerate() {
                for (i, slot) in g.data_mut().iter_mut().enumerate() {
                    *slot = ((gi * 31 + i * 7) % 13) as f64 / 13.0 - 0.5;
                }
            }
            for _ in 0..5 {
                adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
            }
            params
                .flat()
                .iter()
                .flat_map(|t| t.data().to_vec())
                .collect::<Vec<f64>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn gradient_count_mismatch_is_rejected() {
        let (mut params, mut state, cfg) = setup();
        let grads = vec![Tensor::zeros(&[1])];
        assert!(adam_step(&mut params, &grads, &mut state, &cfg).is_err());
    }
}
