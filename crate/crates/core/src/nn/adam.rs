use super::{RnnModel, TrainConfig};
use crate::{Error, Result};

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: usize) -> Self {
        Self { m: vec![0.0; params], v: vec![0.0; params], step: 0 }
    }

    pub fn for_model(model: &RnnModel) -> Self {
        Self::new(model.param_count())
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(model: &mut RnnModel, grad: &[f64], state: &mut AdamState, config: &TrainConfig) -> Result<()> {
    let n = model.param_count();
    if grad.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::Dimension {
            expected: format!("{n} parameters"),
            found: format!("gradient {}, moments {}/{}", grad.len(), state.m.len(), state.v.len()),
        });
    }
    state.step += 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powf(state.step as f64);
    let c2 = 1.0 - b2.powf(state.step as f64);
    for (i, p) in model.params_mut().iter_mut().enumerate() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    }
    Ok(())
}
