//! Adam optimizer with bias-corrected moment estimates.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// First and second moment buffers, aligned with a fixed parameter list.
pub struct AdamState {
    step: u64,
    slots: Vec<Moments>,
}

impl AdamState {
    pub fn new(params: &[(String, Tensor)]) -> Self {
        AdamState {
            step: 0,
            slots: params
                .iter()
                .map(|(_, t)| Moments {
                    m: vec![0.0; t.numel()],
                    v: vec![0.0; t.numel()],
                })
                .collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// In-place update of one parameter array.
pub fn adam_update_array(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
) {
    let bc1 = 1.0 - BETA1.powi(step as i32);
    let bc2 = 1.0 - BETA2.powi(step as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
    }
}

/// Apply one optimizer step over every parameter that accumulated a
/// gradient. Parameters with no gradient this step keep their moments and
/// values untouched.
pub fn adam_step(params: &[(String, Tensor)], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != state.slots.len() {
        return Err(Error::Config(format!(
            "optimizer tracks {} parameters, got {}",
            state.slots.len(),
            params.len()
        )));
    }
    state.step += 1;
    for ((name, tensor), slot) in params.iter().zip(state.slots.iter_mut()) {
        let Some(grad) = tensor.grad() else {
            continue;
        };
        if grad.len() != slot.m.len() {
            return Err(Error::Dimension {
                op: "adam_step",
                lhs: vec![slot.m.len()],
                rhs: vec![grad.len()],
            });
        }
        let mut data = tensor.value();
        adam_update_array(&mut data, &grad, &mut slot.m, &mut slot.v, state.step, lr);
        tensor
            .set_value(&data)
            .map_err(|_| Error::Config(format!("parameter '{name}' changed size mid-training")))?;
    }
    Ok(())
}
