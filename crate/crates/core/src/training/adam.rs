use serde::{Deserialize, Serialize};

use super::GradientSet;
use crate::detnet::{DetNetParams, T_FLOOR};
use crate::error::{shape_err, Error, Result};

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        AdamSettings {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if !ok {
            return Err(Error::Parameter(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// One bias-corrected Adam update of a flat parameter block. `step` is
/// 1-based.
pub fn adam_update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], s: &AdamSettings, step: usize) {
    let step = step.max(1) as i32;
    let c1 = 1.0 - s.beta1.powi(step);
    let c2 = 1.0 - s.beta2.powi(step);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
        v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] -= s.learning_rate * m_hat / (v_hat.sqrt() + s.eps);
    }
}

/// First and second moment buffers, one pair per parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &DetNetParams) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .layers()
            .iter()
            .flat_map(|l| l.blocks().map(|b| vec![0.0; b.len()]))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// Adam update of every DetNet parameter, then `|t_k|` is clamped to at
/// least [`T_FLOOR`] (keeping its sign).
pub fn adam_step(
    params: &mut DetNetParams,
    grads: &GradientSet,
    state: &mut AdamState,
    settings: &AdamSettings,
    step: usize,
) -> Result<()> {
    if grads.layers.len() != params.num_layers() {
        return Err(shape_err("gradient set does not match parameters"));
    }
    let mut slot = 0;
    for (layer, grad) in params.layers_mut().iter_mut().zip(&grads.layers) {
        for (p, g) in layer.blocks_mut().into_iter().zip(grad.blocks()) {
            if p.len() != g.len() || state.m[slot].len() != p.len() {
                return Err(shape_err("gradient block shape differs from parameter block"));
            }
            adam_update(p, g, &mut state.m[slot], &mut state.v[slot], settings, step);
            slot += 1;
        }
        if layer.t.abs() < T_FLOOR {
            layer.t = if layer.t < 0.0 { -T_FLOOR } else { T_FLOOR };
        }
    }
    Ok(())
}
