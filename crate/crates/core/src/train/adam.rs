use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FreezeMask, ParamSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the number of updates taken.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: ParamSet,
    pub v: ParamSet,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        AdamState {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One bias-corrected Adam update. Frozen names are skipped entirely, so
/// their values and moments never change. A non-finite gradient aborts
/// before anything is modified.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut AdamState,
    lr: f64,
    config: &AdamConfig,
    mask: &FreezeMask,
) -> Result<()> {
    params.check_same_schema(grads)?;
    params.check_same_schema(&state.m)?;
    params.check_same_schema(&state.v)?;
    for (name, g) in grads.iter() {
        if mask.contains(name) {
            continue;
        }
        if let Some(v) = g.data().iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name} contains {v}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for (name, p) in params.iter_mut() {
        if mask.contains(name) {
            continue;
        }
        let g = grads.require(name)?.data();
        let m = state.m.get_mut(name).expect("schema checked").data_mut();
        let v = state.v.get_mut(name).expect("schema checked").data_mut();
        for (i, pi) in p.data_mut().iter_mut().enumerate() {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            *pi -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + config.eps);
        }
    }
    Ok(())
}
