use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Parameters with their Adam moments, step count, epoch counter and seed.
#[derive(Clone, Debug)]
pub struct TrainState<T> {
    pub params: Vec<Tensor<T>>,
    pub names: Vec<String>,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
    pub hyper: AdamConfig,
    pub epoch: usize,
    pub seed: u64,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(params: Vec<Tensor<T>>, names: Vec<String>, hyper: AdamConfig, seed: u64) -> Self {
        assert_eq!(params.len(), names.len(), "one name per parameter");
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect::<Vec<_>>();
        TrainState { m: zeros(), v: zeros(), params, names, t: 0, hyper, epoch: 0, seed }
    }
}

/// One bias-corrected Adam update. Gradients are validated before any state
/// changes.
pub fn adam_step<T: Scalar>(state: &mut TrainState<T>, grads: &[Tensor<T>]) -> Result<(), NnError> {
    if grads.len() != state.params.len() {
        return Err(NnError::Shape(format!("{} gradients for {} parameters", grads.len(), state.params.len())));
    }
    for ((g, p), name) in grads.iter().zip(&state.params).zip(&state.names) {
        if g.shape() != p.shape() {
            return Err(NnError::Shape(format!("gradient {:?} for parameter {name} {:?}", g.shape(), p.shape())));
        }
        if !g.all_finite() {
            return Err(NnError::NonFinite { param: name.clone() });
        }
    }
    state.t += 1;
    let h = state.hyper;
    let t = state.t as i32;
    let c1 = 1.0 - h.beta1.powi(t);
    let c2 = 1.0 - h.beta2.powi(t);
    let (b1, b2) = (T::from_f64(h.beta1), T::from_f64(h.beta2));
    let (ob1, ob2) = (T::from_f64(1.0 - h.beta1), T::from_f64(1.0 - h.beta2));
    let step = T::from_f64(h.lr / c1);
    let inv_c2 = T::from_f64(1.0 / c2);
    let eps = T::from_f64(h.eps);
    for (i, grad) in grads.iter().enumerate() {
        let g = grad.data();
        let m = state.m[i].data_mut();
        for (mk, &gk) in m.iter_mut().zip(g) {
            *mk = b1 * *mk + ob1 * gk;
        }
        let v = state.v[i].data_mut();
        for (vk, &gk) in v.iter_mut().zip(g) {
            *vk = b2 * *vk + ob2 * gk * gk;
        }
        let (m, v) = (state.m[i].data(), state.v[i].data());
        for ((p, &mk), &vk) in state.params[i].data_mut().iter_mut().zip(m).zip(v) {
            *p -= step * mk / ((vk * inv_c2).sqrt() + eps);
        }
    }
    Ok(())
}
