use alloc::vec::Vec;

use crate::tensor::{Gradients, ParamStore, Tensor};

pub const BETA1: f32 = 0.9;
pub const BETA2: f32 = 0.999;
pub const EPSILON: f32 = 1e-8;

/// First and second moment estimates per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore<f32>) -> Self {
        let zeros: Vec<Tensor<f32>> = params
            .iter()
            .map(|(_, _, p)| Tensor::zeros(p.shape()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// Adam with bias correction on `grad + weight_decay * param`.
pub fn adam_step(
    params: &mut ParamStore<f32>,
    grads: &Gradients<f32>,
    state: &mut AdamState,
    lr: f32,
    weight_decay: f32,
) {
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - libm::powf(BETA1, t as f32);
    let c2 = 1.0 - libm::powf(BETA2, t as f32);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let g = grads.get(id).data();
        let m = state.m[id.0].data_mut();
        let v = state.v[id.0].data_mut();
        let p = params.get_mut(id).data_mut();
        for i in 0..p.len() {
            let gi = g[i] + weight_decay * p[i];
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            p[i] -= lr * mh / (libm::sqrtf(vh) + EPSILON);
        }
    }
}
