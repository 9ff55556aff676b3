use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub hyper: AdamHyper,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[Tensor], hyper: AdamHyper) -> Self {
        Self {
            hyper,
            t: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }
}

/// One bias-corrected Adam update. Updated parameters are stored at single
/// precision.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState) {
    assert_eq!(params.len(), grads.len(), "adam_step: tensor count mismatch");
    assert_eq!(params.len(), state.m.len(), "adam_step: state does not match params");
    state.t += 1;
    let AdamHyper { lr, beta1, beta2, eps } = state.hyper;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        assert_eq!(p.len(), g.len(), "adam_step: gradient shape mismatch");
        for (((w, &gi), mi), vi) in p.data.iter_mut().zip(&g.data).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            let step = lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            *w = (*w - step) as f32 as f64;
        }
    }
}
