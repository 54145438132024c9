use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorer::ScorerParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ScorerParams,
    pub v: ScorerParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ScorerParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam step that ascends the objective whose gradient
/// is `grads`. Non-finite gradients abort without touching any state.
pub fn adam_step(params: &mut ScorerParams, grads: &ScorerParams, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) {
        return Err(Error::Argument("parameter, gradient and moment shapes differ".into()));
    }
    if !grads.is_finite() {
        return Err(Error::Aborted(format!(
            "non-finite gradient at optimizer step {}",
            state.step + 1
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let p = params.tensors_mut();
    let m = state.m.tensors_mut();
    let v = state.v.tensors_mut();
    for (((p, m), v), g) in p.into_iter().zip(m).zip(v).zip(grads.tensors()) {
        for i in 0..g.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            p[i] += cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    if !params.is_finite() {
        return Err(Error::Aborted(format!("non-finite parameters after step {}", state.step)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{init_params, Dims};

    fn dims() -> Dims {
        Dims {
            d: 2,
            d_pos: 1,
            hidden: 3,
            max_len: 3,
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = init_params(3, dims(), 6).unwrap();
        let before = p.clone();
        let mut s = AdamState::new(&p);
        let zero = p.zeros_like();
        adam_step(&mut p, &zero, &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step, 1);
        s.m.b2[0] = 1.0;
        s.v.b2[0] = 1.0;
        adam_step(&mut p, &zero, &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(s.m.b2[0], 0.9);
        assert_eq!(s.v.b2[0], 0.999);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = ScorerParams::zeros(dims(), 6).unwrap();
        let mut g = p.zeros_like();
        g.b2[0] = 0.5;
        g.b2[1] = -2.0;
        let cfg = AdamConfig::default();
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &cfg).unwrap();
        // mhat = g, vhat = g^2, so the step is lr * g / (|g| + eps)
        assert!((p.b2[0] - cfg.lr * 0.5 / (0.5 + cfg.eps)).abs() < 1e-15);
        assert!((p.b2[1] + cfg.lr * 2.0 / (2.0 + cfg.eps)).abs() < 1e-15);
        assert_eq!(p.b2[2], 0.0);
    }

    #[test]
    fn nan_aborts() {
        let mut p = ScorerParams::zeros(dims(), 6).unwrap();
        let mut g = p.zeros_like();
        g.w1[0] = f64::NAN;
        let mut s = AdamState::new(&p);
        let err = adam_step(&mut p, &g, &mut s, &AdamConfig::default());
        assert!(matches!(err, Err(Error::Aborted(_))));
        assert_eq!(s.step, 0);
    }
}
