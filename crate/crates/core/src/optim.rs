use crate::encoder::{EncoderGrads, EncoderParams};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Bias-corrected Adam moments for every encoder tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: [Vec<f64>; 3],
    v: [Vec<f64>; 3],
    step: u64,
}

impl AdamState {
    pub fn new(params: &EncoderParams) -> Self {
        let zeros = |k: usize| vec![0.0; params.tensors()[k].len()];
        Self {
            m: [zeros(0), zeros(1), zeros(2)],
            v: [zeros(0), zeros(1), zeros(2)],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One in-place Adam update.
pub fn adam_step(params: &mut EncoderParams, grads: &EncoderGrads, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let correct1 = 1.0 - BETA1.powi(t);
    let correct2 = 1.0 - BETA2.powi(t);
    let grad_tensors = grads.tensors();
    for (k, param) in params.tensors_mut().into_iter().enumerate() {
        let g = grad_tensors[k];
        let m = &mut state.m[k];
        let v = &mut state.v[k];
        for idx in 0..param.len() {
            m[idx] = BETA1 * m[idx] + (1.0 - BETA1) * g[idx];
            v[idx] = BETA2 * v[idx] + (1.0 - BETA2) * g[idx] * g[idx];
            let m_hat = m[idx] / correct1;
            let v_hat = v[idx] / correct2;
            param[idx] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn filled(p: &EncoderParams, value: f64) -> EncoderGrads {
        let mut g = EncoderGrads::zeros_like(p);
        g.w_mlp.fill(value);
        g.b_mlp.fill(value);
        g.w_conv.fill(value);
        g
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = crate::encoder::init_params(3, 2, 1).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let g = filled(&p, 0.0);
        adam_step(&mut p, &g, &mut st, 0.001);
        assert_eq!(p.tensors(), before.tensors());
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = EncoderParams::zeros(2, 2);
        let mut st = AdamState::new(&p);
        let g = filled(&p, 1.0);
        adam_step(&mut p, &g, &mut st, 0.001);
        // m̂ = 1, v̂ = 1 -> Δ = -0.001 / (1 + 1e-8)
        for t in p.tensors() {
            for v in t {
                assert_abs_diff_eq!(*v, -0.001 / (1.0 + 1e-8), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn constant_gradient_step_tends_to_lr_sign() {
        let mut p = EncoderParams::zeros(1, 1);
        let mut st = AdamState::new(&p);
        let g = filled(&p, -3.0);
        let mut prev = 0.0;
        for _ in 0..2000 {
            adam_step(&mut p, &g, &mut st, 0.01);
            let now = p.w_mlp[[0, 0]];
            let delta = now - prev;
            prev = now;
            assert_abs_diff_eq!(delta, 0.01, epsilon = 1e-6);
        }
    }
}
