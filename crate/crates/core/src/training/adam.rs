use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Inverse-time decay: the step uses `learning_rate / (1 + decay · decay_step)`.
    pub decay: f64,
    /// Coupled L2 weight decay added to the gradient (`g + weight_decay · p`).
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay: 0.0,
            weight_decay: 0.0,
        }
    }
}

impl AdamConfig {
    pub fn effective_rate(&self, decay_step: usize) -> f64 {
        self.learning_rate / (1.0 + self.decay * decay_step as f64)
    }
}

/// First and second moment estimates plus the bias-correction step count.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m: Vec<Tensor2<T>>,
    v: Vec<Tensor2<T>>,
    step: i32,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        Self {
            m: shapes.iter().map(|&(r, c)| Tensor2::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Tensor2::zeros(r, c)).collect(),
            step: 0,
        }
    }

    pub fn for_params(params: &[&Tensor2<T>]) -> Self {
        let shapes: Vec<_> = params.iter().map(|p| p.shape()).collect();
        Self::new(&shapes)
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> i32 {
        self.step
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Tensor2<T>],
    grads: &[Tensor2<T>],
    state: &mut AdamState<T>,
    decay_step: usize,
    config: &AdamConfig,
) {
    assert_eq!(params.len(), grads.len(), "one gradient per parameter");
    assert_eq!(params.len(), state.m.len(), "optimizer state matches parameters");
    state.step += 1;
    let b1 = T::lit(config.beta1);
    let b2 = T::lit(config.beta2);
    let one = T::one();
    let correction1 = one - b1.powi(state.step);
    let correction2 = one - b2.powi(state.step);
    let rate = T::lit(config.effective_rate(decay_step));
    let eps = T::lit(config.epsilon);
    let wd = T::lit(config.weight_decay);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        assert_eq!(p.shape(), g.shape(), "gradient shape");
        for (((pv, &gv), mv), vv) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
        {
            let g = if wd != T::zero() { gv + wd * *pv } else { gv };
            *mv = b1 * *mv + (one - b1) * g;
            *vv = b2 * *vv + (one - b2) * g * g;
            let m_hat = *mv / correction1;
            let v_hat = *vv / correction2;
            *pv -= rate * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor2::row_vector(&[1.5, -2.0]);
        let mut state = AdamState::new(&[(1, 2)]);
        adam_step(
            &mut [&mut p],
            &[Tensor2::zeros(1, 2)],
            &mut state,
            0,
            &AdamConfig::default(),
        );
        assert_eq!(p.as_slice(), &[1.5, -2.0]);
    }

    #[test]
    fn first_step_moves_by_rate_against_gradient_sign() {
        let cfg = AdamConfig {
            learning_rate: 0.002,
            ..AdamConfig::default()
        };
        let mut p: Tensor2<f64> = Tensor2::row_vector(&[0.0, 0.0, 0.0]);
        let mut state = AdamState::new(&[(1, 3)]);
        adam_step(
            &mut [&mut p],
            &[Tensor2::row_vector(&[3.0, -0.01, 250.0])],
            &mut state,
            0,
            &cfg,
        );
        for (&v, sign) in p.as_slice().iter().zip([-1.0, 1.0, -1.0]) {
            // m̂/√v̂ = sign(g); ε shifts it by at most ε/|g|.
            assert!((v - sign * 0.002).abs() < 0.002 * 1e-5, "{v}");
        }
    }

    #[test]
    fn decay_shrinks_rate() {
        let cfg = AdamConfig {
            learning_rate: 0.002,
            decay: 0.001,
            ..AdamConfig::default()
        };
        assert_eq!(cfg.effective_rate(0), 0.002);
        assert!((cfg.effective_rate(1000) - 0.001).abs() < 1e-18);
    }

    /// Scalar Adam written out independently of the tensor implementation.
    fn reference_adam(
        grad: impl Fn(f64, f64) -> (f64, f64),
        start: (f64, f64),
        steps: usize,
        cfg: &AdamConfig,
    ) -> (f64, f64) {
        let (mut x, mut y) = start;
        let (mut mx, mut my, mut vx, mut vy) = (0.0, 0.0, 0.0, 0.0);
        for t in 1..=steps {
            let (gx, gy) = grad(x, y);
            let lr = cfg.learning_rate / (1.0 + cfg.decay * (t - 1) as f64);
            mx = cfg.beta1 * mx + (1.0 - cfg.beta1) * gx;
            my = cfg.beta1 * my + (1.0 - cfg.beta1) * gy;
            vx = cfg.beta2 * vx + (1.0 - cfg.beta2) * gx * gx;
            vy = cfg.beta2 * vy + (1.0 - cfg.beta2) * gy * gy;
            let c1 = 1.0 - cfg.beta1.powi(t as i32);
            let c2 = 1.0 - cfg.beta2.powi(t as i32);
            x -= lr * (mx / c1) / ((vx / c2).sqrt() + cfg.epsilon);
            y -= lr * (my / c1) / ((vy / c2).sqrt() + cfg.epsilon);
        }
        (x, y)
    }

    #[test]
    fn matches_scalar_reference_bitwise() {
        let cfg = AdamConfig {
            learning_rate: 0.05,
            decay: 0.1,
            ..AdamConfig::default()
        };
        // f(x, y) = (x - 1)² + 3(y + 2)²
        let grad = |x: f64, y: f64| (2.0 * (x - 1.0), 6.0 * (y + 2.0));
        let mut p = Tensor2::row_vector(&[0.3, 0.7]);
        let mut state = AdamState::new(&[(1, 2)]);
        for step in 0..10 {
            let (gx, gy) = grad(p.get(0, 0), p.get(0, 1));
            adam_step(&mut [&mut p], &[Tensor2::row_vector(&[gx, gy])], &mut state, step, &cfg);
        }
        let (x, y) = reference_adam(grad, (0.3, 0.7), 10, &cfg);
        assert_eq!(p.get(0, 0).to_bits(), x.to_bits());
        assert_eq!(p.get(0, 1).to_bits(), y.to_bits());
    }
}
