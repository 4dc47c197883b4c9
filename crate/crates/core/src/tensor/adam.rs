//! Adam with bias-corrected moment estimates.

use serde::{Deserialize, Serialize};

use super::{Result, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(TensorError::Param {
                op: "adam",
                msg: format!("{self:?}"),
            })
        }
    }
}

/// Optimizer state: one first/second moment pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        Self {
            config,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. `params` and `grads` must follow the
    /// order and shapes the state was created with.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(TensorError::Invalid {
                op: "adam",
                msg: format!(
                    "state tracks {} tensors, got {} params and {} grads",
                    self.m.len(),
                    params.len(),
                    grads.len()
                ),
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != m.shape() || g.shape() != m.shape() {
                return Err(TensorError::Shape {
                    op: "adam",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let slots = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((pi, &gi), (mi, vi)) in slots {
                let gi = gi as f64;
                let m_new = beta1 * *mi as f64 + (1.0 - beta1) * gi;
                let v_new = beta2 * *vi as f64 + (1.0 - beta2) * gi * gi;
                *mi = m_new as f32;
                *vi = v_new as f32;
                let update = lr * (m_new / c1) / ((v_new / c2).sqrt() + eps);
                *pi = (*pi as f64 - update) as f32;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Tensor::from_vec(vec![1.0, -2.0, 0.5]).unwrap();
        let g = Tensor::zeros(vec![3]);
        let mut state = AdamState::new(AdamConfig::default(), [&p]);
        state.step(&mut [&mut p], &[&g]).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0, 0.5]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let cfg = AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        };
        let mut p = Tensor::from_vec(vec![0.0; 4]).unwrap();
        let g = Tensor::from_vec(vec![0.3, -5.0, 1e-3, -0.7]).unwrap();
        let mut state = AdamState::new(cfg, [&p]);
        state.step(&mut [&mut p], &[&g]).unwrap();
        for (pi, gi) in p.data().iter().zip(g.data()) {
            let expected = -cfg.lr as f32 * gi.signum();
            assert!((pi - expected).abs() < 1e-6, "{pi} vs {expected}");
        }
    }

    #[test]
    fn identical_calls_are_bitwise_identical() {
        let run = || {
            let mut p = Tensor::from_vec(vec![0.1, 0.2, -0.3]).unwrap();
            let mut state = AdamState::new(AdamConfig::default(), [&p]);
            for k in 0..5 {
                let g = Tensor::from_vec(vec![0.01 * k as f32, -0.5, 0.25]).unwrap();
                state.step(&mut [&mut p], &[&g]).unwrap();
            }
            p.into_data()
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::zeros(vec![2]);
        let mut state = AdamState::new(AdamConfig::default(), [&p]);
        let g = Tensor::zeros(vec![3]);
        assert!(state.step(&mut [&mut p], &[&g]).is_err());
        assert_eq!(state.step_count(), 0);
    }
}
