use crate::error::{Result, TensorError};
use crate::params::ParamSet;
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
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

/// Moment estimates for one [`ParamSet`], in its parameter order.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(_, p)| vec![T::zero(); p.value.len()])
                .collect()
        };
        Self {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// One bias-corrected Adam update; gradients are zeroed afterwards.
    pub fn step(&mut self, params: &mut ParamSet<T>) -> Result<()> {
        if let Some((_, p)) = params.iter().find(|(_, p)| p.grad.is_none()) {
            return Err(TensorError::MissingGradient {
                name: p.name.clone(),
            });
        }
        if self.first.len() != params.len() {
            return Err(TensorError::Contract {
                op: "adam_step",
                detail: format!(
                    "state tracks {} parameters, set has {}",
                    self.first.len(),
                    params.len()
                ),
            });
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let correct1 = T::from_f64(1.0 - c.beta1.powi(t));
        let correct2 = T::from_f64(1.0 - c.beta2.powi(t));
        let (lr, eps) = (T::from_f64(c.lr), T::from_f64(c.eps));
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let grad = p.grad.as_mut().expect("checked above");
            for (((w, g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grad.iter_mut())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = b1 * *m + (T::one() - b1) * *g;
                *v = b2 * *v + (T::one() - b2) * *g * *g;
                let m_hat = *m / correct1;
                let v_hat = *v / correct2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
                *g = T::zero();
            }
        }
        Ok(())
    }
}
