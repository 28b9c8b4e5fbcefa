use super::tensor::{Param, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam with decoupled weight decay. Each step first shrinks every parameter
/// by `1 − lr·wd`, then applies the bias-corrected Adam update.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn second_moments(&self) -> &[Vec<T>] {
        &self.second
    }

    pub fn step(&mut self, params: &mut [&mut Param<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.value.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "gradient shape {:?} for parameter {} of shape {:?}",
                    g.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::Numerics(format!("non-finite gradient for parameter {}", p.name)));
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len()
            || self.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.value.len())
        {
            return Err(Error::Shape("parameter set changed between optimizer steps".into()));
        }

        self.step += 1;
        let c = self.config;
        let lr = T::lit(c.lr);
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let eps = T::lit(c.eps);
        let decay = T::lit(1.0 - c.lr * c.weight_decay);
        let t = self.step.min(i32::MAX as u64) as i32;
        let correct1 = T::one() - b1.powi(t);
        let correct2 = T::one() - b2.powi(t);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((w, &gi), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                let m_hat = *mi / correct1;
                let v_hat = *vi / correct2;
                *w = *w * decay;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
