use serde::{Deserialize, Serialize};

use super::{NnError, Parameter, Tensor2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale gradients so their global L2 norm is at most this value.
    /// Off by default.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        }
    }
}

/// Bias-corrected Adam moments for an ordered parameter list.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Tensor2D>,
    pub v: Vec<Tensor2D>,
    pub t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    /// Applies one update and zeroes every gradient. Moments are allocated
    /// on the first call; later calls must pass parameters of the same shapes
    /// in the same order.
    pub fn step(&mut self, params: &mut [&mut Parameter]) -> Result<(), NnError> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor2D::zeros(p.value.rows(), p.value.cols())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len()
            || params.iter().zip(&self.m).any(|(p, m)| p.value.shape() != m.shape())
        {
            return Err(NnError::Shape("parameter list changed between Adam steps".into()));
        }
        let mut scale = 1.0;
        if let Some(max_norm) = self.config.clip_norm {
            let norm = params
                .iter()
                .flat_map(|p| p.grad.data())
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt();
            if norm > max_norm {
                scale = max_norm / norm;
            }
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            ..
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Parameter { value, grad, .. } = &mut **p;
            for (((w, g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data_mut().iter_mut())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let gs = *g * scale;
                *mi = beta1 * *mi + (1.0 - beta1) * gs;
                *vi = beta2 * *vi + (1.0 - beta2) * gs * gs;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
                *g = 0.0;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(vals: &[f64]) -> Parameter {
        Parameter::new("p", Tensor2D::new(1, vals.len(), vals.to_vec()).unwrap())
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = param(&[0.3, -1.2, 4.0]);
        let before = p.value.clone();
        let mut adam = AdamState::new(AdamConfig::default());
        adam.step(&mut [&mut p]).unwrap();
        assert_eq!(p.value, before);
    }

    #[test]
    fn unit_gradient_moves_by_lr() {
        let mut p = param(&[1.0]);
        p.grad.fill(1.0);
        let mut adam = AdamState::new(AdamConfig::default());
        adam.step(&mut [&mut p]).unwrap();
        // m̂ = 1, v̂ = 1, so Δ = lr / (1 + eps)
        let delta = (p.value.get(0, 0) - 1.0).abs();
        assert!((delta - 0.001).abs() < 1e-6);
        assert!((delta - 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(p.grad.get(0, 0), 0.0);
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let run = || {
            let mut p = param(&[0.5, 0.25]);
            let mut adam = AdamState::new(AdamConfig::default());
            for k in 0..5 {
                p.grad = Tensor2D::new(1, 2, vec![k as f64 * 0.1, -0.3]).unwrap();
                adam.step(&mut [&mut p]).unwrap();
            }
            p.value
        };
        assert_eq!(run(), run());

        let mut a = param(&[1.0]);
        let mut b = param(&[1.0, 2.0]);
        let mut adam = AdamState::new(AdamConfig::default());
        adam.step(&mut [&mut a]).unwrap();
        assert!(adam.step(&mut [&mut b]).is_err());
    }

    #[test]
    fn clipping_bounds_the_update_direction() {
        let mut p = param(&[0.0, 0.0]);
        p.grad = Tensor2D::new(1, 2, vec![30.0, 40.0]).unwrap();
        let mut adam = AdamState::new(AdamConfig {
            clip_norm: Some(5.0),
            ..AdamConfig::default()
        });
        adam.step(&mut [&mut p]).unwrap();
        assert!((adam.m[0].get(0, 0) - 0.1 * 3.0).abs() < 1e-12);
        assert!((adam.m[0].get(0, 1) - 0.1 * 4.0).abs() < 1e-12);
    }
}
