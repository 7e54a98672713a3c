use super::{Mode, NnError, Parameter, Tensor2D};

pub const BN_EPSILON: f64 = 1e-3;
pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Tensor2D,
    inv_std: Vec<f64>,
}

/// Per-feature batch normalization over the rows of a `[N x F]` input.
/// Sequence outputs are stacked over (batch x time) by the caller.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Parameter,
    pub beta: Parameter,
    pub running_mean: Tensor2D,
    pub running_var: Tensor2D,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<BnCache>,
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: Parameter::new("bn.gamma", Tensor2D::filled(1, features, 1.0)),
            beta: Parameter::new("bn.beta", Tensor2D::zeros(1, features)),
            running_mean: Tensor2D::zeros(1, features),
            running_var: Tensor2D::filled(1, features, 1.0),
            eps: BN_EPSILON,
            momentum: BN_MOMENTUM,
            cache: None,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.value.cols()
    }

    pub fn forward(&mut self, x: &Tensor2D, mode: Mode) -> Result<Tensor2D, NnError> {
        let (n, f) = x.shape();
        if f != self.features() {
            return Err(NnError::Shape(format!("batch-norm expects {} features, got {f}", self.features())));
        }
        let (mean, var) = if mode.training {
            if n < 2 {
                return Err(NnError::DegenerateBatch(n));
            }
            let mean = x.column_sums().map(|s| s / n as f64);
            let mut var = Tensor2D::zeros(1, f);
            for r in 0..n {
                for ((v, &xv), &m) in var.data_mut().iter_mut().zip(x.row(r)).zip(mean.data()) {
                    *v += (xv - m) * (xv - m);
                }
            }
            let var = var.map(|s| s / n as f64);
            if mode.update_stats {
                let mo = self.momentum;
                self.running_mean = self.running_mean.zip(&mean, |r, b| mo * r + (1.0 - mo) * b);
                self.running_var = self.running_var.zip(&var, |r, b| mo * r + (1.0 - mo) * b);
            }
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let inv_std: Vec<f64> = var.data().iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = Tensor2D::zeros(n, f);
        let mut y = Tensor2D::zeros(n, f);
        let (g, b) = (self.gamma.value.data(), self.beta.value.data());
        for r in 0..n {
            let xr = x.row(r);
            let hr = xhat.row_mut(r);
            for j in 0..f {
                hr[j] = (xr[j] - mean.data()[j]) * inv_std[j];
            }
            let hr = xhat.row(r).to_vec();
            for (j, o) in y.row_mut(r).iter_mut().enumerate() {
                *o = g[j] * hr[j] + b[j];
            }
        }
        self.cache = mode.training.then_some(BnCache { xhat, inv_std });
        Ok(y)
    }

    /// Normalized values of the last training-mode forward pass.
    pub fn last_normalized(&self) -> Option<&Tensor2D> {
        self.cache.as_ref().map(|c| &c.xhat)
    }

    pub fn backward(&mut self, dy: &Tensor2D) -> Result<Tensor2D, NnError> {
        let cache = self.cache.as_ref().ok_or(NnError::NoForwardCache)?;
        let (n, f) = cache.xhat.shape();
        if dy.shape() != (n, f) {
            return Err(NnError::Shape("batch-norm gradient shape".into()));
        }
        let mut sum_dxhat = vec![0.0; f];
        let mut sum_dxhat_xhat = vec![0.0; f];
        let g = self.gamma.value.data();
        for r in 0..n {
            let (dr, hr) = (dy.row(r), cache.xhat.row(r));
            for j in 0..f {
                self.beta.grad.data_mut()[j] += dr[j];
                self.gamma.grad.data_mut()[j] += dr[j] * hr[j];
                let dh = dr[j] * g[j];
                sum_dxhat[j] += dh;
                sum_dxhat_xhat[j] += dh * hr[j];
            }
        }
        let nf = n as f64;
        let mut dx = Tensor2D::zeros(n, f);
        for r in 0..n {
            let (dr, hr) = (dy.row(r), cache.xhat.row(r));
            let out = dx.row_mut(r);
            for j in 0..f {
                let dh = dr[j] * g[j];
                out[j] = cache.inv_std[j] / nf * (nf * dh - sum_dxhat[j] - hr[j] * sum_dxhat_xhat[j]);
            }
        }
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

/// Functional form of [`BatchNorm::forward`].
pub fn batchnorm(x: &Tensor2D, state: &mut BatchNorm, mode: Mode) -> Result<Tensor2D, NnError> {
    state.forward(x, mode)
}
