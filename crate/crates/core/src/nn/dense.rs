use serde::{Deserialize, Serialize};

use super::{gemm_nt, gemm_tn, init, NnError, Parameter, RngStream, Tensor2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Sigmoid,
    Softmax,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Tensor2D) -> Tensor2D {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn activate(logits: Tensor2D, activation: OutputActivation) -> Tensor2D {
    match activation {
        OutputActivation::Sigmoid => logits.map(sigmoid),
        OutputActivation::Softmax => softmax_rows(&logits),
    }
}

/// `activation(h·W + b)`.
pub fn dense_forward(
    h: &Tensor2D,
    w: &Tensor2D,
    b: &Tensor2D,
    activation: OutputActivation,
) -> Result<Tensor2D, NnError> {
    Ok(activate(h.matmul(w)?.add_row(b)?, activation))
}

/// Output layer; `forward` returns probabilities, `backward` takes the
/// gradient with respect to those probabilities.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Parameter,
    pub b: Parameter,
    pub activation: OutputActivation,
    cache: Option<(Tensor2D, Tensor2D)>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, activation: OutputActivation, rng: &mut RngStream) -> Self {
        Self::from_weights(init::glorot_uniform(in_dim, out_dim, rng), Tensor2D::zeros(1, out_dim), activation)
    }

    pub fn from_weights(w: Tensor2D, b: Tensor2D, activation: OutputActivation) -> Self {
        Self {
            w: Parameter::new("dense.w", w),
            b: Parameter::new("dense.b", b),
            activation,
            cache: None,
        }
    }

    pub fn forward(&mut self, h: &Tensor2D, keep_cache: bool) -> Result<Tensor2D, NnError> {
        let y = dense_forward(h, &self.w.value, &self.b.value, self.activation)?;
        self.cache = keep_cache.then(|| (h.clone(), y.clone()));
        Ok(y)
    }

    pub fn backward(&mut self, d_probs: &Tensor2D) -> Result<Tensor2D, NnError> {
        let (_, y) = self.cache.as_ref().ok_or(NnError::NoForwardCache)?;
        if d_probs.shape() != y.shape() {
            return Err(NnError::Shape("dense gradient shape".into()));
        }
        let dz = match self.activation {
            OutputActivation::Sigmoid => y.zip(d_probs, |p, g| g * p * (1.0 - p)),
            OutputActivation::Softmax => {
                let mut dz = Tensor2D::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (p, g) = (y.row(r), d_probs.row(r));
                    let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
                    for (j, o) in dz.row_mut(r).iter_mut().enumerate() {
                        *o = p[j] * (g[j] - dot);
                    }
                }
                dz
            }
        };
        self.backward_logits(&dz)
    }

    /// Backward pass from `d loss / d logits`, skipping the activation.
    pub fn backward_logits(&mut self, dz: &Tensor2D) -> Result<Tensor2D, NnError> {
        let (h, y) = self.cache.as_ref().ok_or(NnError::NoForwardCache)?;
        if dz.shape() != y.shape() {
            return Err(NnError::Shape("dense gradient shape".into()));
        }
        let (n, k, m) = (h.rows(), h.cols(), y.cols());
        gemm_tn(self.w.grad.data_mut(), h.data(), dz.data(), n, k, m);
        self.b.grad.add_assign(&dz.column_sums());
        let mut dh = Tensor2D::zeros(n, k);
        gemm_nt(dh.data_mut(), dz.data(), self.w.value.data(), n, k, m);
        Ok(dh)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.w, &mut self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_logits() {
        let h = Tensor2D::zeros(2, 4);
        let s = dense_forward(&h, &Tensor2D::zeros(4, 1), &Tensor2D::zeros(1, 1), OutputActivation::Sigmoid).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = dense_forward(&h, &Tensor2D::zeros(4, 3), &Tensor2D::zeros(1, 3), OutputActivation::Softmax).unwrap();
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_is_shift_invariant_and_normalized() {
        let a = Tensor2D::from_rows(&[&[1.0, -2.0, 0.5, 3.0]]).unwrap();
        let b = a.map(|v| v + 123.0);
        let (sa, sb) = (softmax_rows(&a), softmax_rows(&b));
        for (x, y) in sa.data().iter().zip(sb.data()) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((sa.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_stays_open_interval() {
        for x in [-30.0, -5.0, 0.0, 5.0, 30.0] {
            let s = sigmoid(x);
            assert!(s > 0.0 && s < 1.0);
        }
    }

    #[test]
    fn shape_error() {
        let r = dense_forward(&Tensor2D::zeros(2, 3), &Tensor2D::zeros(4, 1), &Tensor2D::zeros(1, 1), OutputActivation::Sigmoid);
        assert!(matches!(r, Err(NnError::Shape(_))));
    }
}
