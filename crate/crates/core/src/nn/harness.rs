//! Small self-contained models wrapping a single layer, for gradient checks.
//!
//! Each probe treats its input as a trainable [`Parameter`] as well, so a
//! check covers input gradients along with weight gradients. Outputs are
//! reduced to a scalar by `L = Σ c⊙y + ½ Σ y²` with fixed random `c`.

use super::{
    bce_grad, bce_loss, categorical_ce, categorical_ce_grad, init, BatchNorm, Dense,
    Differentiable, DropoutSpec, Embedding, Gru, Lstm, Mode, NnError, OutputActivation, Parameter,
    RngStream, SeqGrad, SimpleRnn, Tensor2D,
};

fn probe_loss(ys: &[Tensor2D], coef: &[Tensor2D]) -> (f64, Vec<Tensor2D>) {
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(ys.len());
    for (y, c) in ys.iter().zip(coef) {
        loss += y.data().iter().zip(c.data()).map(|(a, b)| a * b + 0.5 * a * a).sum::<f64>();
        grads.push(y.zip(c, |a, b| a + b));
    }
    (loss, grads)
}

fn coefs(shape: (usize, usize), n: usize, rng: &mut RngStream) -> Vec<Tensor2D> {
    (0..n).map(|_| init::uniform(shape.0, shape.1, 1.0, rng)).collect()
}

pub struct EmbeddingProbe {
    pub layer: Embedding,
    ids: Vec<Vec<u32>>,
    coef: Vec<Tensor2D>,
}

impl EmbeddingProbe {
    pub fn new(vocab: usize, dim: usize, batch: usize, steps: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed);
        let layer = Embedding::new(vocab, dim, &mut rng);
        // repeated ids exercise gradient accumulation
        let ids = (0..batch)
            .map(|_| (0..steps).map(|_| rng.below(vocab.min(4)) as u32).collect())
            .collect();
        let coef = coefs((batch, dim), steps, &mut rng);
        Self { layer, ids, coef }
    }

    fn run(&mut self, grad: bool) -> Result<f64, NnError> {
        let batch: Vec<&[u32]> = self.ids.iter().map(|v| v.as_slice()).collect();
        let ys = self.layer.forward(&batch)?;
        let (loss, d) = probe_loss(&ys, &self.coef);
        if grad {
            self.layer.table.zero_grad();
            self.layer.backward(&d)?;
        }
        Ok(loss)
    }
}

impl Differentiable for EmbeddingProbe {
    type Batch = ();

    fn loss(&mut self, _: &()) -> Result<f64, NnError> {
        self.run(false)
    }

    fn loss_and_grad(&mut self, _: &()) -> Result<f64, NnError> {
        self.run(true)
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.layer.params_mut()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecurrentKind {
    SimpleRnn,
    Lstm,
    Gru,
}

enum AnyRecurrent {
    SimpleRnn(SimpleRnn),
    Lstm(Lstm),
    Gru(Gru),
}

/// A recurrent layer over a fixed input sequence. With dropout enabled the
/// masks are redrawn from the same seed on every evaluation, so the loss is
/// a deterministic function of the parameters.
pub struct RecurrentProbe {
    layer: AnyRecurrent,
    xs: Vec<Parameter>,
    coef: Vec<Tensor2D>,
    mode: Mode,
    mask_seed: u64,
    only_last: bool,
}

impl RecurrentProbe {
    pub fn new(
        kind: RecurrentKind,
        in_dim: usize,
        units: usize,
        batch: usize,
        steps: usize,
        dropout: DropoutSpec,
        seed: u64,
    ) -> Self {
        let mut rng = RngStream::new(seed);
        let layer = match kind {
            RecurrentKind::SimpleRnn => AnyRecurrent::SimpleRnn(SimpleRnn::new(in_dim, units, dropout, &mut rng)),
            RecurrentKind::Lstm => AnyRecurrent::Lstm(Lstm::new(in_dim, units, dropout, &mut rng)),
            RecurrentKind::Gru => AnyRecurrent::Gru(Gru::new(in_dim, units, dropout, &mut rng)),
        };
        let mut layer = layer;
        // random biases so every gate operates away from its zero point
        let b = match &mut layer {
            AnyRecurrent::SimpleRnn(l) => &mut l.b,
            AnyRecurrent::Lstm(l) => &mut l.b,
            AnyRecurrent::Gru(l) => &mut l.b,
        };
        b.value = init::uniform(1, b.value.cols(), 0.5, &mut rng);
        let xs = (0..steps)
            .map(|t| Parameter::new(format!("x{t}"), init::uniform(batch, in_dim, 1.0, &mut rng)))
            .collect();
        let coef = coefs((batch, units), steps, &mut rng);
        let mode = if dropout == DropoutSpec::NONE {
            Mode::CHECK
        } else {
            Mode {
                training: true,
                dropout: true,
                update_stats: false,
            }
        };
        Self {
            layer,
            xs,
            coef,
            mode,
            mask_seed: seed ^ 0xD5,
            only_last: false,
        }
    }

    /// Feed the loss from the final hidden state only.
    pub fn last_state_only(mut self) -> Self {
        self.only_last = true;
        self
    }

    fn run(&mut self, grad: bool) -> Result<f64, NnError> {
        let xs: Vec<Tensor2D> = self.xs.iter().map(|p| p.value.clone()).collect();
        let mut rng = RngStream::new(self.mask_seed);
        let ys = match &mut self.layer {
            AnyRecurrent::SimpleRnn(l) => l.forward(&xs, self.mode, &mut rng)?,
            AnyRecurrent::Lstm(l) => l.forward(&xs, self.mode, &mut rng)?,
            AnyRecurrent::Gru(l) => l.forward(&xs, self.mode, &mut rng)?,
        };
        let n = ys.len();
        let (loss, d) = if self.only_last {
            probe_loss(&ys[n - 1..], &self.coef[n - 1..])
        } else {
            probe_loss(&ys, &self.coef)
        };
        if grad {
            for p in self.parameters_mut() {
                p.zero_grad();
            }
            let seq = if self.only_last {
                SeqGrad::Last(&d[0])
            } else {
                SeqGrad::Each(&d)
            };
            let dxs = match &mut self.layer {
                AnyRecurrent::SimpleRnn(l) => l.backward(seq)?,
                AnyRecurrent::Lstm(l) => l.backward(seq)?,
                AnyRecurrent::Gru(l) => l.backward(seq)?,
            };
            for (p, dx) in self.xs.iter_mut().zip(dxs) {
                p.grad = dx;
            }
        }
        Ok(loss)
    }
}

impl Differentiable for RecurrentProbe {
    type Batch = ();

    fn loss(&mut self, _: &()) -> Result<f64, NnError> {
        self.run(false)
    }

    fn loss_and_grad(&mut self, _: &()) -> Result<f64, NnError> {
        self.run(true)
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = match &mut self.layer {
            AnyRecurrent::SimpleRnn(l) => l.params_mut(),
            AnyRecurrent::Lstm(l) => l.params_mut(),
            AnyRecurrent::Gru(l) => l.params_mut(),
        };
        out.extend(self.xs.iter_mut());
        out
    }
}

pub struct BatchNormProbe {
    pub layer: BatchNorm,
    x: Parameter,
    coef: Vec<Tensor2D>,
}

impl BatchNormProbe {
    pub fn new(rows: usize, features: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed);
        let mut layer = BatchNorm::new(features);
        layer.gamma.value = init::uniform(1, features, 1.0, &mut rng).map(|v| v + 1.5);
        layer.beta.value = init::uniform(1, features, 1.0, &mut rng);
        let x = Parameter::new("x", init::uniform(rows, features, 2.0, &mut rng));
        let coef = coefs((rows, features), 1, &mut rng);
        Self { layer, x, coef }
    }

    fn run(&mut self, grad: bool) -> Result<f64, NnError> {
        let y = self.layer.forward(&self.x.value, Mode::CHECK)?;
        let (loss, d) = probe_loss(std::slice::from_ref(&y), &self.coef);
        if grad {
            self.layer.gamma.zero_grad();
            self.layer.beta.zero_grad();
            self.x.grad = self.layer.backward(&d[0])?;
        }
        Ok(loss)
    }
}

impl Differentiable for BatchNormProbe {
    type Batch = ();

    fn loss(&mut self, _: &()) -> Result<f64, NnError> {
        self.run(false)
    }

    fn loss_and_grad(&mut self, _: &()) -> Result<f64, NnError> {
        self.run(true)
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.layer.params_mut();
        out.push(&mut self.x);
        out
    }
}

pub struct DenseProbe {
    pub layer: Dense,
    h: Parameter,
    coef: Vec<Tensor2D>,
}

impl DenseProbe {
    pub fn new(rows: usize, in_dim: usize, out_dim: usize, activation: OutputActivation, seed: u64) -> Self {
        let mut rng = RngStream::new(seed);
        let mut layer = Dense::new(in_dim, out_dim, activation, &mut rng);
        layer.b.value = init::uniform(1, out_dim, 0.5, &mut rng);
        let h = Parameter::new("h", init::uniform(rows, in_dim, 1.0, &mut rng));
        let coef = coefs((rows, out_dim), 1, &mut rng);
        Self { layer, h, coef }
    }

    fn run(&mut self, grad: bool) -> Result<f64, NnError> {
        let y = self.layer.forward(&self.h.value, true)?;
        let (loss, d) = probe_loss(std::slice::from_ref(&y), &self.coef);
        if grad {
            self.layer.w.zero_grad();
            self.layer.b.zero_grad();
            self.h.grad = self.layer.backward(&d[0])?;
        }
        Ok(loss)
    }
}

impl Differentiable for DenseProbe {
    type Batch = ();

    fn loss(&mut self, _: &()) -> Result<f64, NnError> {
        self.run(false)
    }

    fn loss_and_grad(&mut self, _: &()) -> Result<f64, NnError> {
        self.run(true)
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.layer.params_mut();
        out.push(&mut self.h);
        out
    }
}

/// Sum of binary cross-entropies over a vector of probabilities.
pub struct BceProbe {
    p: Parameter,
    y: Vec<f64>,
}

impl BceProbe {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed);
        let p = (0..n).map(|_| rng.uniform_range(0.05, 0.95)).collect();
        let y = (0..n).map(|i| (i % 2) as f64).collect();
        Self {
            p: Parameter::new("p", Tensor2D::new(1, n, p).expect("finite")),
            y,
        }
    }
}

impl Differentiable for BceProbe {
    type Batch = ();

    fn loss(&mut self, _: &()) -> Result<f64, NnError> {
        Ok(self.p.value.data().iter().zip(&self.y).map(|(&p, &y)| bce_loss(p, y)).sum())
    }

    fn loss_and_grad(&mut self, b: &()) -> Result<f64, NnError> {
        let g: Vec<f64> = self.p.value.data().iter().zip(&self.y).map(|(&p, &y)| bce_grad(p, y)).collect();
        self.p.grad = Tensor2D::new(1, g.len(), g)?;
        self.loss(b)
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.p]
    }
}

/// Categorical cross-entropy of unnormalized distributions, one per row.
pub struct CategoricalProbe {
    dist: Parameter,
    classes: Vec<usize>,
}

impl CategoricalProbe {
    pub fn new(rows: usize, classes: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed);
        let mut dist = Tensor2D::zeros(rows, classes);
        for r in 0..rows {
            let row = dist.row_mut(r);
            for v in row.iter_mut() {
                *v = rng.uniform_range(0.1, 1.0);
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        let classes = (0..rows).map(|r| r % classes).collect();
        Self {
            dist: Parameter::new("dist", dist),
            classes,
        }
    }
}

impl Differentiable for CategoricalProbe {
    type Batch = ();

    fn loss(&mut self, _: &()) -> Result<f64, NnError> {
        Ok((0..self.dist.value.rows())
            .map(|r| categorical_ce(self.dist.value.row(r), self.classes[r]))
            .sum())
    }

    fn loss_and_grad(&mut self, b: &()) -> Result<f64, NnError> {
        for r in 0..self.dist.value.rows() {
            let g = categorical_ce_grad(self.dist.value.row(r), self.classes[r]);
            self.dist.grad.row_mut(r).copy_from_slice(&g);
        }
        self.loss(b)
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.dist]
    }
}
