use super::{Arch, ModelError, ModelSpec};
use crate::nn::{
    BatchNorm, Dense, Differentiable, DoubleDouble, Embedding, Gru, Lstm, Mode, NnError, OutputActivation,
    Parameter, RngStream, SeqGrad, SimpleRnn, Tensor2D,
};
use crate::textprep::EncodedSample;

#[derive(Debug, Clone)]
pub(super) enum Body {
    Rnn {
        rnn1: SimpleRnn,
        bn1: BatchNorm,
        rnn2: SimpleRnn,
        bn2: BatchNorm,
    },
    Lstm {
        lstm: Lstm,
    },
    Gru {
        gru: Gru,
        bn: BatchNorm,
    },
}

/// Embedding, recurrent body and dense head for one preset.
#[derive(Debug, Clone)]
pub struct Network {
    pub(super) spec: ModelSpec,
    pub(super) embedding: Embedding,
    pub(super) body: Body,
    pub(super) dense: Dense,
    /// Rows per time step in the last forward pass.
    batch_rows: usize,
}

fn prefix(params: Vec<&mut Parameter>, p: &str) {
    for param in params {
        param.name = format!("{p}.{}", param.name);
    }
}

/// Trainable parameter count implied by the spec.
pub fn closed_form_parameter_count(spec: &ModelSpec) -> usize {
    let (e, u) = (spec.embed_dim, spec.units);
    let embedding = spec.vocab_size * e;
    let body = match spec.arch {
        Arch::Rnn => (e * u + u * u + u) + 2 * u + (u * u + u * u + u) + 2 * u,
        Arch::Lstm => 4 * (e * u + u * u + u),
        Arch::Gru => 3 * (e * u + u * u + u) + 2 * u,
    };
    let out = spec.output_units();
    embedding + body + u * out + out
}

/// Initializes a network from `spec` with draws from `rng`.
pub fn build_model(spec: &ModelSpec, rng: &mut RngStream) -> Result<Network, ModelError> {
    spec.validate()?;
    let mut embedding = Embedding::new(spec.vocab_size, spec.embed_dim, rng);
    let (e, u, d) = (spec.embed_dim, spec.units, spec.dropout);
    let mut body = match spec.arch {
        Arch::Rnn => Body::Rnn {
            rnn1: SimpleRnn::new(e, u, d, rng),
            bn1: BatchNorm::new(u),
            rnn2: SimpleRnn::new(u, u, d, rng),
            bn2: BatchNorm::new(u),
        },
        Arch::Lstm => Body::Lstm {
            lstm: Lstm::new(e, u, d, rng),
        },
        Arch::Gru => Body::Gru {
            gru: Gru::new(e, u, d, rng),
            bn: BatchNorm::new(u),
        },
    };
    let activation = if spec.output_classes == 2 {
        OutputActivation::Sigmoid
    } else {
        OutputActivation::Softmax
    };
    let mut dense = Dense::new(u, spec.output_units(), activation, rng);
    match &mut body {
        Body::Rnn {
            rnn1,
            bn1,
            rnn2,
            bn2,
        } => {
            prefix(rnn1.params_mut(), "l1");
            prefix(bn1.params_mut(), "l1");
            prefix(rnn2.params_mut(), "l2");
            prefix(bn2.params_mut(), "l2");
        }
        Body::Lstm { lstm } => prefix(lstm.params_mut(), "l1"),
        Body::Gru { gru, bn } => {
            prefix(gru.params_mut(), "l1");
            prefix(bn.params_mut(), "l1");
        }
    }
    prefix(embedding.params_mut(), "l0");
    prefix(dense.params_mut(), "out");
    Ok(Network {
        spec: spec.clone(),
        embedding,
        body,
        dense,
        batch_rows: 0,
    })
}

impl Network {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Trainable parameters in a fixed order.
    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.embedding.params_mut();
        match &mut self.body {
            Body::Rnn {
                rnn1,
                bn1,
                rnn2,
                bn2,
            } => {
                out.extend(rnn1.params_mut());
                out.extend(bn1.params_mut());
                out.extend(rnn2.params_mut());
                out.extend(bn2.params_mut());
            }
            Body::Lstm { lstm } => out.extend(lstm.params_mut()),
            Body::Gru { gru, bn } => {
                out.extend(gru.params_mut());
                out.extend(bn.params_mut());
            }
        }
        out.extend(self.dense.params_mut());
        out
    }

    pub fn parameter_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.len()).sum()
    }

    /// Batch-norm layers with their name prefixes.
    pub(crate) fn batchnorms_mut(&mut self) -> Vec<(&'static str, &mut BatchNorm)> {
        match &mut self.body {
            Body::Rnn { bn1, bn2, .. } => vec![("l1", bn1), ("l2", bn2)],
            Body::Lstm { .. } => Vec::new(),
            Body::Gru { bn, .. } => vec![("l1", bn)],
        }
    }

    /// Class probabilities from the output layer: `[B x 1]` for the sigmoid
    /// head, `[B x C]` for softmax.
    pub fn forward(
        &mut self,
        batch: &[&[u32]],
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<Tensor2D, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptySet("batch"));
        }
        self.batch_rows = batch.len();
        let xs = self.embedding.forward(batch)?;
        let h = match &mut self.body {
            Body::Lstm { lstm } => last(lstm.forward(&xs, mode, rng)?)?,
            Body::Gru { gru, bn } => {
                let h = last(gru.forward(&xs, mode, rng)?)?;
                bn.forward(&h, mode)?
            }
            Body::Rnn {
                rnn1,
                bn1,
                rnn2,
                bn2,
            } => {
                let hs = rnn1.forward(&xs, mode, rng)?;
                let normed = bn1.forward(&Tensor2D::vstack(&hs)?, mode)?;
                let h = last(rnn2.forward(&normed.vsplit(batch.len()), mode, rng)?)?;
                bn2.forward(&h, mode)?
            }
        };
        Ok(self.dense.forward(&h, mode.training)?)
    }

    /// Backpropagates `d loss / d logits` from the last training forward.
    pub fn backward_logits(&mut self, d_logits: &Tensor2D) -> Result<(), ModelError> {
        let dh = self.dense.backward_logits(d_logits)?;
        self.backward_body(dh)
    }

    /// Backpropagates `d loss / d probabilities`.
    pub fn backward(&mut self, d_probs: &Tensor2D) -> Result<(), ModelError> {
        let dh = self.dense.backward(d_probs)?;
        self.backward_body(dh)
    }

    fn backward_body(&mut self, dh: Tensor2D) -> Result<(), ModelError> {
        let dxs = match &mut self.body {
            Body::Lstm { lstm } => lstm.backward(SeqGrad::Last(&dh))?,
            Body::Gru { gru, bn } => {
                let d = bn.backward(&dh)?;
                gru.backward(SeqGrad::Last(&d))?
            }
            Body::Rnn {
                rnn1,
                bn1,
                rnn2,
                bn2,
            } => {
                let d = bn2.backward(&dh)?;
                let dys = rnn2.backward(SeqGrad::Last(&d))?;
                let d = bn1.backward(&Tensor2D::vstack(&dys)?)?;
                rnn1.backward(SeqGrad::Each(&d.vsplit(self.batch_rows)))?
            }
        };
        self.embedding.backward(&dxs)?;
        Ok(())
    }

    /// Mean loss over the batch and its gradient with respect to the output
    /// logits.
    pub fn loss_from_probs(
        &self,
        probs: &Tensor2D,
        labels: &[usize],
    ) -> Result<(f64, Tensor2D), ModelError> {
        use crate::nn::{bce_loss, categorical_ce};
        let classes = self.spec.output_classes;
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(ModelError::LabelOutOfRange { index: bad, classes });
        }
        let n = labels.len() as f64;
        let mut d = probs.clone();
        let mut loss = 0.0;
        if classes == 2 {
            for (r, &y) in labels.iter().enumerate() {
                let (p, y) = (probs.get(r, 0), y as f64);
                loss += bce_loss(p, y);
                d.set(r, 0, (p - y) / n);
            }
        } else {
            for (r, &y) in labels.iter().enumerate() {
                loss += categorical_ce(probs.row(r), y);
                for (j, v) in d.row_mut(r).iter_mut().enumerate() {
                    let target = if j == y { 1.0 } else { 0.0 };
                    *v = (*v - target) / n;
                }
            }
        }
        Ok((loss / n, d))
    }

    /// Forward, loss and backward for one batch; gradients are accumulated
    /// into the parameters. Returns the mean loss and the class
    /// probabilities.
    pub fn train_batch(
        &mut self,
        ids: &[&[u32]],
        labels: &[usize],
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<(f64, Tensor2D), ModelError> {
        let probs = self.forward(ids, mode, rng)?;
        let (loss, d_logits) = self.loss_from_probs(&probs, labels)?;
        self.backward_logits(&d_logits)?;
        Ok((loss, probs))
    }

    /// Per-sample class distributions in inference mode.
    pub fn predict_proba(&mut self, batch: &[&[u32]]) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut rng = RngStream::new(0);
        let mut out = Vec::with_capacity(batch.len());
        for chunk in batch.chunks(256) {
            let probs = self.forward(chunk, Mode::INFER, &mut rng)?;
            for r in 0..probs.rows() {
                if self.spec.output_classes == 2 {
                    let p = probs.get(r, 0);
                    out.push(vec![1.0 - p, p]);
                } else {
                    out.push(probs.row(r).to_vec());
                }
            }
        }
        Ok(out)
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

fn last(mut hs: Vec<Tensor2D>) -> Result<Tensor2D, NnError> {
    hs.pop().ok_or_else(|| NnError::Shape("empty sequence".into()))
}

fn split_batch(batch: &[EncodedSample]) -> (Vec<&[u32]>, Vec<usize>) {
    (
        batch.iter().map(|s| s.ids.as_slice()).collect(),
        batch.iter().map(|s| s.label_index).collect(),
    )
}

fn to_nn(e: ModelError) -> NnError {
    match e {
        ModelError::Nn(e) => e,
        other => NnError::InvalidArgument(other.to_string()),
    }
}

/// Training-mode arithmetic without dropout or running-stat updates.
impl Differentiable for Network {
    type Batch = [EncodedSample];

    fn loss(&mut self, batch: &[EncodedSample]) -> Result<f64, NnError> {
        let (ids, labels) = split_batch(batch);
        let probs = self.forward(&ids, Mode::CHECK, &mut RngStream::new(0)).map_err(to_nn)?;
        Ok(self.loss_from_probs(&probs, &labels).map_err(to_nn)?.0)
    }

    fn loss_and_grad(&mut self, batch: &[EncodedSample]) -> Result<f64, NnError> {
        self.zero_grads();
        let (ids, labels) = split_batch(batch);
        let (loss, _) = self
            .train_batch(&ids, &labels, Mode::CHECK, &mut RngStream::new(0))
            .map_err(to_nn)?;
        Ok(loss)
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.params_mut()
    }

    fn loss_wide(&mut self, batch: &[EncodedSample]) -> Result<DoubleDouble, NnError> {
        super::wide::wide_loss(self, batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lstm_preset_has_72353_parameters() {
        let spec = ModelSpec::preset(Arch::Lstm, 2);
        assert_eq!(closed_form_parameter_count(&spec), 72_353);
        let mut net = build_model(&spec, &mut RngStream::new(1)).unwrap();
        assert_eq!(net.parameter_count(), 72_353);
    }

    #[test]
    fn counts_match_closed_form_for_every_preset() {
        for arch in Arch::ALL {
            for classes in [2, 3] {
                let spec = ModelSpec::preset(arch, classes);
                let mut net = build_model(&spec, &mut RngStream::new(2)).unwrap();
                assert_eq!(net.parameter_count(), closed_form_parameter_count(&spec), "{arch} {classes}");
            }
        }
    }

    #[test]
    fn same_seed_same_initial_parameters() {
        let spec = ModelSpec::preset(Arch::Gru, 2);
        let mut a = build_model(&spec, &mut RngStream::new(5)).unwrap();
        let mut b = build_model(&spec, &mut RngStream::new(5)).unwrap();
        let va: Vec<Tensor2D> = a.params_mut().iter().map(|p| p.value.clone()).collect();
        let vb: Vec<Tensor2D> = b.params_mut().iter().map(|p| p.value.clone()).collect();
        assert_eq!(va, vb);
    }

    #[test]
    fn ternary_head_is_softmax_with_three_units() {
        let spec = ModelSpec::preset(Arch::Lstm, 3);
        let net = build_model(&spec, &mut RngStream::new(3)).unwrap();
        assert_eq!(net.dense.activation, OutputActivation::Softmax);
        assert_eq!(net.dense.w.value.cols(), 3);
        let spec = ModelSpec::preset(Arch::Lstm, 2);
        let net = build_model(&spec, &mut RngStream::new(3)).unwrap();
        assert_eq!(net.dense.activation, OutputActivation::Sigmoid);
    }

    #[test]
    fn parameter_names_are_unique() {
        let mut net = build_model(&ModelSpec::preset(Arch::Rnn, 2), &mut RngStream::new(0)).unwrap();
        let mut names: Vec<String> = net.params_mut().iter().map(|p| p.name.clone()).collect();
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n);
    }

    fn toy(arch: Arch, classes: usize) -> (Network, Vec<EncodedSample>) {
        let mut spec = ModelSpec::preset(arch, classes);
        spec.vocab_size = 20;
        spec.seq_len = 5;
        spec.dropout = crate::nn::DropoutSpec::NONE;
        let mut rng = RngStream::new(17);
        let net = build_model(&spec, &mut rng).unwrap();
        let batch = (0..4)
            .map(|i| EncodedSample {
                id: i.to_string(),
                ids: (0..5).map(|_| rng.below(20) as u32).collect(),
                label_index: i % classes,
            })
            .collect();
        (net, batch)
    }

    #[test]
    fn presets_pass_gradient_check_at_toy_size() {
        for arch in Arch::ALL {
            for classes in [2, 3] {
                let (mut net, batch) = toy(arch, classes);
                let r = crate::nn::grad_check(&mut net, batch.as_slice(), 1e-5).unwrap();
                assert!(r.max_relative_error < 1e-4, "{arch} {classes}: {r:?}");
            }
        }
    }
}
