use super::{init, NnError, Parameter, RngStream, Tensor2D};

/// Looks up rows of `table` for each id.
pub fn embedding_forward(ids: &[u32], table: &Tensor2D) -> Result<Tensor2D, NnError> {
    let dim = table.cols();
    let mut out = Tensor2D::zeros(ids.len(), dim);
    for (t, &id) in ids.iter().enumerate() {
        let id = id as usize;
        if id >= table.rows() {
            return Err(NnError::Index {
                index: id,
                rows: table.rows(),
            });
        }
        out.row_mut(t).copy_from_slice(table.row(id));
    }
    Ok(out)
}

/// Token embedding over batches of equal-length id sequences.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: Parameter,
    cache: Option<Vec<Vec<u32>>>,
}

impl Embedding {
    /// Uniform in `[-0.05, 0.05]`.
    pub fn new(vocab: usize, dim: usize, rng: &mut RngStream) -> Self {
        Self::from_table(init::uniform(vocab, dim, 0.05, rng))
    }

    pub fn from_table(table: Tensor2D) -> Self {
        Self {
            table: Parameter::new("embedding", table),
            cache: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.table.value.cols()
    }

    /// `batch[b]` is one sequence; returns one `[B x dim]` tensor per step.
    pub fn forward(&mut self, batch: &[&[u32]]) -> Result<Vec<Tensor2D>, NnError> {
        let steps = batch.first().map_or(0, |s| s.len());
        if batch.iter().any(|s| s.len() != steps) {
            return Err(NnError::Shape("ragged id batch".into()));
        }
        let rows = self.table.value.rows();
        let dim = self.dim();
        let mut out = vec![Tensor2D::zeros(batch.len(), dim); steps];
        for (b, seq) in batch.iter().enumerate() {
            for (t, &id) in seq.iter().enumerate() {
                let id = id as usize;
                if id >= rows {
                    return Err(NnError::Index { index: id, rows });
                }
                out[t].row_mut(b).copy_from_slice(self.table.value.row(id));
            }
        }
        self.cache = Some(batch.iter().map(|s| s.to_vec()).collect());
        Ok(out)
    }

    /// Scatters step gradients back into the table rows that were read.
    pub fn backward(&mut self, d_steps: &[Tensor2D]) -> Result<(), NnError> {
        let batch = self.cache.as_ref().ok_or(NnError::NoForwardCache)?;
        for (b, seq) in batch.iter().enumerate() {
            for (t, &id) in seq.iter().enumerate() {
                let src = d_steps[t].row(b);
                for (g, d) in self.table.grad.row_mut(id as usize).iter_mut().zip(src) {
                    *g += d;
                }
            }
        }
        Ok(())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.table]
    }
}
