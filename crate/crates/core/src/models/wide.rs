//! Double-double re-implementation of the preset forward pass and loss.
//!
//! Written independently of the f64 layers (plain loops, no fused kernels)
//! and used as the finite-difference side of whole-network gradient checks.
//! Semantics match `Mode::CHECK`: batch statistics in batch-norm, no
//! dropout.

use super::network::Body;
use super::Network;
use crate::nn::{DoubleDouble, NnError, OutputActivation, Tensor2D, PROB_CLAMP};
use crate::textprep::EncodedSample;

type W = DoubleDouble;

#[derive(Clone)]
struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<W>,
}

impl Mat {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![W::from(0.0); rows * cols],
        }
    }

    fn from_tensor(t: &Tensor2D) -> Self {
        Self {
            rows: t.rows(),
            cols: t.cols(),
            data: t.data().iter().map(|&v| W::from(v)).collect(),
        }
    }

    fn at(&self, r: usize, c: usize) -> W {
        self.data[r * self.cols + c]
    }

    fn set(&mut self, r: usize, c: usize, v: W) {
        self.data[r * self.cols + c] = v;
    }

    /// `self · w` restricted to columns `[c0, c0 + n)` of `w`.
    fn mul_cols(&self, w: &Mat, c0: usize, n: usize) -> Mat {
        let mut out = Mat::zeros(self.rows, n);
        for (a_row, o_row) in self.data.chunks(self.cols).zip(out.data.chunks_mut(n)) {
            for (k, &a) in a_row.iter().enumerate() {
                let w_row = &w.data[k * w.cols + c0..k * w.cols + c0 + n];
                for (o, &b) in o_row.iter_mut().zip(w_row) {
                    *o += a * b;
                }
            }
        }
        out
    }
}

fn sigm(x: W) -> W {
    x.sigmoid()
}

fn tanh(x: W) -> W {
    x.tanh()
}

fn simple_rnn(xs: &[Mat], wx: &Mat, wh: &Mat, b: &Mat) -> Vec<Mat> {
    let (batch, u) = (xs[0].rows, wh.cols);
    let mut h = Mat::zeros(batch, u);
    let mut out = Vec::new();
    for x in xs {
        let a = x.mul_cols(wx, 0, u);
        let r = h.mul_cols(wh, 0, u);
        let mut next = Mat::zeros(batch, u);
        for i in 0..batch {
            for j in 0..u {
                next.set(i, j, tanh(a.at(i, j) + r.at(i, j) + b.at(0, j)));
            }
        }
        h = next;
        out.push(h.clone());
    }
    out
}

fn lstm(xs: &[Mat], wx: &Mat, wh: &Mat, b: &Mat) -> Mat {
    let (batch, u) = (xs[0].rows, wh.rows);
    let mut h = Mat::zeros(batch, u);
    let mut c = Mat::zeros(batch, u);
    for x in xs {
        let pre = |g: usize| {
            let a = x.mul_cols(wx, g * u, u);
            let r = h.mul_cols(wh, g * u, u);
            (a, r)
        };
        let gates: Vec<(Mat, Mat)> = (0..4).map(pre).collect();
        let mut hn = Mat::zeros(batch, u);
        let mut cn = Mat::zeros(batch, u);
        for i in 0..batch {
            for j in 0..u {
                let z = |g: usize| gates[g].0.at(i, j) + gates[g].1.at(i, j) + b.at(0, g * u + j);
                let (ig, fg, gg, og) = (sigm(z(0)), sigm(z(1)), tanh(z(2)), sigm(z(3)));
                let cv = fg * c.at(i, j) + ig * gg;
                cn.set(i, j, cv);
                hn.set(i, j, og * tanh(cv));
            }
        }
        h = hn;
        c = cn;
    }
    h
}

fn gru(xs: &[Mat], wx: &Mat, wh_zr: &Mat, wh_n: &Mat, b: &Mat) -> Mat {
    let (batch, u) = (xs[0].rows, wh_n.rows);
    let mut h = Mat::zeros(batch, u);
    for x in xs {
        let xz = x.mul_cols(wx, 0, u);
        let xr = x.mul_cols(wx, u, u);
        let xn = x.mul_cols(wx, 2 * u, u);
        let hz = h.mul_cols(wh_zr, 0, u);
        let hr = h.mul_cols(wh_zr, u, u);
        let mut z = Mat::zeros(batch, u);
        let mut rh = Mat::zeros(batch, u);
        for i in 0..batch {
            for j in 0..u {
                z.set(i, j, sigm(xz.at(i, j) + hz.at(i, j) + b.at(0, j)));
                let r = sigm(xr.at(i, j) + hr.at(i, j) + b.at(0, u + j));
                rh.set(i, j, r * h.at(i, j));
            }
        }
        let un = rh.mul_cols(wh_n, 0, u);
        let mut hn = Mat::zeros(batch, u);
        for i in 0..batch {
            for j in 0..u {
                let n = tanh(xn.at(i, j) + un.at(i, j) + b.at(0, 2 * u + j));
                let zv = z.at(i, j);
                hn.set(i, j, (W::from(1.0) - zv) * h.at(i, j) + zv * n);
            }
        }
        h = hn;
    }
    h
}

fn batchnorm(x: &Mat, gamma: &Mat, beta: &Mat, eps: f64) -> Mat {
    let n = W::from(x.rows as f64);
    let mut out = Mat::zeros(x.rows, x.cols);
    for j in 0..x.cols {
        let mut mean = W::from(0.0);
        for i in 0..x.rows {
            mean += x.at(i, j);
        }
        mean = mean / n;
        let mut var = W::from(0.0);
        for i in 0..x.rows {
            let d = x.at(i, j) - mean;
            var += d * d;
        }
        var = var / n;
        let denom = (var + eps).sqrt();
        for i in 0..x.rows {
            out.set(i, j, gamma.at(0, j) * ((x.at(i, j) - mean) / denom) + beta.at(0, j));
        }
    }
    out
}

fn vstack(parts: &[Mat]) -> Mat {
    let mut out = Mat::zeros(0, parts[0].cols);
    for p in parts {
        out.data.extend_from_slice(&p.data);
        out.rows += p.rows;
    }
    out
}

fn vsplit(m: &Mat, rows: usize) -> Vec<Mat> {
    m.data
        .chunks(rows * m.cols)
        .map(|c| Mat {
            rows,
            cols: m.cols,
            data: c.to_vec(),
        })
        .collect()
}

fn clamp(p: W) -> W {
    let lo = W::from(PROB_CLAMP);
    let hi = W::from(1.0 - PROB_CLAMP);
    if p < lo {
        lo
    } else if p > hi {
        hi
    } else {
        p
    }
}

/// Mean loss of `batch` under the network's current parameters.
pub(crate) fn wide_loss(net: &Network, batch: &[EncodedSample]) -> Result<W, NnError> {
    let table = &net.embedding.table.value;
    let steps = batch.first().map_or(0, |s| s.ids.len());
    let mut xs = Vec::with_capacity(steps);
    for t in 0..steps {
        let mut x = Mat::zeros(batch.len(), table.cols());
        for (i, s) in batch.iter().enumerate() {
            let id = s.ids[t] as usize;
            if id >= table.rows() {
                return Err(NnError::Index { index: id, rows: table.rows() });
            }
            for j in 0..table.cols() {
                x.set(i, j, W::from(table.get(id, j)));
            }
        }
        xs.push(x);
    }
    let m = Mat::from_tensor;
    let h = match &net.body {
        Body::Lstm { lstm: l } => lstm(&xs, &m(&l.wx.value), &m(&l.wh.value), &m(&l.b.value)),
        Body::Gru { gru: g, bn } => {
            let h = gru(&xs, &m(&g.wx.value), &m(&g.wh_zr.value), &m(&g.wh_n.value), &m(&g.b.value));
            batchnorm(&h, &m(&bn.gamma.value), &m(&bn.beta.value), bn.eps)
        }
        Body::Rnn {
            rnn1,
            bn1,
            rnn2,
            bn2,
        } => {
            let hs = simple_rnn(&xs, &m(&rnn1.wx.value), &m(&rnn1.wh.value), &m(&rnn1.b.value));
            let normed = batchnorm(&vstack(&hs), &m(&bn1.gamma.value), &m(&bn1.beta.value), bn1.eps);
            let hs2 = simple_rnn(
                &vsplit(&normed, batch.len()),
                &m(&rnn2.wx.value),
                &m(&rnn2.wh.value),
                &m(&rnn2.b.value),
            );
            let last = hs2.last().expect("non-empty sequence");
            batchnorm(last, &m(&bn2.gamma.value), &m(&bn2.beta.value), bn2.eps)
        }
    };
    let w = m(&net.dense.w.value);
    let b = m(&net.dense.b.value);
    let logits = h.mul_cols(&w, 0, w.cols);
    let mut total = W::from(0.0);
    for (i, s) in batch.iter().enumerate() {
        let z: Vec<W> = (0..w.cols).map(|j| logits.at(i, j) + b.at(0, j)).collect();
        let y = s.label_index;
        let loss = match net.dense.activation {
            OutputActivation::Sigmoid => {
                let p = clamp(sigm(z[0]));
                if y == 1 {
                    -p.ln()
                } else {
                    -(W::ONE - p).ln()
                }
            }
            OutputActivation::Softmax => {
                let mut max = z[0];
                for &v in &z {
                    if v > max {
                        max = v;
                    }
                }
                let exps: Vec<W> = z.iter().map(|&v| (v - max).exp()).collect();
                let mut sum = W::from(0.0);
                for &e in &exps {
                    sum += e;
                }
                -clamp(exps[y] / sum).ln()
            }
        };
        total += loss;
    }
    Ok(total / batch.len() as f64)
}
