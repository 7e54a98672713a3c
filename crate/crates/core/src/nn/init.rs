//! Weight initializers.

use super::{RngStream, Tensor2D};

/// Uniform on `[-limit, limit]` with `limit = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut RngStream) -> Tensor2D {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rows, cols, limit, rng)
}

pub fn uniform(rows: usize, cols: usize, limit: f64, rng: &mut RngStream) -> Tensor2D {
    let data = (0..rows * cols)
        .map(|_| rng.uniform_range(-limit, limit))
        .collect();
    Tensor2D::new(rows, cols, data).expect("finite by construction")
}

/// Orthogonal matrix: orthonormal rows when `rows <= cols`, orthonormal
/// columns otherwise. Built by modified Gram-Schmidt over a standard-normal
/// draw, which matches QR with a positive-diagonal `R`.
pub fn orthogonal(rows: usize, cols: usize, rng: &mut RngStream) -> Tensor2D {
    let (n_vec, dim) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut vecs: Vec<Vec<f64>> = (0..n_vec)
        .map(|_| (0..dim).map(|_| rng.normal()).collect())
        .collect();
    for i in 0..n_vec {
        for j in 0..i {
            let proj: f64 = vecs[i].iter().zip(&vecs[j]).map(|(a, b)| a * b).sum();
            let (head, tail) = vecs.split_at_mut(i);
            for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                *a -= proj * b;
            }
        }
        let norm = vecs[i].iter().map(|v| v * v).sum::<f64>().sqrt();
        vecs[i].iter_mut().for_each(|v| *v /= norm);
    }
    let mut out = Tensor2D::zeros(rows, cols);
    for (i, v) in vecs.iter().enumerate() {
        for (j, &x) in v.iter().enumerate() {
            if rows <= cols {
                out.set(i, j, x);
            } else {
                out.set(j, i, x);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram(t: &Tensor2D, by_rows: bool) -> Vec<Vec<f64>> {
        let n = if by_rows { t.rows() } else { t.cols() };
        let get = |v: usize, k: usize| if by_rows { t.get(v, k) } else { t.get(k, v) };
        let dim = if by_rows { t.cols() } else { t.rows() };
        (0..n)
            .map(|i| (0..n).map(|j| (0..dim).map(|k| get(i, k) * get(j, k)).sum()).collect())
            .collect()
    }

    #[test]
    fn orthogonal_rows_and_columns() {
        let mut rng = RngStream::new(3);
        for (r, c, by_rows) in [(8, 8, true), (4, 12, true), (12, 4, false)] {
            let q = orthogonal(r, c, &mut rng);
            let g = gram(&q, by_rows);
            for (i, row) in g.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((v - expect).abs() < 1e-10, "{r}x{c} [{i},{j}] = {v}");
                }
            }
        }
    }

    #[test]
    fn glorot_respects_limit() {
        let mut rng = RngStream::new(1);
        let w = glorot_uniform(10, 30, &mut rng);
        let limit = (6.0f64 / 40.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= limit));
    }
}
