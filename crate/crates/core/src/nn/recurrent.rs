//! SimpleRNN, LSTM and GRU layers with backpropagation through time.
//!
//! Inputs are one `[batch x features]` tensor per time step. Dropout is
//! variational: one input mask and one recurrent mask per sequence, reused
//! at every step.

use super::{
    dropout_mask, gemm_nn, gemm_nt, gemm_tn, init, DropoutSpec, Mode, NnError, Parameter,
    RngStream, Tensor2D,
};

fn sigm(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), NnError> {
    if cond {
        Ok(())
    } else {
        Err(NnError::Shape(what()))
    }
}

/// Gradient arriving at a recurrent layer's outputs.
#[derive(Debug, Clone, Copy)]
pub enum SeqGrad<'a> {
    /// Only the final hidden state was consumed downstream.
    Last(&'a Tensor2D),
    /// Every step's hidden state was consumed.
    Each(&'a [Tensor2D]),
}

impl SeqGrad<'_> {
    fn at(&self, t: usize, steps: usize) -> Option<&Tensor2D> {
        match self {
            SeqGrad::Last(g) => (t + 1 == steps).then_some(*g),
            SeqGrad::Each(gs) => gs.get(t),
        }
    }
}

fn masked(x: &Tensor2D, mask: &Option<Tensor2D>) -> Tensor2D {
    match mask {
        Some(m) => x.zip(m, |a, b| a * b),
        None => x.clone(),
    }
}

fn masked_in_place(x: &mut Tensor2D, mask: &Option<Tensor2D>) {
    if let Some(m) = mask {
        for (a, b) in x.data_mut().iter_mut().zip(m.data()) {
            *a *= b;
        }
    }
}

fn draw_masks(
    batch: usize,
    in_dim: usize,
    units: usize,
    dropout: DropoutSpec,
    mode: Mode,
    rng: &mut RngStream,
) -> (Option<Tensor2D>, Option<Tensor2D>) {
    if !(mode.training && mode.dropout) {
        return (None, None);
    }
    let mx = (dropout.input_rate > 0.0).then(|| dropout_mask(batch, in_dim, dropout.input_rate, rng));
    let mh = (dropout.recurrent_rate > 0.0)
        .then(|| dropout_mask(batch, units, dropout.recurrent_rate, rng));
    (mx, mh)
}

fn check_steps(xs: &[Tensor2D], in_dim: usize) -> Result<usize, NnError> {
    let first = xs.first().ok_or_else(|| NnError::Shape("empty sequence".into()))?;
    let batch = first.rows();
    for x in xs {
        check(x.shape() == (batch, in_dim), || {
            format!("step input {:?}, expected ({batch}, {in_dim})", x.shape())
        })?;
    }
    Ok(batch)
}

// ---------------------------------------------------------------- SimpleRNN

/// `h_t = tanh(x_t·Wx + h_prev·Wh + b)`.
pub fn simple_rnn_step(
    x_t: &Tensor2D,
    h_prev: &Tensor2D,
    wx: &Tensor2D,
    wh: &Tensor2D,
    b: &Tensor2D,
) -> Result<Tensor2D, NnError> {
    let units = wh.cols();
    check(
        x_t.cols() == wx.rows()
            && wx.cols() == units
            && wh.rows() == units
            && h_prev.shape() == (x_t.rows(), units)
            && b.shape() == (1, units),
        || "simple_rnn_step operand shapes".into(),
    )?;
    Ok(rnn_cell(x_t, h_prev, wx, wh, b))
}

fn rnn_cell(xd: &Tensor2D, hd: &Tensor2D, wx: &Tensor2D, wh: &Tensor2D, b: &Tensor2D) -> Tensor2D {
    let (batch, in_dim, units) = (xd.rows(), xd.cols(), wh.cols());
    let mut a = Tensor2D::zeros(batch, units);
    gemm_nn(a.data_mut(), xd.data(), wx.data(), batch, in_dim, units);
    gemm_nn(a.data_mut(), hd.data(), wh.data(), batch, units, units);
    a.add_row_assign(b);
    a.data_mut().iter_mut().for_each(|v| *v = v.tanh());
    a
}

#[derive(Debug, Clone)]
struct RnnCache {
    xd: Vec<Tensor2D>,
    hd: Vec<Tensor2D>,
    h: Vec<Tensor2D>,
    mx: Option<Tensor2D>,
    mh: Option<Tensor2D>,
}

#[derive(Debug, Clone)]
pub struct SimpleRnn {
    pub wx: Parameter,
    pub wh: Parameter,
    pub b: Parameter,
    pub dropout: DropoutSpec,
    cache: Option<RnnCache>,
}

impl SimpleRnn {
    pub fn new(in_dim: usize, units: usize, dropout: DropoutSpec, rng: &mut RngStream) -> Self {
        Self::from_weights(
            init::glorot_uniform(in_dim, units, rng),
            init::orthogonal(units, units, rng),
            Tensor2D::zeros(1, units),
            dropout,
        )
    }

    pub fn from_weights(wx: Tensor2D, wh: Tensor2D, b: Tensor2D, dropout: DropoutSpec) -> Self {
        Self {
            wx: Parameter::new("rnn.wx", wx),
            wh: Parameter::new("rnn.wh", wh),
            b: Parameter::new("rnn.b", b),
            dropout,
            cache: None,
        }
    }

    pub fn units(&self) -> usize {
        self.wh.value.cols()
    }

    pub fn in_dim(&self) -> usize {
        self.wx.value.rows()
    }

    /// Returns the hidden state at every step.
    pub fn forward(
        &mut self,
        xs: &[Tensor2D],
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<Vec<Tensor2D>, NnError> {
        let (in_dim, units) = (self.in_dim(), self.units());
        let batch = check_steps(xs, in_dim)?;
        let (mx, mh) = draw_masks(batch, in_dim, units, self.dropout, mode, rng);
        let mut h = Tensor2D::zeros(batch, units);
        let mut cache = RnnCache {
            xd: Vec::with_capacity(xs.len()),
            hd: Vec::with_capacity(xs.len()),
            h: Vec::with_capacity(xs.len()),
            mx,
            mh,
        };
        for x in xs {
            let xd = masked(x, &cache.mx);
            let hd = masked(&h, &cache.mh);
            h = rnn_cell(&xd, &hd, &self.wx.value, &self.wh.value, &self.b.value);
            cache.xd.push(xd);
            cache.hd.push(hd);
            cache.h.push(h.clone());
        }
        let out = cache.h.clone();
        self.cache = mode.training.then_some(cache);
        Ok(out)
    }

    /// Accumulates parameter gradients and returns the gradient per input step.
    pub fn backward(&mut self, d_out: SeqGrad<'_>) -> Result<Vec<Tensor2D>, NnError> {
        let cache = self.cache.as_ref().ok_or(NnError::NoForwardCache)?;
        let steps = cache.h.len();
        let (batch, in_dim, units) = (cache.h[0].rows(), self.in_dim(), self.units());
        let mut dxs = vec![Tensor2D::zeros(0, 0); steps];
        let mut dh_next = Tensor2D::zeros(batch, units);
        for t in (0..steps).rev() {
            let mut da = dh_next;
            if let Some(g) = d_out.at(t, steps) {
                da.add_assign(g);
            }
            for (d, &h) in da.data_mut().iter_mut().zip(cache.h[t].data()) {
                *d *= 1.0 - h * h;
            }
            gemm_tn(self.wx.grad.data_mut(), cache.xd[t].data(), da.data(), batch, in_dim, units);
            gemm_tn(self.wh.grad.data_mut(), cache.hd[t].data(), da.data(), batch, units, units);
            self.b.grad.add_assign(&da.column_sums());
            let mut dx = Tensor2D::zeros(batch, in_dim);
            gemm_nt(dx.data_mut(), da.data(), self.wx.value.data(), batch, in_dim, units);
            masked_in_place(&mut dx, &cache.mx);
            dxs[t] = dx;
            let mut dh = Tensor2D::zeros(batch, units);
            gemm_nt(dh.data_mut(), da.data(), self.wh.value.data(), batch, units, units);
            masked_in_place(&mut dh, &cache.mh);
            dh_next = dh;
        }
        Ok(dxs)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.wx, &mut self.wh, &mut self.b]
    }
}

// --------------------------------------------------------------------- LSTM

/// Fused LSTM weights; gate blocks are ordered input, forget, candidate,
/// output along the column axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    /// `[in x 4u]`
    pub wx: Tensor2D,
    /// `[u x 4u]`
    pub wh: Tensor2D,
    /// `[1 x 4u]`
    pub b: Tensor2D,
}

impl LstmWeights {
    pub fn zeros(in_dim: usize, units: usize) -> Self {
        Self {
            wx: Tensor2D::zeros(in_dim, 4 * units),
            wh: Tensor2D::zeros(units, 4 * units),
            b: Tensor2D::zeros(1, 4 * units),
        }
    }

    fn units(&self) -> usize {
        self.wh.rows()
    }
}

/// One LSTM step: `c_t = f⊙c_prev + i⊙g`, `h_t = o⊙tanh(c_t)`.
pub fn lstm_step(
    x_t: &Tensor2D,
    h_prev: &Tensor2D,
    c_prev: &Tensor2D,
    params: &LstmWeights,
) -> Result<(Tensor2D, Tensor2D), NnError> {
    let u = params.units();
    check(
        x_t.cols() == params.wx.rows()
            && params.wx.cols() == 4 * u
            && params.wh.cols() == 4 * u
            && params.b.shape() == (1, 4 * u)
            && h_prev.shape() == (x_t.rows(), u)
            && c_prev.shape() == h_prev.shape(),
        || "lstm_step operand shapes".into(),
    )?;
    let step = lstm_cell(x_t, h_prev, c_prev, &params.wx, &params.wh, &params.b);
    Ok((step.h, step.c))
}

#[derive(Debug, Clone)]
struct LstmStep {
    /// Activated gates `[B x 4u]`: i, f, g, o.
    gates: Tensor2D,
    c: Tensor2D,
    tanh_c: Tensor2D,
    h: Tensor2D,
}

fn lstm_cell(
    xd: &Tensor2D,
    hd: &Tensor2D,
    c_prev: &Tensor2D,
    wx: &Tensor2D,
    wh: &Tensor2D,
    b: &Tensor2D,
) -> LstmStep {
    let (batch, in_dim, u) = (xd.rows(), xd.cols(), wh.rows());
    let mut z = Tensor2D::zeros(batch, 4 * u);
    gemm_nn(z.data_mut(), xd.data(), wx.data(), batch, in_dim, 4 * u);
    gemm_nn(z.data_mut(), hd.data(), wh.data(), batch, u, 4 * u);
    z.add_row_assign(b);
    let mut c = Tensor2D::zeros(batch, u);
    let mut tanh_c = Tensor2D::zeros(batch, u);
    let mut h = Tensor2D::zeros(batch, u);
    for r in 0..batch {
        let zr = z.row_mut(r);
        for j in 0..u {
            zr[j] = sigm(zr[j]);
            zr[u + j] = sigm(zr[u + j]);
            zr[2 * u + j] = zr[2 * u + j].tanh();
            zr[3 * u + j] = sigm(zr[3 * u + j]);
        }
        let zr = z.row(r);
        let cp = c_prev.row(r);
        let (cr, tr, hr) = (c.row_mut(r), tanh_c.row_mut(r), h.row_mut(r));
        for j in 0..u {
            let cv = zr[u + j] * cp[j] + zr[j] * zr[2 * u + j];
            cr[j] = cv;
            tr[j] = cv.tanh();
            hr[j] = zr[3 * u + j] * tr[j];
        }
    }
    LstmStep {
        gates: z,
        c,
        tanh_c,
        h,
    }
}

#[derive(Debug, Clone)]
struct LstmCache {
    xd: Vec<Tensor2D>,
    hd: Vec<Tensor2D>,
    c_prev: Vec<Tensor2D>,
    steps: Vec<LstmStep>,
    mx: Option<Tensor2D>,
    mh: Option<Tensor2D>,
}

#[derive(Debug, Clone)]
pub struct Lstm {
    pub wx: Parameter,
    pub wh: Parameter,
    pub b: Parameter,
    pub dropout: DropoutSpec,
    cache: Option<LstmCache>,
}

impl Lstm {
    /// Glorot input kernel, orthogonal recurrent kernel, zero bias except a
    /// forget-gate bias of one.
    pub fn new(in_dim: usize, units: usize, dropout: DropoutSpec, rng: &mut RngStream) -> Self {
        let wx = init::glorot_uniform(in_dim, 4 * units, rng);
        let wh = init::orthogonal(units, 4 * units, rng);
        let mut b = Tensor2D::zeros(1, 4 * units);
        for j in units..2 * units {
            b.set(0, j, 1.0);
        }
        Self::from_weights(LstmWeights { wx, wh, b }, dropout)
    }

    pub fn from_weights(w: LstmWeights, dropout: DropoutSpec) -> Self {
        Self {
            wx: Parameter::new("lstm.wx", w.wx),
            wh: Parameter::new("lstm.wh", w.wh),
            b: Parameter::new("lstm.b", w.b),
            dropout,
            cache: None,
        }
    }

    pub fn units(&self) -> usize {
        self.wh.value.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.wx.value.rows()
    }

    pub fn forward(
        &mut self,
        xs: &[Tensor2D],
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<Vec<Tensor2D>, NnError> {
        let (in_dim, u) = (self.in_dim(), self.units());
        let batch = check_steps(xs, in_dim)?;
        let (mx, mh) = draw_masks(batch, in_dim, u, self.dropout, mode, rng);
        let n = xs.len();
        let mut cache = LstmCache {
            xd: Vec::with_capacity(n),
            hd: Vec::with_capacity(n),
            c_prev: Vec::with_capacity(n),
            steps: Vec::with_capacity(n),
            mx,
            mh,
        };
        let mut h = Tensor2D::zeros(batch, u);
        let mut c = Tensor2D::zeros(batch, u);
        let mut out = Vec::with_capacity(n);
        for x in xs {
            let xd = masked(x, &cache.mx);
            let hd = masked(&h, &cache.mh);
            let step = lstm_cell(&xd, &hd, &c, &self.wx.value, &self.wh.value, &self.b.value);
            h = step.h.clone();
            let c_next = step.c.clone();
            out.push(h.clone());
            if mode.training {
                cache.xd.push(xd);
                cache.hd.push(hd);
                cache.c_prev.push(std::mem::replace(&mut c, c_next));
                cache.steps.push(step);
            } else {
                c = c_next;
            }
        }
        self.cache = mode.training.then_some(cache);
        Ok(out)
    }

    pub fn backward(&mut self, d_out: SeqGrad<'_>) -> Result<Vec<Tensor2D>, NnError> {
        let cache = self.cache.as_ref().ok_or(NnError::NoForwardCache)?;
        let n = cache.steps.len();
        let (in_dim, u) = (self.in_dim(), self.units());
        let batch = cache.steps[0].h.rows();
        let mut dxs = vec![Tensor2D::zeros(0, 0); n];
        let mut dh_next = Tensor2D::zeros(batch, u);
        let mut dc_next = Tensor2D::zeros(batch, u);
        let mut dz = Tensor2D::zeros(batch, 4 * u);
        for t in (0..n).rev() {
            let st = &cache.steps[t];
            let mut dh = dh_next;
            if let Some(g) = d_out.at(t, n) {
                dh.add_assign(g);
            }
            let cp = &cache.c_prev[t];
            for r in 0..batch {
                let g = st.gates.row(r);
                let (dhr, tcr, cpr) = (dh.row(r), st.tanh_c.row(r), cp.row(r));
                let dcr = dc_next.row_mut(r);
                let dzr = dz.row_mut(r);
                for j in 0..u {
                    let (i, f, gg, o) = (g[j], g[u + j], g[2 * u + j], g[3 * u + j]);
                    let tc = tcr[j];
                    let dc = dcr[j] + dhr[j] * o * (1.0 - tc * tc);
                    dzr[j] = dc * gg * i * (1.0 - i);
                    dzr[u + j] = dc * cpr[j] * f * (1.0 - f);
                    dzr[2 * u + j] = dc * i * (1.0 - gg * gg);
                    dzr[3 * u + j] = dhr[j] * tc * o * (1.0 - o);
                    dcr[j] = dc * f;
                }
            }
            gemm_tn(self.wx.grad.data_mut(), cache.xd[t].data(), dz.data(), batch, in_dim, 4 * u);
            gemm_tn(self.wh.grad.data_mut(), cache.hd[t].data(), dz.data(), batch, u, 4 * u);
            self.b.grad.add_assign(&dz.column_sums());
            let mut dx = Tensor2D::zeros(batch, in_dim);
            gemm_nt(dx.data_mut(), dz.data(), self.wx.value.data(), batch, in_dim, 4 * u);
            masked_in_place(&mut dx, &cache.mx);
            dxs[t] = dx;
            let mut dhp = Tensor2D::zeros(batch, u);
            gemm_nt(dhp.data_mut(), dz.data(), self.wh.value.data(), batch, u, 4 * u);
            masked_in_place(&mut dhp, &cache.mh);
            dh_next = dhp;
        }
        Ok(dxs)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.wx, &mut self.wh, &mut self.b]
    }
}

// ---------------------------------------------------------------------- GRU

/// GRU weights. Input kernel and bias are fused with blocks ordered update
/// (z), reset (r), candidate (n).
#[derive(Debug, Clone, PartialEq)]
pub struct GruWeights {
    /// `[in x 3u]`
    pub wx: Tensor2D,
    /// Recurrent kernel for z and r, `[u x 2u]`.
    pub wh_zr: Tensor2D,
    /// Recurrent kernel for the candidate, `[u x u]`.
    pub wh_n: Tensor2D,
    /// `[1 x 3u]`
    pub b: Tensor2D,
}

impl GruWeights {
    pub fn zeros(in_dim: usize, units: usize) -> Self {
        Self {
            wx: Tensor2D::zeros(in_dim, 3 * units),
            wh_zr: Tensor2D::zeros(units, 2 * units),
            wh_n: Tensor2D::zeros(units, units),
            b: Tensor2D::zeros(1, 3 * units),
        }
    }

    fn units(&self) -> usize {
        self.wh_n.rows()
    }
}

/// One GRU step: `h_t = (1 - z)⊙h_prev + z⊙n` with
/// `n = tanh(x·Wn + (r⊙h_prev)·Un + bn)`.
pub fn gru_step(x_t: &Tensor2D, h_prev: &Tensor2D, params: &GruWeights) -> Result<Tensor2D, NnError> {
    let u = params.units();
    check(
        x_t.cols() == params.wx.rows()
            && params.wx.cols() == 3 * u
            && params.wh_zr.shape() == (u, 2 * u)
            && params.wh_n.shape() == (u, u)
            && params.b.shape() == (1, 3 * u)
            && h_prev.shape() == (x_t.rows(), u),
        || "gru_step operand shapes".into(),
    )?;
    Ok(gru_cell(x_t, h_prev, h_prev, params.parts()).h)
}

struct GruParts<'a> {
    wx: &'a Tensor2D,
    wh_zr: &'a Tensor2D,
    wh_n: &'a Tensor2D,
    b: &'a Tensor2D,
}

impl GruWeights {
    fn parts(&self) -> GruParts<'_> {
        GruParts {
            wx: &self.wx,
            wh_zr: &self.wh_zr,
            wh_n: &self.wh_n,
            b: &self.b,
        }
    }
}

#[derive(Debug, Clone)]
struct GruStep {
    z: Tensor2D,
    r: Tensor2D,
    n: Tensor2D,
    /// `r ⊙ hd`
    rh: Tensor2D,
    h: Tensor2D,
}

/// `hd` is the (possibly dropped-out) state fed to the matmuls, `h_prev`
/// the raw state carried through the update gate.
fn gru_cell(xd: &Tensor2D, hd: &Tensor2D, h_prev: &Tensor2D, p: GruParts<'_>) -> GruStep {
    let (batch, in_dim, u) = (xd.rows(), xd.cols(), p.wh_n.rows());
    let mut xw = Tensor2D::zeros(batch, 3 * u);
    gemm_nn(xw.data_mut(), xd.data(), p.wx.data(), batch, in_dim, 3 * u);
    xw.add_row_assign(p.b);
    let mut hu = Tensor2D::zeros(batch, 2 * u);
    gemm_nn(hu.data_mut(), hd.data(), p.wh_zr.data(), batch, u, 2 * u);
    let mut z = Tensor2D::zeros(batch, u);
    let mut r = Tensor2D::zeros(batch, u);
    let mut rh = Tensor2D::zeros(batch, u);
    for row in 0..batch {
        let (xr, hr, hdr) = (xw.row(row), hu.row(row), hd.row(row));
        let (zr, rr) = (z.row_mut(row), r.row_mut(row));
        for j in 0..u {
            zr[j] = sigm(xr[j] + hr[j]);
            rr[j] = sigm(xr[u + j] + hr[u + j]);
        }
        let rr = r.row(row);
        let rhr = rh.row_mut(row);
        for j in 0..u {
            rhr[j] = rr[j] * hdr[j];
        }
    }
    let mut n = Tensor2D::zeros(batch, u);
    gemm_nn(n.data_mut(), rh.data(), p.wh_n.data(), batch, u, u);
    let mut h = Tensor2D::zeros(batch, u);
    for row in 0..batch {
        let xr = xw.row(row);
        let (zr, hp) = (z.row(row), h_prev.row(row));
        let nr = n.row_mut(row);
        let hr = h.row_mut(row);
        for j in 0..u {
            nr[j] = (nr[j] + xr[2 * u + j]).tanh();
            hr[j] = (1.0 - zr[j]) * hp[j] + zr[j] * nr[j];
        }
    }
    GruStep { z, r, n, rh, h }
}

#[derive(Debug, Clone)]
struct GruCache {
    xd: Vec<Tensor2D>,
    hd: Vec<Tensor2D>,
    h_prev: Vec<Tensor2D>,
    steps: Vec<GruStep>,
    mx: Option<Tensor2D>,
    mh: Option<Tensor2D>,
}

#[derive(Debug, Clone)]
pub struct Gru {
    pub wx: Parameter,
    pub wh_zr: Parameter,
    pub wh_n: Parameter,
    pub b: Parameter,
    pub dropout: DropoutSpec,
    cache: Option<GruCache>,
}

impl Gru {
    pub fn new(in_dim: usize, units: usize, dropout: DropoutSpec, rng: &mut RngStream) -> Self {
        Self::from_weights(
            GruWeights {
                wx: init::glorot_uniform(in_dim, 3 * units, rng),
                wh_zr: init::orthogonal(units, 2 * units, rng),
                wh_n: init::orthogonal(units, units, rng),
                b: Tensor2D::zeros(1, 3 * units),
            },
            dropout,
        )
    }

    pub fn from_weights(w: GruWeights, dropout: DropoutSpec) -> Self {
        Self {
            wx: Parameter::new("gru.wx", w.wx),
            wh_zr: Parameter::new("gru.wh_zr", w.wh_zr),
            wh_n: Parameter::new("gru.wh_n", w.wh_n),
            b: Parameter::new("gru.b", w.b),
            dropout,
            cache: None,
        }
    }

    pub fn units(&self) -> usize {
        self.wh_n.value.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.wx.value.rows()
    }

    fn parts(&self) -> GruParts<'_> {
        GruParts {
            wx: &self.wx.value,
            wh_zr: &self.wh_zr.value,
            wh_n: &self.wh_n.value,
            b: &self.b.value,
        }
    }

    pub fn forward(
        &mut self,
        xs: &[Tensor2D],
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<Vec<Tensor2D>, NnError> {
        let (in_dim, u) = (self.in_dim(), self.units());
        let batch = check_steps(xs, in_dim)?;
        let (mx, mh) = draw_masks(batch, in_dim, u, self.dropout, mode, rng);
        let n = xs.len();
        let mut cache = GruCache {
            xd: Vec::with_capacity(n),
            hd: Vec::with_capacity(n),
            h_prev: Vec::with_capacity(n),
            steps: Vec::with_capacity(n),
            mx,
            mh,
        };
        let mut h = Tensor2D::zeros(batch, u);
        let mut out = Vec::with_capacity(n);
        for x in xs {
            let xd = masked(x, &cache.mx);
            let hd = masked(&h, &cache.mh);
            let step = gru_cell(&xd, &hd, &h, self.parts());
            let h_next = step.h.clone();
            out.push(h_next.clone());
            if mode.training {
                cache.xd.push(xd);
                cache.hd.push(hd);
                cache.h_prev.push(std::mem::replace(&mut h, h_next));
                cache.steps.push(step);
            } else {
                h = h_next;
            }
        }
        self.cache = mode.training.then_some(cache);
        Ok(out)
    }

    pub fn backward(&mut self, d_out: SeqGrad<'_>) -> Result<Vec<Tensor2D>, NnError> {
        let cache = self.cache.as_ref().ok_or(NnError::NoForwardCache)?;
        let n = cache.steps.len();
        let (in_dim, u) = (self.in_dim(), self.units());
        let batch = cache.steps[0].h.rows();
        let mut dxs = vec![Tensor2D::zeros(0, 0); n];
        let mut dh_next = Tensor2D::zeros(batch, u);
        let mut dxw = Tensor2D::zeros(batch, 3 * u);
        let mut dhu = Tensor2D::zeros(batch, 2 * u);
        let mut dan = Tensor2D::zeros(batch, u);
        for t in (0..n).rev() {
            let st = &cache.steps[t];
            let (hp, hd) = (&cache.h_prev[t], &cache.hd[t]);
            let mut dh = dh_next;
            if let Some(g) = d_out.at(t, n) {
                dh.add_assign(g);
            }
            // direct path through (1 - z) ⊙ h_prev
            let mut dh_prev = Tensor2D::zeros(batch, u);
            for r in 0..batch {
                let (dhr, zr, nr, hpr) = (dh.row(r), st.z.row(r), st.n.row(r), hp.row(r));
                let danr = dan.row_mut(r);
                for j in 0..u {
                    danr[j] = dhr[j] * zr[j] * (1.0 - nr[j] * nr[j]);
                }
                let dxr = dxw.row_mut(r);
                for j in 0..u {
                    let dz = dhr[j] * (nr[j] - hpr[j]);
                    dxr[j] = dz * zr[j] * (1.0 - zr[j]);
                }
                let dpr = dh_prev.row_mut(r);
                for j in 0..u {
                    dpr[j] = dhr[j] * (1.0 - zr[j]);
                }
            }
            gemm_tn(self.wh_n.grad.data_mut(), st.rh.data(), dan.data(), batch, u, u);
            let mut d_rh = Tensor2D::zeros(batch, u);
            gemm_nt(d_rh.data_mut(), dan.data(), self.wh_n.value.data(), batch, u, u);
            let mut dhd = Tensor2D::zeros(batch, u);
            for r in 0..batch {
                let (drh, rr, hdr, danr) = (d_rh.row(r), st.r.row(r), hd.row(r), dan.row(r));
                let dxr = dxw.row_mut(r);
                for j in 0..u {
                    let dr = drh[j] * hdr[j];
                    dxr[u + j] = dr * rr[j] * (1.0 - rr[j]);
                    dxr[2 * u + j] = danr[j];
                }
                let dxr = dxw.row(r);
                let dhur = dhu.row_mut(r);
                dhur[..2 * u].copy_from_slice(&dxr[..2 * u]);
                let dhdr = dhd.row_mut(r);
                for j in 0..u {
                    dhdr[j] = drh[j] * rr[j];
                }
            }
            gemm_tn(self.wx.grad.data_mut(), cache.xd[t].data(), dxw.data(), batch, in_dim, 3 * u);
            self.b.grad.add_assign(&dxw.column_sums());
            gemm_tn(self.wh_zr.grad.data_mut(), hd.data(), dhu.data(), batch, u, 2 * u);
            gemm_nt(dhd.data_mut(), dhu.data(), self.wh_zr.value.data(), batch, u, 2 * u);
            let mut dx = Tensor2D::zeros(batch, in_dim);
            gemm_nt(dx.data_mut(), dxw.data(), self.wx.value.data(), batch, in_dim, 3 * u);
            masked_in_place(&mut dx, &cache.mx);
            dxs[t] = dx;
            masked_in_place(&mut dhd, &cache.mh);
            dh_prev.add_assign(&dhd);
            dh_next = dh_prev;
        }
        Ok(dxs)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.wx, &mut self.wh_zr, &mut self.wh_n, &mut self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor2D {
        Tensor2D::from_rows(rows).unwrap()
    }

    #[test]
    fn simple_rnn_zero_weights_give_zero_state() {
        let x = t(&[&[0.3, -1.0]]);
        let h = simple_rnn_step(
            &x,
            &Tensor2D::zeros(1, 3),
            &Tensor2D::zeros(2, 3),
            &Tensor2D::zeros(3, 3),
            &Tensor2D::zeros(1, 3),
        )
        .unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn simple_rnn_saturates_with_large_bias() {
        let h = simple_rnn_step(
            &t(&[&[1.0]]),
            &Tensor2D::zeros(1, 2),
            &Tensor2D::zeros(1, 2),
            &Tensor2D::zeros(2, 2),
            &Tensor2D::filled(1, 2, 20.0),
        )
        .unwrap();
        assert!(h.data().iter().all(|&v| (1.0 - v) < 1e-8 && v < 1.0 + 1e-15));
    }

    #[test]
    fn simple_rnn_shape_error() {
        let err = simple_rnn_step(
            &Tensor2D::zeros(1, 3),
            &Tensor2D::zeros(1, 2),
            &Tensor2D::zeros(2, 2),
            &Tensor2D::zeros(2, 2),
            &Tensor2D::zeros(1, 2),
        );
        assert!(matches!(err, Err(NnError::Shape(_))));
    }

    #[test]
    fn lstm_zero_params_halve_the_cell() {
        let w = LstmWeights::zeros(2, 3);
        let c_prev = t(&[&[1.0, -2.0, 0.5]]);
        let (h, c) = lstm_step(&t(&[&[0.7, 0.1]]), &Tensor2D::zeros(1, 3), &c_prev, &w).unwrap();
        for j in 0..3 {
            let expect_c = 0.5 * c_prev.get(0, j);
            assert!((c.get(0, j) - expect_c).abs() < 1e-15);
            assert!((h.get(0, j) - 0.5 * expect_c.tanh()).abs() < 1e-15);
        }
        let (h, _) = lstm_step(&t(&[&[0.7, 0.1]]), &Tensor2D::zeros(1, 3), &Tensor2D::zeros(1, 3), &w)
            .unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
        assert!(lstm_step(&Tensor2D::zeros(1, 5), &Tensor2D::zeros(1, 3), &c_prev, &w).is_err());
    }

    #[test]
    fn gru_zero_params_and_carry_through() {
        let w = GruWeights::zeros(2, 3);
        let h = gru_step(&t(&[&[1.0, 2.0]]), &Tensor2D::zeros(1, 3), &w).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));

        let mut w = GruWeights::zeros(2, 3);
        for j in 0..3 {
            w.b.set(0, j, -40.0);
        }
        w.wx = Tensor2D::filled(2, 9, 0.3);
        let h_prev = t(&[&[0.2, -0.4, 0.9]]);
        let h = gru_step(&t(&[&[1.0, -1.0]]), &h_prev, &w).unwrap();
        for j in 0..3 {
            assert!((h.get(0, j) - h_prev.get(0, j)).abs() < 1e-12);
        }
        assert!(gru_step(&t(&[&[1.0]]), &h_prev, &w).is_err());
    }

    #[test]
    fn layer_forward_matches_step_functions() {
        let mut rng = RngStream::new(11);
        let xs: Vec<Tensor2D> = (0..4).map(|_| init::uniform(2, 3, 1.0, &mut rng)).collect();

        let mut lstm = Lstm::new(3, 5, DropoutSpec::NONE, &mut rng);
        let out = lstm.forward(&xs, Mode::INFER, &mut rng).unwrap();
        let w = LstmWeights {
            wx: lstm.wx.value.clone(),
            wh: lstm.wh.value.clone(),
            b: lstm.b.value.clone(),
        };
        let (mut h, mut c) = (Tensor2D::zeros(2, 5), Tensor2D::zeros(2, 5));
        for (x, o) in xs.iter().zip(&out) {
            (h, c) = lstm_step(x, &h, &c, &w).unwrap();
            assert_eq!(&h, o);
        }

        let mut gru = Gru::new(3, 4, DropoutSpec::NONE, &mut rng);
        let out = gru.forward(&xs, Mode::INFER, &mut rng).unwrap();
        let w = GruWeights {
            wx: gru.wx.value.clone(),
            wh_zr: gru.wh_zr.value.clone(),
            wh_n: gru.wh_n.value.clone(),
            b: gru.b.value.clone(),
        };
        let mut h = Tensor2D::zeros(2, 4);
        for (x, o) in xs.iter().zip(&out) {
            h = gru_step(x, &h, &w).unwrap();
            assert_eq!(&h, o);
        }

        let mut rnn = SimpleRnn::new(3, 4, DropoutSpec::NONE, &mut rng);
        let out = rnn.forward(&xs, Mode::INFER, &mut rng).unwrap();
        let mut h = Tensor2D::zeros(2, 4);
        for (x, o) in xs.iter().zip(&out) {
            h = simple_rnn_step(x, &h, &rnn.wx.value, &rnn.wh.value, &rnn.b.value).unwrap();
            assert_eq!(&h, o);
        }
    }

    #[test]
    fn backward_without_forward_is_an_error() {
        let mut rng = RngStream::new(1);
        let mut lstm = Lstm::new(2, 2, DropoutSpec::NONE, &mut rng);
        let g = Tensor2D::zeros(1, 2);
        assert!(matches!(lstm.backward(SeqGrad::Last(&g)), Err(NnError::NoForwardCache)));
    }

    #[test]
    fn recurrent_mask_is_shared_across_steps() {
        let mut rng = RngStream::new(2);
        let mut rnn = SimpleRnn::new(2, 6, DropoutSpec::new(0.0, 0.5).unwrap(), &mut rng);
        let xs: Vec<Tensor2D> = (0..5).map(|_| init::uniform(3, 2, 1.0, &mut rng)).collect();
        rnn.forward(&xs, Mode::TRAIN, &mut rng).unwrap();
        let cache = rnn.cache.as_ref().unwrap();
        let mask = cache.mh.as_ref().unwrap();
        for t in 1..5 {
            for (i, &m) in mask.data().iter().enumerate() {
                if m == 0.0 {
                    assert_eq!(cache.hd[t].data()[i], 0.0);
                } else {
                    assert!((cache.hd[t].data()[i] - 2.0 * cache.h[t - 1].data()[i]).abs() < 1e-15);
                }
            }
        }
    }
}
