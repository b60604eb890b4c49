use rand::Rng;

use crate::geo_graph::GraphOperator;
use crate::numkit::{add_row_bias, hcat, matmul_acc, matmul_nt_acc, matmul_tn_acc, sigmoid, Param, Tensor2D};

/// Glorot-uniform weight in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Param {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-a..=a)).collect();
    Param::new(Tensor2D::new(rows, cols, data).expect("shape"))
}

/// `x · w` as a fresh tensor.
pub(crate) fn mm(x: &Tensor2D, w: &Tensor2D) -> Tensor2D {
    let mut out = Tensor2D::zeros(x.rows(), w.cols());
    matmul_acc(x, w, &mut out);
    out
}

/// `x · wᵀ`.
pub(crate) fn mm_nt(x: &Tensor2D, w: &Tensor2D) -> Tensor2D {
    let mut out = Tensor2D::zeros(x.rows(), w.rows());
    matmul_nt_acc(x, w, &mut out);
    out
}

fn add_col_sums(bias: &mut Tensor2D, d: &Tensor2D) {
    for i in 0..d.rows() {
        for (b, v) in bias.data_mut().iter_mut().zip(d.row(i)) {
            *b += v;
        }
    }
}

/// Applies `op` to each consecutive `op.len()`-row block of `x`.
pub fn propagate(op: &GraphOperator, x: &Tensor2D) -> Tensor2D {
    let n = op.len();
    let c = x.cols();
    debug_assert_eq!(x.rows() % n.max(1), 0);
    let mut out = Tensor2D::zeros(x.rows(), c);
    for b in 0..x.rows() / n.max(1) {
        let block = op.apply_slice(&x.data()[b * n * c..(b + 1) * n * c], c);
        out.data_mut()[b * n * c..(b + 1) * n * c].copy_from_slice(block.data());
    }
    out
}

/// Fully connected layer `y = x·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Param,
    pub b: Param,
}

impl Dense {
    pub fn new(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Dense {
            w: glorot(input, output, rng),
            b: Param::zeros(1, output),
        }
    }

    pub fn forward(&self, x: &Tensor2D) -> Tensor2D {
        let mut y = mm(x, &self.w.value);
        add_row_bias(&mut y, &self.b.value);
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: &Tensor2D, dy: &Tensor2D) -> Tensor2D {
        matmul_tn_acc(x, dy, &mut self.w.grad);
        add_col_sums(&mut self.b.grad, dy);
        mm_nt(dy, &self.w.value)
    }
}

/// Graph convolution `relu(Â·H·W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer {
    pub w: Param,
}

#[derive(Debug, Clone)]
pub struct GcnCache {
    pub propagated: Tensor2D,
    pub out: Tensor2D,
}

impl GcnLayer {
    pub fn new(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        GcnLayer {
            w: glorot(input, output, rng),
        }
    }

    pub fn forward(&self, op: &GraphOperator, h: &Tensor2D) -> GcnCache {
        self.forward_propagated(propagate(op, h))
    }

    /// Forward from a precomputed `Â·H`.
    pub fn forward_propagated(&self, propagated: Tensor2D) -> GcnCache {
        let out = mm(&propagated, &self.w.value).map(|v| v.max(0.0));
        GcnCache { propagated, out }
    }

    /// Accumulates `dW` and returns the gradient with respect to `Â·H`.
    pub fn backward_propagated(&mut self, cache: &GcnCache, dout: &Tensor2D) -> Tensor2D {
        let mut dpre = dout.clone();
        for (d, &o) in dpre.data_mut().iter_mut().zip(cache.out.data()) {
            if o <= 0.0 {
                *d = 0.0;
            }
        }
        matmul_tn_acc(&cache.propagated, &dpre, &mut self.w.grad);
        mm_nt(&dpre, &self.w.value)
    }

    /// Accumulates `dW` only.
    pub fn accumulate_weight_grad(&mut self, cache: &GcnCache, dout: &Tensor2D) {
        let mut dpre = dout.clone();
        for (d, &o) in dpre.data_mut().iter_mut().zip(cache.out.data()) {
            if o <= 0.0 {
                *d = 0.0;
            }
        }
        matmul_tn_acc(&cache.propagated, &dpre, &mut self.w.grad);
    }

    /// Accumulates `dW` and returns `dL/dH` (`Â` is symmetric).
    pub fn backward(&mut self, op: &GraphOperator, cache: &GcnCache, dout: &Tensor2D) -> Tensor2D {
        let dp = self.backward_propagated(cache, dout);
        propagate(op, &dp)
    }
}

/// One GRU layer: `z = σ([x,h]Wz + bz)`, `r = σ([x,h]Wr + br)`,
/// `c = tanh([x, r⊙h]Wh + bh)`, `h' = (1-z)⊙h + z⊙c`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer {
    pub wz: Param,
    pub bz: Param,
    pub wr: Param,
    pub br: Param,
    pub wh: Param,
    pub bh: Param,
}

#[derive(Debug, Clone)]
pub struct GruStep {
    xh: Tensor2D,
    xrh: Tensor2D,
    h_prev: Tensor2D,
    z: Tensor2D,
    r: Tensor2D,
    c: Tensor2D,
}

/// Per-step caches and hidden states of a sequence pass.
#[derive(Debug, Clone)]
pub struct GruTrace {
    pub steps: Vec<GruStep>,
    pub outputs: Vec<Tensor2D>,
}

impl GruLayer {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        GruLayer {
            wz: glorot(input + hidden, hidden, rng),
            bz: Param::zeros(1, hidden),
            wr: glorot(input + hidden, hidden, rng),
            br: Param::zeros(1, hidden),
            wh: glorot(input + hidden, hidden, rng),
            bh: Param::zeros(1, hidden),
        }
    }

    pub fn input_size(&self) -> usize {
        self.wz.shape().0 - self.hidden_size()
    }

    pub fn hidden_size(&self) -> usize {
        self.wz.shape().1
    }

    pub fn params(&self) -> [&Param; 6] {
        [&self.wz, &self.bz, &self.wr, &self.br, &self.wh, &self.bh]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 6] {
        [&mut self.wz, &mut self.bz, &mut self.wr, &mut self.br, &mut self.wh, &mut self.bh]
    }

    fn gate(&self, xh: &Tensor2D, w: &Param, b: &Param, f: fn(f64) -> f64) -> Tensor2D {
        let mut g = mm(xh, &w.value);
        add_row_bias(&mut g, &b.value);
        g.map(f)
    }

    fn step(&self, x: &Tensor2D, h: &Tensor2D) -> GruStep {
        let xh = hcat(x, h);
        let z = self.gate(&xh, &self.wz, &self.bz, sigmoid);
        let r = self.gate(&xh, &self.wr, &self.br, sigmoid);
        let mut rh = r.clone();
        for (a, b) in rh.data_mut().iter_mut().zip(h.data()) {
            *a *= b;
        }
        let xrh = hcat(x, &rh);
        let c = self.gate(&xrh, &self.wh, &self.bh, f64::tanh);
        GruStep {
            xh,
            xrh,
            h_prev: h.clone(),
            z,
            r,
            c,
        }
    }

    fn next_hidden(s: &GruStep) -> Tensor2D {
        let mut h = s.h_prev.clone();
        for ((hv, &z), &c) in h.data_mut().iter_mut().zip(s.z.data()).zip(s.c.data()) {
            *hv = (1.0 - z) * *hv + z * c;
        }
        h
    }

    /// Runs the sequence from `h0` (zeros if `None`).
    pub fn forward(&self, xs: &[Tensor2D], h0: Option<&Tensor2D>) -> GruTrace {
        let rows = xs.first().map_or(0, |x| x.rows());
        let mut h = h0.cloned().unwrap_or_else(|| Tensor2D::zeros(rows, self.hidden_size()));
        let mut steps = Vec::with_capacity(xs.len());
        let mut outputs = Vec::with_capacity(xs.len());
        for x in xs {
            let s = self.step(x, &h);
            h = Self::next_hidden(&s);
            steps.push(s);
            outputs.push(h.clone());
        }
        GruTrace { steps, outputs }
    }

    /// Backpropagation through time. `d_outputs[t]` is the loss gradient with
    /// respect to the hidden state emitted at step `t` (if any). Returns
    /// gradients with respect to the inputs and to `h0`.
    pub fn backward(&mut self, trace: &GruTrace, d_outputs: &[Option<Tensor2D>]) -> (Vec<Tensor2D>, Tensor2D) {
        let n_in = self.input_size();
        let hid = self.hidden_size();
        let rows = trace.steps.first().map_or(0, |s| s.h_prev.rows());
        let mut dh_next = Tensor2D::zeros(rows, hid);
        let mut dxs = vec![Tensor2D::zeros(0, 0); trace.steps.len()];
        for t in (0..trace.steps.len()).rev() {
            let s = &trace.steps[t];
            let mut dh = dh_next;
            if let Some(d) = &d_outputs[t] {
                dh.add_assign(d);
            }
            let n = dh.data().len();
            let mut dz_pre = Tensor2D::zeros(rows, hid);
            let mut dc_pre = Tensor2D::zeros(rows, hid);
            let mut dh_prev = Tensor2D::zeros(rows, hid);
            {
                let (dzp, dcp, dhp) = (dz_pre.data_mut(), dc_pre.data_mut(), dh_prev.data_mut());
                let (z, c, hp, g) = (s.z.data(), s.c.data(), s.h_prev.data(), dh.data());
                for i in 0..n {
                    dzp[i] = g[i] * (c[i] - hp[i]) * z[i] * (1.0 - z[i]);
                    dcp[i] = g[i] * z[i] * (1.0 - c[i] * c[i]);
                    dhp[i] = g[i] * (1.0 - z[i]);
                }
            }
            matmul_tn_acc(&s.xrh, &dc_pre, &mut self.wh.grad);
            add_col_sums(&mut self.bh.grad, &dc_pre);
            let dxrh = mm_nt(&dc_pre, &self.wh.value);
            let mut dr_pre = Tensor2D::zeros(rows, hid);
            let mut dx = Tensor2D::zeros(rows, n_in);
            for i in 0..rows {
                let drow = dxrh.row(i);
                dx.row_mut(i).copy_from_slice(&drow[..n_in]);
                let (r, hp) = (s.r.row(i), s.h_prev.row(i));
                let drh = &drow[n_in..];
                let dhp = dh_prev.row_mut(i);
                for j in 0..hid {
                    dhp[j] += drh[j] * r[j];
                }
                let drp = dr_pre.row_mut(i);
                for j in 0..hid {
                    drp[j] = drh[j] * hp[j] * r[j] * (1.0 - r[j]);
                }
            }
            matmul_tn_acc(&s.xh, &dz_pre, &mut self.wz.grad);
            add_col_sums(&mut self.bz.grad, &dz_pre);
            matmul_tn_acc(&s.xh, &dr_pre, &mut self.wr.grad);
            add_col_sums(&mut self.br.grad, &dr_pre);
            let mut dxh = mm_nt(&dz_pre, &self.wz.value);
            matmul_nt_acc(&dr_pre, &self.wr.value, &mut dxh);
            for i in 0..rows {
                let row = dxh.row(i);
                for (a, b) in dx.row_mut(i).iter_mut().zip(&row[..n_in]) {
                    *a += b;
                }
                for (a, b) in dh_prev.row_mut(i).iter_mut().zip(&row[n_in..]) {
                    *a += b;
                }
            }
            dxs[t] = dx;
            dh_next = dh_prev;
        }
        (dxs, dh_next)
    }
}

/// One LSTM layer with input, forget, output and candidate gates over `[x, h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub wi: Param,
    pub bi: Param,
    pub wf: Param,
    pub bf: Param,
    pub wo: Param,
    pub bo: Param,
    pub wg: Param,
    pub bg: Param,
}

#[derive(Debug, Clone)]
pub struct LstmStep {
    xh: Tensor2D,
    c_prev: Tensor2D,
    i: Tensor2D,
    f: Tensor2D,
    o: Tensor2D,
    g: Tensor2D,
    tanh_c: Tensor2D,
}

#[derive(Debug, Clone)]
pub struct LstmTrace {
    pub steps: Vec<LstmStep>,
    pub outputs: Vec<Tensor2D>,
}

impl LstmLayer {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut gate = || (glorot(input + hidden, hidden, rng), Param::zeros(1, hidden));
        let (wi, bi) = gate();
        let (wf, bf) = gate();
        let (wo, bo) = gate();
        let (wg, bg) = gate();
        LstmLayer {
            wi,
            bi,
            wf,
            bf,
            wo,
            bo,
            wg,
            bg,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.wi.shape().1
    }

    pub fn input_size(&self) -> usize {
        self.wi.shape().0 - self.hidden_size()
    }

    pub fn params(&self) -> [&Param; 8] {
        [&self.wi, &self.bi, &self.wf, &self.bf, &self.wo, &self.bo, &self.wg, &self.bg]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 8] {
        [
            &mut self.wi,
            &mut self.bi,
            &mut self.wf,
            &mut self.bf,
            &mut self.wo,
            &mut self.bo,
            &mut self.wg,
            &mut self.bg,
        ]
    }

    fn gate(xh: &Tensor2D, w: &Param, b: &Param, f: fn(f64) -> f64) -> Tensor2D {
        let mut g = mm(xh, &w.value);
        add_row_bias(&mut g, &b.value);
        g.map(f)
    }

    pub fn forward(&self, xs: &[Tensor2D]) -> LstmTrace {
        let rows = xs.first().map_or(0, |x| x.rows());
        let hid = self.hidden_size();
        let mut h = Tensor2D::zeros(rows, hid);
        let mut c = Tensor2D::zeros(rows, hid);
        let mut steps = Vec::with_capacity(xs.len());
        let mut outputs = Vec::with_capacity(xs.len());
        for x in xs {
            let xh = hcat(x, &h);
            let i = Self::gate(&xh, &self.wi, &self.bi, sigmoid);
            let f = Self::gate(&xh, &self.wf, &self.bf, sigmoid);
            let o = Self::gate(&xh, &self.wo, &self.bo, sigmoid);
            let g = Self::gate(&xh, &self.wg, &self.bg, f64::tanh);
            let mut c_new = Tensor2D::zeros(rows, hid);
            for k in 0..rows * hid {
                c_new.data_mut()[k] = f.data()[k] * c.data()[k] + i.data()[k] * g.data()[k];
            }
            let tanh_c = c_new.map(f64::tanh);
            let mut h_new = o.clone();
            for (a, b) in h_new.data_mut().iter_mut().zip(tanh_c.data()) {
                *a *= b;
            }
            steps.push(LstmStep {
                xh,
                c_prev: c,
                i,
                f,
                o,
                g,
                tanh_c,
            });
            outputs.push(h_new.clone());
            h = h_new;
            c = c_new;
        }
        LstmTrace { steps, outputs }
    }

    pub fn backward(&mut self, trace: &LstmTrace, d_outputs: &[Option<Tensor2D>]) -> Vec<Tensor2D> {
        let hid = self.hidden_size();
        let n_in = self.input_size();
        let rows = trace.steps.first().map_or(0, |s| s.xh.rows());
        let mut dh_next = Tensor2D::zeros(rows, hid);
        let mut dc_next = Tensor2D::zeros(rows, hid);
        let mut dxs = vec![Tensor2D::zeros(0, 0); trace.steps.len()];
        for t in (0..trace.steps.len()).rev() {
            let s = &trace.steps[t];
            let mut dh = dh_next;
            if let Some(d) = &d_outputs[t] {
                dh.add_assign(d);
            }
            let n = rows * hid;
            let mut di = Tensor2D::zeros(rows, hid);
            let mut df = Tensor2D::zeros(rows, hid);
            let mut d_o = Tensor2D::zeros(rows, hid);
            let mut dg = Tensor2D::zeros(rows, hid);
            let mut dc_prev = Tensor2D::zeros(rows, hid);
            for k in 0..n {
                let (i, f, o, g, tc) = (s.i.data()[k], s.f.data()[k], s.o.data()[k], s.g.data()[k], s.tanh_c.data()[k]);
                let dhk = dh.data()[k];
                let dc = dc_next.data()[k] + dhk * o * (1.0 - tc * tc);
                d_o.data_mut()[k] = dhk * tc * o * (1.0 - o);
                di.data_mut()[k] = dc * g * i * (1.0 - i);
                df.data_mut()[k] = dc * s.c_prev.data()[k] * f * (1.0 - f);
                dg.data_mut()[k] = dc * i * (1.0 - g * g);
                dc_prev.data_mut()[k] = dc * f;
            }
            let mut dxh = Tensor2D::zeros(rows, n_in + hid);
            for (w, b, d) in [
                (&mut self.wi, &mut self.bi, &di),
                (&mut self.wf, &mut self.bf, &df),
                (&mut self.wo, &mut self.bo, &d_o),
                (&mut self.wg, &mut self.bg, &dg),
            ] {
                matmul_tn_acc(&s.xh, d, &mut w.grad);
                add_col_sums(&mut b.grad, d);
                matmul_nt_acc(d, &w.value, &mut dxh);
            }
            let mut dx = Tensor2D::zeros(rows, n_in);
            let mut dh_prev = Tensor2D::zeros(rows, hid);
            for r in 0..rows {
                let row = dxh.row(r);
                dx.row_mut(r).copy_from_slice(&row[..n_in]);
                dh_prev.row_mut(r).copy_from_slice(&row[n_in..]);
            }
            dxs[t] = dx;
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        dxs
    }
}
