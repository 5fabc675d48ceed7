//! Reverse-mode tape.
//!
//! Every operation appends a node holding its forward value. Nodes whose
//! operands carry no gradient are stored as plain constants, so a tape built
//! entirely from constants is just a forward evaluator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Floor applied inside logarithms of probabilities.
pub const LOG_CLAMP: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Softmax { x: Var, t: f64 },
    LogSoftmax { x: Var, t: f64 },
    SliceCols { x: Var, start: usize },
    Mask { x: Var, mask: Vec<f64> },
    KlDiv { p: Var, q: Var },
    CrossEntropy { p: Var, labels: Vec<usize> },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    clamps: usize,
}

/// Gradient buffers produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a node that requires grad; `None` for constants.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of a node that requires grad.
    ///
    /// Panics if `v` is a constant.
    pub fn wrt(&self, v: Var) -> &Tensor {
        self.get(v)
            .unwrap_or_else(|| panic!("node {} does not require grad", v.0))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of probabilities floored at [`LOG_CLAMP`] by losses on this tape.
    pub fn clamp_count(&self) -> usize {
        self.clamps
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Trainable leaf holding a copy of `value`.
    pub fn param(&mut self, value: &Tensor) -> Var {
        self.leaf(value.clone(), true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<&Tensor> {
        self.nodes
            .get(v.0)
            .map(|n| &n.value)
            .ok_or(Error::UnknownNode(v.0))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.check(a)?, self.check(b)?);
        let (m, n) = av.dims2()?;
        let (n2, p) = bv.dims2()?;
        if n != n2 {
            return Err(Error::dim("matmul", av.shape(), bv.shape()));
        }
        let out = Tensor::new(vec![m, p], kernels::matmul(av.data(), bv.data(), m, n, p))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, rg, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let out = self.check(x)?.transpose()?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, rg, Op::Transpose(x)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.check(a)?, self.check(b)?);
        if av.shape() != bv.shape() {
            return Err(Error::dim("add", av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, rg, Op::Add(a, b)))
    }

    /// Adds the vector `row` to every row of the matrix `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.check(x)?, self.check(row)?);
        let (_, c) = xv.dims2()?;
        if rv.shape() != [c] {
            return Err(Error::dim("add_row", xv.shape(), rv.shape()));
        }
        let mut data = xv.data().to_vec();
        for chunk in data.chunks_exact_mut(c.max(1)) {
            for (d, &r) in chunk.iter_mut().zip(rv.data()) {
                *d += r;
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        let rg = self.rg(&[x, row]);
        Ok(self.push(out, rg, Op::AddRow(x, row)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let out = self.check(x)?.map(|v| v * s);
        let rg = self.rg(&[x]);
        Ok(self.push(out, rg, Op::Scale(x, s)))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.check(x)?.map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.rg(&[x]);
        Ok(self.push(out, rg, Op::Relu(x)))
    }

    fn softmax_input(&self, x: Var, t: f64, op: &'static str) -> Result<(usize, usize)> {
        if t.is_nan() || t <= 0.0 || !t.is_finite() {
            return Err(Error::InvalidTemperature(t));
        }
        let xv = self.check(x)?;
        if !xv.is_finite() {
            return Err(Error::NonFiniteInput(op));
        }
        xv.dims2()
    }

    /// Row-wise softmax of `x / t`.
    pub fn softmax_t(&mut self, x: Var, t: f64) -> Result<Var> {
        let (r, c) = self.softmax_input(x, t, "softmax_t")?;
        let out = Tensor::new(vec![r, c], kernels::softmax_rows(self.value(x).data(), c, t))?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, rg, Op::Softmax { x, t }))
    }

    /// Row-wise log-softmax of `x / t`.
    pub fn log_softmax_t(&mut self, x: Var, t: f64) -> Result<Var> {
        let (r, c) = self.softmax_input(x, t, "log_softmax_t")?;
        let out = Tensor::new(
            vec![r, c],
            kernels::log_softmax_rows(self.value(x).data(), c, t),
        )?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, rg, Op::LogSoftmax { x, t }))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.check(x)?;
        let (r, c) = xv.dims2()?;
        if start + len > c {
            return Err(Error::dim("slice_cols", xv.shape(), &[start, len]));
        }
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&xv.row(i)[start..start + len]);
        }
        let out = Tensor::new(vec![r, len], data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, rg, Op::SliceCols { x, start }))
    }

    /// Inverted dropout. In eval mode, or at rate 0, returns `x` itself.
    pub fn dropout(&mut self, x: Var, rate: f64, seed: u64, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidRate(rate));
        }
        let xv = self.check(x)?;
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let mask = dropout_mask(xv.numel(), rate, seed);
        let data = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, rg, Op::Mask { x, mask }))
    }

    /// Batch-mean of `Σ_k p_k ln(p_k / q_k)` with `0 · ln(0 / q) = 0`.
    ///
    /// `q` entries below [`LOG_CLAMP`] where `p > 0` are floored and counted.
    pub fn kl_div(&mut self, p: Var, q: Var) -> Result<Var> {
        let (pv, qv) = (self.check(p)?, self.check(q)?);
        if pv.shape() != qv.shape() {
            return Err(Error::dim("kl_div", pv.shape(), qv.shape()));
        }
        let (b, _) = pv.dims2()?;
        let mut total = 0.0;
        let mut clamps = 0;
        for (&pk, &qk) in pv.data().iter().zip(qv.data()) {
            if pk > 0.0 {
                if qk < LOG_CLAMP {
                    clamps += 1;
                }
                total += pk * (pk.ln() - qk.max(LOG_CLAMP).ln());
            }
        }
        self.clamps += clamps;
        let out = Tensor::scalar(total / b as f64);
        let rg = self.rg(&[p, q]);
        Ok(self.push(out, rg, Op::KlDiv { p, q }))
    }

    /// Batch-mean of `−ln p[label]`.
    pub fn cross_entropy(&mut self, p: Var, labels: &[usize]) -> Result<Var> {
        let pv = self.check(p)?;
        let (b, k) = pv.dims2()?;
        if labels.len() != b {
            return Err(Error::dim("cross_entropy", pv.shape(), &[labels.len()]));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::dim("cross_entropy", pv.shape(), &[bad]));
        }
        let mut total = 0.0;
        let mut clamps = 0;
        for (i, &y) in labels.iter().enumerate() {
            let py = pv.data()[i * k + y];
            if py < LOG_CLAMP {
                clamps += 1;
            }
            total -= py.max(LOG_CLAMP).ln();
        }
        self.clamps += clamps;
        let out = Tensor::scalar(total / b as f64);
        let rg = self.rg(&[p]);
        Ok(self.push(
            out,
            rg,
            Op::CrossEntropy {
                p,
                labels: labels.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(self.check(x)?.data().iter().sum());
        let rg = self.rg(&[x]);
        Ok(self.push(out, rg, Op::Sum(x)))
    }

    /// Reverse accumulation from a scalar `loss`.
    ///
    /// Every node that requires grad receives a buffer; nodes the loss does
    /// not depend on get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.check(loss)?;
        if lv.numel() != 1 {
            return Err(Error::Rank(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.apply_rule(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        let out = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, node)| {
                node.requires_grad.then(|| {
                    let data = grads
                        .get_mut(id)
                        .and_then(Option::take)
                        .unwrap_or_else(|| vec![0.0; node.value.numel()]);
                    Tensor::new(node.value.shape().to_vec(), data)
                        .expect("gradient matches node shape")
                })
            })
            .collect();
        Ok(Gradients { grads: out })
    }

    fn apply_rule(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, n) = (av.shape()[0], av.shape()[1]);
                let p = bv.shape()[1];
                if self.requires_grad(*a) {
                    let bt = kernels::transpose(bv.data(), n, p);
                    self.accumulate(grads, *a, &kernels::matmul(g, &bt, m, p, n));
                }
                if self.requires_grad(*b) {
                    let at = kernels::transpose(av.data(), m, n);
                    self.accumulate(grads, *b, &kernels::matmul(&at, g, n, m, p));
                }
            }
            Op::Transpose(x) => {
                let (r, c) = (node.value.shape()[0], node.value.shape()[1]);
                self.accumulate(grads, *x, &kernels::transpose(g, r, c));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g);
                self.accumulate(grads, *b, g);
            }
            Op::AddRow(x, row) => {
                self.accumulate(grads, *x, g);
                if self.requires_grad(*row) {
                    let c = node.value.shape()[1];
                    let mut gr = vec![0.0; c];
                    for chunk in g.chunks_exact(c.max(1)) {
                        for (acc, &v) in gr.iter_mut().zip(chunk) {
                            *acc += v;
                        }
                    }
                    self.accumulate(grads, *row, &gr);
                }
            }
            Op::Scale(x, s) => {
                let gx: Vec<f64> = g.iter().map(|v| v * s).collect();
                self.accumulate(grads, *x, &gx);
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let gx: Vec<f64> = g
                    .iter()
                    .zip(xv)
                    .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, &gx);
            }
            Op::Softmax { x, t } => {
                let c = node.value.shape()[1];
                let mut gx = vec![0.0; y.len()];
                for ((yr, gr), out) in y
                    .chunks_exact(c)
                    .zip(g.chunks_exact(c))
                    .zip(gx.chunks_exact_mut(c))
                {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, &yi), &gi) in out.iter_mut().zip(yr).zip(gr) {
                        *o = yi * (gi - dot) / t;
                    }
                }
                self.accumulate(grads, *x, &gx);
            }
            Op::LogSoftmax { x, t } => {
                let c = node.value.shape()[1];
                let mut gx = vec![0.0; y.len()];
                for ((yr, gr), out) in y
                    .chunks_exact(c)
                    .zip(g.chunks_exact(c))
                    .zip(gx.chunks_exact_mut(c))
                {
                    let gsum: f64 = gr.iter().sum();
                    for ((o, &yi), &gi) in out.iter_mut().zip(yr).zip(gr) {
                        *o = (gi - yi.exp() * gsum) / t;
                    }
                }
                self.accumulate(grads, *x, &gx);
            }
            Op::SliceCols { x, start } => {
                let (r, len) = (node.value.shape()[0], node.value.shape()[1]);
                let c = self.value(*x).shape()[1];
                let mut gx = vec![0.0; r * c];
                for i in 0..r {
                    gx[i * c + start..i * c + start + len]
                        .copy_from_slice(&g[i * len..(i + 1) * len]);
                }
                self.accumulate(grads, *x, &gx);
            }
            Op::Mask { x, mask } => {
                let gx: Vec<f64> = g.iter().zip(mask).map(|(a, m)| a * m).collect();
                self.accumulate(grads, *x, &gx);
            }
            Op::KlDiv { p, q } => {
                let (pv, qv) = (self.value(*p), self.value(*q));
                let scale = g[0] / pv.shape()[0] as f64;
                if self.requires_grad(*p) {
                    let gp: Vec<f64> = pv
                        .data()
                        .iter()
                        .zip(qv.data())
                        .map(|(&pk, &qk)| {
                            scale * (pk.max(LOG_CLAMP).ln() - qk.max(LOG_CLAMP).ln() + 1.0)
                        })
                        .collect();
                    self.accumulate(grads, *p, &gp);
                }
                if self.requires_grad(*q) {
                    let gq: Vec<f64> = pv
                        .data()
                        .iter()
                        .zip(qv.data())
                        .map(|(&pk, &qk)| {
                            if pk > 0.0 && qk >= LOG_CLAMP {
                                -scale * pk / qk
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    self.accumulate(grads, *q, &gq);
                }
            }
            Op::CrossEntropy { p, labels } => {
                let pv = self.value(*p);
                let k = pv.shape()[1];
                let scale = g[0] / labels.len() as f64;
                let mut gp = vec![0.0; pv.numel()];
                for (i, &lab) in labels.iter().enumerate() {
                    let py = pv.data()[i * k + lab];
                    if py >= LOG_CLAMP {
                        gp[i * k + lab] = -scale / py;
                    }
                }
                self.accumulate(grads, *p, &gp);
            }
            Op::Sum(x) => {
                let n = self.value(*x).numel();
                self.accumulate(grads, *x, &vec![g[0]; n]);
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, &gi) in acc.iter_mut().zip(g) {
                    *a += gi;
                }
            }
            slot @ None => *slot = Some(g.to_vec()),
        }
    }
}

/// Inverted-dropout multipliers: `0` with probability `rate`, else `1 / (1 − rate)`.
pub fn dropout_mask(n: usize, rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - rate);
    (0..n)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity_and_projector() {
        let mut tape = Tape::new();
        let i2 = tape.constant(m(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let b = tape.constant(m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let out = tape.matmul(i2, b).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);

        let p = tape.constant(m(&[&[1.0, 0.0], &[0.0, 0.0]]));
        let c = tape.constant(m(&[&[5.0, 6.0], &[7.0, 8.0]]));
        let out = tape.matmul(p, c).unwrap();
        assert_eq!(tape.value(out).data(), &[5.0, 6.0, 0.0, 0.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        match tape.matmul(a, b) {
            Err(Error::Dimension { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(m(&[&[0.0, 0.0, 0.0]]));
        let y = tape.softmax_t(x, 4.0).unwrap();
        for &v in tape.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let x = tape.constant(m(&[&[4f64.ln(), 0.0]]));
        let y = tape.softmax_t(x, 1.0).unwrap();
        let d = tape.value(y).data();
        assert!((d[0] - 0.8).abs() < 1e-15 && (d[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_bad_temperature_and_non_finite_input() {
        let mut tape = Tape::new();
        let x = tape.constant(m(&[&[0.0, 1.0]]));
        assert!(matches!(tape.softmax_t(x, 0.0), Err(Error::InvalidTemperature(_))));
        assert!(matches!(tape.log_softmax_t(x, -1.0), Err(Error::InvalidTemperature(_))));
        let bad = tape.constant(m(&[&[f64::NAN, 1.0]]));
        assert!(matches!(tape.softmax_t(bad, 1.0), Err(Error::NonFiniteInput(_))));
        let bad = tape.constant(m(&[&[f64::INFINITY, 1.0]]));
        assert!(matches!(tape.log_softmax_t(bad, 1.0), Err(Error::NonFiniteInput(_))));
    }

    #[test]
    fn log_softmax_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(m(&[&[0.0, 0.0]]));
        for t in [0.5, 1.0, 4.0] {
            let y = tape.log_softmax_t(x, t).unwrap();
            for &v in tape.value(y).data() {
                assert!((v + 2f64.ln()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn kl_examples() {
        let mut tape = Tape::new();
        let p = tape.constant(m(&[&[0.2, 0.3, 0.5], &[0.0, 1.0, 0.0]]));
        let kl = tape.kl_div(p, p).unwrap();
        assert_eq!(tape.value(kl).item(), 0.0);

        let p = tape.constant(m(&[&[1.0, 0.0]]));
        let q = tape.constant(m(&[&[0.5, 0.5]]));
        let kl = tape.kl_div(p, q).unwrap();
        assert!((tape.value(kl).item() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(tape.clamp_count(), 0);
    }

    #[test]
    fn kl_clamps_zero_q_and_counts_it() {
        let mut tape = Tape::new();
        let p = tape.constant(m(&[&[0.5, 0.5]]));
        let q = tape.constant(m(&[&[1.0, 0.0]]));
        let kl = tape.kl_div(p, q).unwrap();
        assert!(tape.value(kl).item().is_finite());
        assert_eq!(tape.clamp_count(), 1);
    }

    #[test]
    fn cross_entropy_examples() {
        let mut tape = Tape::new();
        let p = tape.constant(m(&[&[0.0, 1.0, 0.0]]));
        let ce = tape.cross_entropy(p, &[1]).unwrap();
        assert_eq!(tape.value(ce).item(), 0.0);
        let p = tape.constant(m(&[&[0.5, 0.5]]));
        let ce = tape.cross_entropy(p, &[0]).unwrap();
        assert!((tape.value(ce).item() - 2f64.ln()).abs() < 1e-15);
        let p = tape.constant(m(&[&[1.0, 0.0]]));
        let ce = tape.cross_entropy(p, &[1]).unwrap();
        assert!((tape.value(ce).item() + LOG_CLAMP.ln()).abs() < 1e-12);
        assert_eq!(tape.clamp_count(), 1);
    }

    #[test]
    fn relu_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![-1.0, 0.0, 2.0]));
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
        let x = tape.leaf(Tensor::vector(vec![-1.0, 0.0, 2.0]), true);
        let y = tape.relu(x).unwrap();
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        // subgradient at 0 is 0
        assert_eq!(g.wrt(x).data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn dropout_modes() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[4, 4], 2.0));
        assert_eq!(tape.dropout(x, 0.0, 7, true).unwrap(), x);
        assert_eq!(tape.dropout(x, 0.5, 7, false).unwrap(), x);
        assert!(matches!(tape.dropout(x, 1.0, 7, true), Err(Error::InvalidRate(_))));
        assert!(matches!(tape.dropout(x, -0.1, 7, false), Err(Error::InvalidRate(_))));
        let a = tape.dropout(x, 0.5, 7, true).unwrap();
        let b = tape.dropout(x, 0.5, 7, true).unwrap();
        let (av, bv) = (tape.value(a).data(), tape.value(b).data());
        assert!(av.iter().zip(bv).all(|(p, q)| p.to_bits() == q.to_bits()));
        assert!(av.iter().all(|&v| v == 0.0 || v == 4.0));
    }

    #[test]
    fn backward_basics() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]), true);
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).data(), &[1.0, 1.0, 1.0]);

        // loss independent of x
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]), true);
        let c = tape.constant(Tensor::vector(vec![4.0]));
        let s = tape.sum(c).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).data(), &[0.0, 0.0, 0.0]);
        assert!(g.get(c).is_none());
    }

    #[test]
    fn backward_accumulates_reused_nodes() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.5]), true);
        let y = tape.add(x, x).unwrap();
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).data(), &[2.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        assert!(matches!(tape.backward(x), Err(Error::Rank(_))));
    }
}
