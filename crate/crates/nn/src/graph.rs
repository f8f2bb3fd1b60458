//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s in execution
//! order. [`Graph::backward`] walks the tape in reverse and returns the
//! gradient of a scalar with respect to every node that depends on a
//! gradient-tracking leaf.

use crate::gemm::{sgemm, Layout};
use crate::kernels::{self, ConvParams, PoolParams};
use crate::tensor::{broadcast_zip, numel, reduce_to_shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Unary {
    Relu,
    LeakyRelu(f32),
    Tanh,
    Sigmoid,
    Softplus,
    Exp,
    Log,
    Sqrt,
    Square,
    Powf(f32),
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Affine(Var, f32),
    Unary(Var, Unary),
    Sum(Var),
    Reshape(Var),
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Conv { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize },
    ConvT { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize },
    MaxPool { x: Var, arg: Vec<u32> },
    AvgPool { x: Var, p: PoolParams, count_pad: bool },
    Upsample { x: Var, factor: usize },
    Concat { xs: Vec<Var>, axis: usize },
    Gather { x: Var, map: Vec<i32> },
    LogSoftmax(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// A constant input; no gradient flows into it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A leaf whose gradient is reported by [`Graph::backward`].
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f32, f32) -> f32, op: Op) -> Var {
        let value = broadcast_zip(self.value(a), self.value(b), f);
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(value, op, tracked)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f32, shift: f32) -> Var {
        let value = self.value(x).map(|v| scale * v + shift);
        let tracked = self.tracked(x);
        self.push(value, Op::Affine(x, scale), tracked)
    }

    pub fn scale(&mut self, x: Var, s: f32) -> Var {
        self.affine(x, s, 0.0)
    }

    pub fn add_scalar(&mut self, x: Var, c: f32) -> Var {
        self.affine(x, 1.0, c)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 0.0)
    }

    fn unary(&mut self, x: Var, u: Unary) -> Var {
        let f = |v: f32| -> f32 {
            match u {
                Unary::Relu => v.max(0.0),
                Unary::LeakyRelu(a) => {
                    if v > 0.0 {
                        v
                    } else {
                        a * v
                    }
                }
                Unary::Tanh => v.tanh(),
                Unary::Sigmoid => sigmoid(v),
                Unary::Softplus => softplus(v),
                Unary::Exp => v.exp(),
                Unary::Log => v.ln(),
                Unary::Sqrt => v.sqrt(),
                Unary::Square => v * v,
                Unary::Powf(p) => v.powf(p),
            }
        };
        let value = self.value(x).map(f);
        let tracked = self.tracked(x);
        self.push(value, Op::Unary(x, u), tracked)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Relu)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f32) -> Var {
        self.unary(x, Unary::LeakyRelu(slope))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sigmoid)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Softplus)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Exp)
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Log)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sqrt)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Square)
    }

    pub fn powf(&mut self, x: Var, p: f32) -> Var {
        self.unary(x, Unary::Powf(p))
    }

    /// Sums over `axes`, keeping them as size-1 dimensions.
    pub fn sum_axes(&mut self, x: Var, axes: &[usize]) -> Var {
        let shape = self.shape(x).to_vec();
        let mut out = shape.clone();
        for &a in axes {
            assert!(a < shape.len(), "axis {a} out of range for {shape:?}");
            out[a] = 1;
        }
        let value = reduce_to_shape(self.value(x), &out);
        let tracked = self.tracked(x);
        self.push(value, Op::Sum(x), tracked)
    }

    pub fn mean_axes(&mut self, x: Var, axes: &[usize]) -> Var {
        let shape = self.shape(x);
        let count: usize = axes.iter().map(|&a| shape[a]).product();
        let s = self.sum_axes(x, axes);
        self.scale(s, 1.0 / count as f32)
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = reduce_to_shape(self.value(x), &[]);
        let tracked = self.tracked(x);
        self.push(value, Op::Sum(x), tracked)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        let s = self.sum(x);
        self.scale(s, 1.0 / n as f32)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let value = self.value(x).clone().reshape(shape);
        let tracked = self.tracked(x);
        self.push(value, Op::Reshape(x), tracked)
    }

    /// Flattens everything after the leading (batch) axis.
    pub fn flatten(&mut self, x: Var) -> Var {
        let s = self.shape(x);
        let shape = [s[0], s[1..].iter().product()];
        self.reshape(x, &shape)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, b, false, false)
    }

    /// `op(a) · op(b)` for 2-D operands, `op` transposing when the flag is set.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        let (la, lb) = (mat_layout(self.shape(a), ta), mat_layout(self.shape(b), tb));
        assert_eq!(la.cols, lb.rows, "matmul shape mismatch {:?} x {:?}", self.shape(a), self.shape(b));
        let mut out = vec![0.0; la.rows * lb.cols];
        sgemm(1.0, self.value(a).data(), la, self.value(b).data(), lb, 0.0, &mut out);
        let value = Tensor::new(&[la.rows, lb.cols], out);
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(value, Op::MatMul { a, b, ta, tb }, tracked)
    }

    /// 2-D convolution, NCHW input and OIHW weight, square stride and padding.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let p = ConvParams {
            stride: (stride, stride),
            pad: (pad, pad),
        };
        let value = kernels::conv2d_forward(self.value(x), self.value(w), b.map(|b| self.value(b)), &p);
        let tracked = self.tracked(x) || self.tracked(w) || b.is_some_and(|b| self.tracked(b));
        self.push(value, Op::Conv { x, w, b, stride, pad }, tracked)
    }

    /// Convolution with rectangular kernel and padding; inference only.
    pub fn conv2d_rect(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: (usize, usize)) -> Var {
        assert!(
            !(self.tracked(x) || self.tracked(w)),
            "conv2d_rect does not support gradients"
        );
        let p = ConvParams {
            stride: (stride, stride),
            pad,
        };
        let value = kernels::conv2d_forward(self.value(x), self.value(w), b.map(|b| self.value(b)), &p);
        self.push(value, Op::Leaf, false)
    }

    /// Transposed convolution with weight laid out as (in, out, kh, kw).
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let p = ConvParams {
            stride: (stride, stride),
            pad: (pad, pad),
        };
        let value =
            kernels::conv_transpose2d_forward(self.value(x), self.value(w), b.map(|b| self.value(b)), &p);
        let tracked = self.tracked(x) || self.tracked(w) || b.is_some_and(|b| self.tracked(b));
        self.push(value, Op::ConvT { x, w, b, stride, pad }, tracked)
    }

    pub fn max_pool2d(&mut self, x: Var, kernel: usize, stride: usize, pad: usize) -> Var {
        let p = PoolParams { kernel, stride, pad };
        let (value, arg) = kernels::max_pool_forward(self.value(x), p);
        let tracked = self.tracked(x);
        self.push(value, Op::MaxPool { x, arg }, tracked)
    }

    pub fn avg_pool2d(&mut self, x: Var, kernel: usize, stride: usize, pad: usize, count_pad: bool) -> Var {
        let p = PoolParams { kernel, stride, pad };
        let value = kernels::avg_pool_forward(self.value(x), p, count_pad);
        let tracked = self.tracked(x);
        self.push(value, Op::AvgPool { x, p, count_pad }, tracked)
    }

    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Var {
        let value = kernels::upsample_nearest(self.value(x), factor);
        let tracked = self.tracked(x);
        self.push(value, Op::Upsample { x, factor }, tracked)
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Var {
        assert!(!xs.is_empty(), "concat of nothing");
        let first = self.shape(xs[0]).to_vec();
        let outer: usize = first[..axis].iter().product();
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for &v in xs {
            let s = self.shape(v);
            assert_eq!(s.len(), first.len(), "concat rank mismatch");
            for (d, (&a, &b)) in s.iter().zip(&first).enumerate() {
                assert!(d == axis || a == b, "concat shape mismatch {s:?} vs {first:?}");
            }
            out_shape[axis] += s[axis];
        }
        let mut data = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for &v in xs {
                let t = self.value(v);
                let inner = t.len() / outer;
                data.extend_from_slice(&t.data()[o * inner..(o + 1) * inner]);
            }
        }
        let tracked = xs.iter().any(|&v| self.tracked(v));
        self.push(Tensor::new(&out_shape, data), Op::Concat { xs: xs.to_vec(), axis }, tracked)
    }

    /// `out[i] = x[map[i]]`, or zero where `map[i] < 0`.
    pub fn gather(&mut self, x: Var, out_shape: &[usize], map: Vec<i32>) -> Var {
        assert_eq!(numel(out_shape), map.len(), "gather map length");
        let src = self.value(x).data();
        let data = map
            .iter()
            .map(|&i| if i < 0 { 0.0 } else { src[i as usize] })
            .collect();
        let tracked = self.tracked(x);
        self.push(Tensor::new(out_shape, data), Op::Gather { x, map }, tracked)
    }

    /// Row-wise log-softmax of a 2-D tensor.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let t = self.value(x);
        assert_eq!(t.ndim(), 2, "log_softmax expects (batch, classes)");
        let cols = t.shape()[1];
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(cols) {
            let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f32>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let value = Tensor::new(t.shape(), out);
        let tracked = self.tracked(x);
        self.push(value, Op::LogSoftmax(x), tracked)
    }

    /// Reverse pass from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        self.backward_with(loss, Tensor::ones(self.shape(loss)))
    }

    /// Reverse pass seeded with an explicit output gradient.
    pub fn backward_with(&self, out: Var, seed: Tensor) -> Grads {
        assert_eq!(seed.shape(), self.shape(out));
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            if !self.nodes[i].tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Grads { grads }
    }

    fn accum(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.tracked(v) {
            return;
        }
        debug_assert_eq!(g.shape(), self.shape(v));
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for &v in [a, b] {
                    if self.tracked(v) {
                        self.accum(grads, v, reduce_to_shape(g, self.shape(v)));
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.tracked(*a) {
                    self.accum(grads, *a, reduce_to_shape(g, self.shape(*a)));
                }
                if self.tracked(*b) {
                    let r = reduce_to_shape(g, self.shape(*b)).map(|v| -v);
                    self.accum(grads, *b, r);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.tracked(*a) {
                    let ga = broadcast_zip(g, vb, |g, y| g * y);
                    self.accum(grads, *a, reduce_to_shape(&ga, va.shape()));
                }
                if self.tracked(*b) {
                    let gb = broadcast_zip(g, va, |g, x| g * x);
                    self.accum(grads, *b, reduce_to_shape(&gb, vb.shape()));
                }
            }
            Op::Div(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.tracked(*a) {
                    let ga = broadcast_zip(g, vb, |g, y| g / y);
                    self.accum(grads, *a, reduce_to_shape(&ga, va.shape()));
                }
                if self.tracked(*b) {
                    // d(a/b)/db = -out / b
                    let t = broadcast_zip(g, &node.value, |g, o| g * o);
                    let gb = broadcast_zip(&t, vb, |t, y| -t / y);
                    self.accum(grads, *b, reduce_to_shape(&gb, vb.shape()));
                }
            }
            Op::Affine(x, s) => {
                let s = *s;
                self.accum(grads, *x, g.map(|v| v * s));
            }
            Op::Unary(x, u) => {
                let xv = self.value(*x).data();
                let yv = node.value.data();
                let data = g
                    .data()
                    .iter()
                    .zip(xv.iter().zip(yv))
                    .map(|(&g, (&x, &y))| g * unary_grad(*u, x, y))
                    .collect();
                self.accum(grads, *x, Tensor::new(g.shape(), data));
            }
            Op::Sum(x) => {
                let shape = self.shape(*x).to_vec();
                let zeros = Tensor::zeros(&shape);
                // broadcast g back to the input shape
                let rank_fix = if g.ndim() < shape.len() && g.len() == 1 {
                    g.clone().reshape(&vec![1; shape.len()])
                } else {
                    g.clone()
                };
                self.accum(grads, *x, broadcast_zip(&zeros, &rank_fix, |_, g| g));
            }
            Op::Reshape(x) => {
                let s = self.shape(*x).to_vec();
                self.accum(grads, *x, g.clone().reshape(&s));
            }
            Op::MatMul { a, b, ta, tb } => self.matmul_backward(g, *a, *b, *ta, *tb, grads),
            Op::Conv { x, w, b, stride, pad } => {
                let p = ConvParams {
                    stride: (*stride, *stride),
                    pad: (*pad, *pad),
                };
                let need = (self.tracked(*x), self.tracked(*w), b.is_some_and(|b| self.tracked(b)));
                let r = kernels::conv2d_backward(self.value(*x), self.value(*w), g, &p, need);
                self.conv_accum(grads, (*x, *w, *b), r);
            }
            Op::ConvT { x, w, b, stride, pad } => {
                let p = ConvParams {
                    stride: (*stride, *stride),
                    pad: (*pad, *pad),
                };
                let need = (self.tracked(*x), self.tracked(*w), b.is_some_and(|b| self.tracked(b)));
                let r = kernels::conv_transpose2d_backward(self.value(*x), self.value(*w), g, &p, need);
                self.conv_accum(grads, (*x, *w, *b), r);
            }
            Op::MaxPool { x, arg } => {
                let mut dx = vec![0.0; self.value(*x).len()];
                for (&gi, &a) in g.data().iter().zip(arg) {
                    dx[a as usize] += gi;
                }
                let shape = self.shape(*x).to_vec();
                self.accum(grads, *x, Tensor::new(&shape, dx));
            }
            Op::AvgPool { x, p, count_pad } => {
                let dx = kernels::avg_pool_backward(self.shape(*x), g, *p, *count_pad);
                self.accum(grads, *x, dx);
            }
            Op::Upsample { x, factor } => {
                let dx = kernels::upsample_nearest_backward(self.shape(*x), g, *factor);
                self.accum(grads, *x, dx);
            }
            Op::Concat { xs, axis } => {
                let outer: usize = g.shape()[..*axis].iter().product();
                let mut offset = 0;
                let row = g.len() / outer;
                for &v in xs {
                    let inner = self.value(v).len() / outer;
                    if self.tracked(v) {
                        let mut d = Vec::with_capacity(self.value(v).len());
                        for o in 0..outer {
                            d.extend_from_slice(&g.data()[o * row + offset..o * row + offset + inner]);
                        }
                        let shape = self.shape(v).to_vec();
                        self.accum(grads, v, Tensor::new(&shape, d));
                    }
                    offset += inner;
                }
            }
            Op::Gather { x, map } => {
                let mut dx = vec![0.0; self.value(*x).len()];
                for (&gi, &m) in g.data().iter().zip(map) {
                    if m >= 0 {
                        dx[m as usize] += gi;
                    }
                }
                let shape = self.shape(*x).to_vec();
                self.accum(grads, *x, Tensor::new(&shape, dx));
            }
            Op::LogSoftmax(x) => {
                let cols = g.shape()[1];
                let mut dx = g.data().to_vec();
                for (row, y) in dx.chunks_mut(cols).zip(node.value.data().chunks(cols)) {
                    let gs: f32 = row.iter().sum();
                    for (d, &yv) in row.iter_mut().zip(y) {
                        *d -= yv.exp() * gs;
                    }
                }
                self.accum(grads, *x, Tensor::new(g.shape(), dx));
            }
        }
    }

    fn conv_accum(&self, grads: &mut [Option<Tensor>], (x, w, b): (Var, Var, Option<Var>), r: kernels::ConvGrads) {
        if let Some(dx) = r.dx {
            self.accum(grads, x, dx);
        }
        if let Some(dw) = r.dw {
            self.accum(grads, w, dw);
        }
        if let (Some(b), Some(db)) = (b, r.db) {
            let shape = self.shape(b).to_vec();
            self.accum(grads, b, db.reshape(&shape));
        }
    }

    fn matmul_backward(&self, g: &Tensor, a: Var, b: Var, ta: bool, tb: bool, grads: &mut [Option<Tensor>]) {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (m, n) = (g.shape()[0], g.shape()[1]);
        let k = if ta { sa[0] } else { sa[1] };
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        if self.tracked(a) {
            let mut d = vec![0.0; sa[0] * sa[1]];
            if !ta {
                // dA = G · op(B)ᵀ
                let lbt = if tb { Layout::rm(n, k) } else { Layout::rm_t(k, n) };
                sgemm(1.0, g.data(), Layout::rm(m, n), bv, lbt, 0.0, &mut d);
            } else {
                // dA = op(B) · Gᵀ
                let lb = if tb { Layout::rm_t(n, k) } else { Layout::rm(k, n) };
                sgemm(1.0, bv, lb, g.data(), Layout::rm_t(m, n), 0.0, &mut d);
            }
            self.accum(grads, a, Tensor::new(&sa, d));
        }
        if self.tracked(b) {
            let mut d = vec![0.0; sb[0] * sb[1]];
            if !tb {
                // dB = op(A)ᵀ · G
                let lat = if ta { Layout::rm(k, m) } else { Layout::rm_t(m, k) };
                sgemm(1.0, av, lat, g.data(), Layout::rm(m, n), 0.0, &mut d);
            } else {
                // dB = Gᵀ · op(A)
                let la = if ta { Layout::rm_t(k, m) } else { Layout::rm(m, k) };
                sgemm(1.0, g.data(), Layout::rm_t(m, n), av, la, 0.0, &mut d);
            }
            self.accum(grads, b, Tensor::new(&sb, d));
        }
    }
}

fn mat_layout(shape: &[usize], transpose: bool) -> Layout {
    assert_eq!(shape.len(), 2, "matmul expects 2-D operands, got {shape:?}");
    if transpose {
        Layout::rm_t(shape[0], shape[1])
    } else {
        Layout::rm(shape[0], shape[1])
    }
}

pub fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(v: f32) -> f32 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

fn unary_grad(u: Unary, x: f32, y: f32) -> f32 {
    match u {
        Unary::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Unary::LeakyRelu(a) => {
            if x > 0.0 {
                1.0
            } else {
                a
            }
        }
        Unary::Tanh => 1.0 - y * y,
        Unary::Sigmoid => y * (1.0 - y),
        Unary::Softplus => sigmoid(x),
        Unary::Exp => y,
        Unary::Log => 1.0 / x,
        Unary::Sqrt => 0.5 / y,
        Unary::Square => 2.0 * x,
        Unary::Powf(p) => p * x.powf(p - 1.0),
    }
}
