//! Reverse-mode gradient tape.
//!
//! Nodes are appended in evaluation order, so every node's inputs have lower
//! indices than the node itself and a reverse index sweep is a valid
//! reverse-topological traversal.

use super::kernels::{self, ConvGeom};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Sum(Var),
    Relu(Var),
    Conv2d { input: Var, weight: Var, bias: Var, geom: ConvGeom },
    MaxPool { input: Var, argmax: Vec<usize> },
    Upsample { input: Var, factor: usize },
    GlobalAvgPool(Var),
    Linear { input: Var, weight: Var, bias: Var },
    SoftmaxCe { logits: Var, probs: Vec<T>, targets: Vec<usize>, ignore_index: usize, count: usize },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Gradient accumulated by the last [`Tape::backward`] call. `None` for
    /// values that do not require gradients; zeros for values the loss does
    /// not depend on.
    pub fn grad(&self, var: Var) -> Option<Tensor<T>> {
        let node = &self.nodes[var.0];
        if !node.requires_grad {
            return None;
        }
        let data = match self.grads.get(var.0) {
            Some(Some(g)) => g.clone(),
            _ => vec![T::zero(); node.value.numel()],
        };
        Some(Tensor::new(node.value.shape().to_vec(), data).expect("gradient matches value shape"))
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node { value, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(format!("add {:?} vs {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(format!("mul {:?} vs {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::Mul(a, b)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let mut acc = T::zero();
        for &v in self.value(a).data() {
            acc += v;
        }
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(acc), rg, Op::Sum(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|&x| if x > T::zero() { x } else { T::zero() }).collect();
        let value = Tensor::new(va.shape().to_vec(), data).expect("same shape");
        let rg = self.any_grad(&[a]);
        self.push(value, rg, Op::Relu(a))
    }

    /// 2-D convolution with zero padding. `input` is `[n, cin, h, w]`,
    /// `weight` is `[cout, cin, kh, kw]`, `bias` is `[cout]`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let (n, cin, h, w) = self.value(input).dims4()?;
        let (cout, wcin, kh, kw) = self.value(weight).dims4()?;
        if cin != wcin {
            return Err(Error::shape(format!("conv2d input has {cin} channels, weight expects {wcin}")));
        }
        if self.value(bias).shape() != [cout] {
            return Err(Error::shape(format!("conv2d bias shape {:?}, expected [{cout}]", self.value(bias).shape())));
        }
        let geom = ConvGeom::new((cin, h, w), (cout, kh, kw), stride, padding).ok_or_else(|| {
            Error::shape(format!("{kh}x{kw} kernel (stride {stride}, pad {padding}) does not fit {h}x{w} input"))
        })?;
        let out = kernels::conv2d_forward(
            self.value(input).data(),
            n,
            self.value(weight).data(),
            self.value(bias).data(),
            &geom,
        );
        let value = Tensor::new(vec![n, cout, geom.ho, geom.wo], out)?;
        let rg = self.any_grad(&[input, weight, bias]);
        Ok(self.push(value, rg, Op::Conv2d { input, weight, bias, geom }))
    }

    pub fn max_pool2d(&mut self, input: Var, k: usize, stride: usize) -> Result<Var> {
        let (n, c, h, w) = self.value(input).dims4()?;
        if k == 0 || stride == 0 || h < k || w < k {
            return Err(Error::shape(format!("max_pool2d window {k} (stride {stride}) on {h}x{w} input")));
        }
        let (out, argmax) = kernels::max_pool_forward(self.value(input).data(), n * c, (h, w), k, stride);
        let value = Tensor::new(vec![n, c, (h - k) / stride + 1, (w - k) / stride + 1], out)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(value, rg, Op::MaxPool { input, argmax }))
    }

    pub fn upsample_nearest(&mut self, input: Var, factor: usize) -> Result<Var> {
        let (n, c, h, w) = self.value(input).dims4()?;
        if factor == 0 {
            return Err(Error::config("factor", "upsample factor must be positive"));
        }
        let out = kernels::upsample_nearest_forward(self.value(input).data(), n * c, (h, w), factor);
        let value = Tensor::new(vec![n, c, h * factor, w * factor], out)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(value, rg, Op::Upsample { input, factor }))
    }

    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(input).dims4()?;
        let area = T::lit((h * w) as f64);
        let out = self
            .value(input)
            .data()
            .chunks_exact(h * w)
            .map(|plane| {
                let mut acc = T::zero();
                for &v in plane {
                    acc += v;
                }
                acc / area
            })
            .collect();
        let value = Tensor::new(vec![n, c], out)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(value, rg, Op::GlobalAvgPool(input)))
    }

    /// `input · weightᵀ + bias` for `input [n, d]`, `weight [k, d]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (n, d) = self.value(input).dims2()?;
        let (k, wd) = self.value(weight).dims2()?;
        if d != wd || self.value(bias).shape() != [k] {
            return Err(Error::shape(format!(
                "linear input [{n}, {d}], weight {:?}, bias {:?}",
                self.value(weight).shape(),
                self.value(bias).shape()
            )));
        }
        let out =
            kernels::linear_forward(self.value(input).data(), n, d, self.value(weight).data(), self.value(bias).data());
        let value = Tensor::new(vec![n, k], out)?;
        let rg = self.any_grad(&[input, weight, bias]);
        Ok(self.push(value, rg, Op::Linear { input, weight, bias }))
    }

    /// Mean cross-entropy over positions whose target is not `ignore_index`.
    /// `logits` is `[n, k]` or `[n, k, h, w]`; `targets` holds one class id per
    /// sample or per pixel.
    pub fn softmax_cross_entropy_masked(&mut self, logits: Var, targets: &[usize], ignore_index: usize) -> Result<Var> {
        let shape = self.value(logits).shape().to_vec();
        let (n, k, spatial) = match shape[..] {
            [n, k] => (n, k, 1),
            [n, k, h, w] => (n, k, h * w),
            _ => return Err(Error::shape(format!("logits must be 2-D or 4-D, got {shape:?}"))),
        };
        if targets.len() != n * spatial {
            return Err(Error::shape(format!("{} targets for {} positions", targets.len(), n * spatial)));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= k && t != ignore_index) {
            return Err(Error::ClassOutOfRange { value: bad, classes: k });
        }
        let (loss, probs, count) =
            kernels::softmax_cross_entropy(self.value(logits).data(), n, k, spatial, targets, ignore_index);
        if count == 0 {
            return Err(Error::EmptyBatch);
        }
        let rg = self.any_grad(&[logits]);
        let op = Op::SoftmaxCe { logits, probs, targets: targets.to_vec(), ignore_index, count };
        Ok(self.push(Tensor::scalar(loss), rg, op))
    }

    /// Accumulates d`loss`/d`v` into every recorded value that requires
    /// gradients. Gradients from a previous call are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let numel = self.value(loss).numel();
        if numel != 1 {
            return Err(Error::NotScalar(numel));
        }
        let Tape { nodes, grads } = self;
        grads.clear();
        grads.resize(nodes.len(), None);
        if !nodes[loss.0].requires_grad {
            return Ok(());
        }
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            propagate(nodes, grads, i, &g);
            grads[i] = Some(g);
        }
        Ok(())
    }

    /// Signature of every piecewise-linear branch taken on this tape: ReLU
    /// sign pattern and max-pool argmax positions. Two evaluations with equal
    /// signatures lie on the same smooth piece of the function.
    pub fn activation_pattern(&self) -> Vec<usize> {
        let mut pattern = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(a) => {
                    pattern.extend(self.nodes[a.0].value.data().iter().map(|&x| usize::from(x > T::zero())));
                }
                Op::MaxPool { argmax, .. } => pattern.extend_from_slice(argmax),
                _ => {}
            }
        }
        pattern
    }
}

fn accumulate<T: Scalar>(nodes: &[Node<T>], grads: &mut [Option<Vec<T>>], var: Var, contribution: Vec<T>) {
    if !nodes[var.0].requires_grad {
        return;
    }
    match &mut grads[var.0] {
        Some(existing) => {
            for (e, c) in existing.iter_mut().zip(contribution) {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contribution),
    }
}

fn propagate<T: Scalar>(nodes: &[Node<T>], grads: &mut [Option<Vec<T>>], i: usize, g: &[T]) {
    let val = |v: Var| nodes[v.0].value.data();
    let needs = |v: Var| nodes[v.0].requires_grad;
    match &nodes[i].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(nodes, grads, *a, g.to_vec());
            accumulate(nodes, grads, *b, g.to_vec());
        }
        Op::Mul(a, b) => {
            if needs(*a) {
                let c = g.iter().zip(val(*b)).map(|(&gv, &y)| gv * y).collect();
                accumulate(nodes, grads, *a, c);
            }
            if needs(*b) {
                let c = g.iter().zip(val(*a)).map(|(&gv, &x)| gv * x).collect();
                accumulate(nodes, grads, *b, c);
            }
        }
        Op::Sum(a) => {
            accumulate(nodes, grads, *a, vec![g[0]; nodes[a.0].value.numel()]);
        }
        Op::Relu(a) => {
            let c = g.iter().zip(val(*a)).map(|(&gv, &x)| if x > T::zero() { gv } else { T::zero() }).collect();
            accumulate(nodes, grads, *a, c);
        }
        Op::Conv2d { input, weight, bias, geom } => {
            let n = nodes[input.0].value.shape()[0];
            let cg = kernels::conv2d_backward(val(*input), n, val(*weight), g, geom, needs(*input));
            if let Some(dx) = cg.dx {
                accumulate(nodes, grads, *input, dx);
            }
            accumulate(nodes, grads, *weight, cg.dw);
            accumulate(nodes, grads, *bias, cg.db);
        }
        Op::MaxPool { input, argmax } => {
            let mut dx = vec![T::zero(); nodes[input.0].value.numel()];
            for (&idx, &gv) in argmax.iter().zip(g) {
                dx[idx] += gv;
            }
            accumulate(nodes, grads, *input, dx);
        }
        Op::Upsample { input, factor } => {
            let (n, c, h, w) = nodes[input.0].value.dims4().expect("recorded as 4-D");
            accumulate(nodes, grads, *input, kernels::upsample_nearest_backward(g, n * c, (h, w), *factor));
        }
        Op::GlobalAvgPool(input) => {
            let (_, _, h, w) = nodes[input.0].value.dims4().expect("recorded as 4-D");
            let area = T::lit((h * w) as f64);
            let mut dx = Vec::with_capacity(nodes[input.0].value.numel());
            for &gv in g {
                dx.extend(std::iter::repeat_n(gv / area, h * w));
            }
            accumulate(nodes, grads, *input, dx);
        }
        Op::Linear { input, weight, bias } => {
            let (n, d) = nodes[input.0].value.dims2().expect("recorded as 2-D");
            let (dx, dw, db) = kernels::linear_backward(val(*input), n, d, val(*weight), g);
            accumulate(nodes, grads, *input, dx);
            accumulate(nodes, grads, *weight, dw);
            accumulate(nodes, grads, *bias, db);
        }
        Op::SoftmaxCe { logits, probs, targets, ignore_index, count } => {
            let shape = nodes[logits.0].value.shape();
            let (n, k) = (shape[0], shape[1]);
            let spatial = probs.len() / (n * k);
            let scale = g[0] / T::lit(*count as f64);
            let mut dx = vec![T::zero(); probs.len()];
            for s in 0..n {
                for pos in 0..spatial {
                    let t = targets[s * spatial + pos];
                    if t == *ignore_index {
                        continue;
                    }
                    for c in 0..k {
                        let at = s * k * spatial + c * spatial + pos;
                        let onehot = if c == t { T::one() } else { T::zero() };
                        dx[at] = (probs[at] - onehot) * scale;
                    }
                }
            }
            accumulate(nodes, grads, *logits, dx);
        }
    }
}
