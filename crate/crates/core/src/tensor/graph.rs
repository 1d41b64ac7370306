//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Nodes are appended in evaluation order, so walking the tape backwards is a
//! reverse topological traversal and each node is visited exactly once.

use std::collections::BTreeMap;

use super::dense::{gemm, transpose_raw, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
struct ConvCache {
    batch: usize,
    in_channels: usize,
    out_channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
    /// im2col buffer, per sample `(out_h·out_w) × (in_channels·kernel²)`.
    cols: Vec<f64>,
    /// Kernel rearranged to `(in_channels·kernel²) × out_channels`.
    weight_mat: Vec<f64>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    AddChannelBias(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sum(Var),
    Reshape(Var),
    /// `out[j] = in[map[j]]`; `map` is a bijection.
    Gather(Var, Vec<usize>),
    Conv2d(Var, Var, Box<ConvCache>),
    MaxPool2(Var, Vec<usize>),
    SoftmaxCrossEntropy(Var, Vec<f64>, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    is_param: bool,
}

/// Gradients of a scalar loss with respect to every trainable leaf that
/// participated in it.
#[derive(Debug, Default)]
pub struct Gradients {
    map: BTreeMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.map.get(&var)
    }

    pub fn contains(&self, var: Var) -> bool {
        self.map.contains_key(&var)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Tensor)> {
        self.map.iter().map(|(v, t)| (*v, t))
    }
}

/// Tape recording one forward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor, trainable: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: trainable,
            is_param: trainable,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            is_param: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).mul(self.value(b))?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a length-`C` bias to every row of an `N×C` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xs = self.value(x);
        let bs = self.value(bias);
        if xs.shape().len() != 2 || bs.numel() != xs.shape()[1] {
            return Err(Error::Dimension(format!(
                "add_bias: bias {:?} does not match rows of {:?}",
                bs.shape(),
                xs.shape()
            )));
        }
        let cols = xs.shape()[1];
        let mut out = xs.clone();
        for row in out.data_mut().chunks_mut(cols) {
            for (o, b) in row.iter_mut().zip(bs.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddBias(x, bias), &[x, bias]))
    }

    /// Adds a length-`C` bias to every spatial position of an `N×C×H×W` tensor.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xs = self.value(x);
        let bs = self.value(bias);
        if xs.shape().len() != 4 || bs.numel() != xs.shape()[1] {
            return Err(Error::Dimension(format!(
                "add_channel_bias: bias {:?} does not match channels of {:?}",
                bs.shape(),
                xs.shape()
            )));
        }
        let channels = xs.shape()[1];
        let plane = xs.shape()[2] * xs.shape()[3];
        let mut out = xs.clone();
        for (idx, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            let b = bs.data()[idx % channels];
            chunk.iter_mut().for_each(|v| *v += b);
        }
        Ok(self.push(out, Op::AddChannelBias(x, bias), &[x, bias]))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).scale(factor);
        self.push(value, Op::Scale(x, factor), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    /// Permutes elements into a tensor of `shape`: `out[j] = x[map[j]]`.
    pub fn gather(&mut self, x: Var, shape: &[usize], map: Vec<usize>) -> Result<Var> {
        let src = self.value(x);
        if map.len() != src.numel() || map.iter().any(|&i| i >= src.numel()) {
            return Err(Error::Contract(format!(
                "gather: index map of length {} is not a permutation of {} elements",
                map.len(),
                src.numel()
            )));
        }
        let data = map.iter().map(|&i| src.data()[i]).collect();
        let value = Tensor::new(shape.to_vec(), data)?;
        Ok(self.push(value, Op::Gather(x, map), &[x]))
    }

    /// 2-D cross-correlation, stride 1, symmetric zero padding `pad`.
    ///
    /// `input` is `N×I×H×W`, `kernel` is `I×O×K×K`; output is
    /// `N×O×(H+2·pad−K+1)×(W+2·pad−K+1)`. Lowered to im2col + matmul.
    pub fn conv2d(&mut self, input: Var, kernel: Var, pad: usize) -> Result<Var> {
        let xs = self.value(input);
        let ks = self.value(kernel);
        if xs.shape().len() != 4 || ks.shape().len() != 4 {
            return Err(Error::Dimension(format!(
                "conv2d: expected 4-D input and kernel, got {:?} and {:?}",
                xs.shape(),
                ks.shape()
            )));
        }
        let (batch, in_ch, height, width) = (xs.shape()[0], xs.shape()[1], xs.shape()[2], xs.shape()[3]);
        let (k_in, out_ch, kh, kw) = (ks.shape()[0], ks.shape()[1], ks.shape()[2], ks.shape()[3]);
        if k_in != in_ch || kh != kw {
            return Err(Error::Dimension(format!(
                "conv2d: kernel {:?} incompatible with input {:?}",
                ks.shape(),
                xs.shape()
            )));
        }
        let k = kh;
        if height + 2 * pad < k || width + 2 * pad < k {
            return Err(Error::Dimension(format!(
                "conv2d: kernel {k}×{k} larger than padded input {}×{}",
                height + 2 * pad,
                width + 2 * pad
            )));
        }
        let out_h = height + 2 * pad - k + 1;
        let out_w = width + 2 * pad - k + 1;
        let patch = in_ch * k * k;
        let positions = out_h * out_w;

        let mut weight_mat = vec![0.0; patch * out_ch];
        for i in 0..in_ch {
            for o in 0..out_ch {
                for k1 in 0..k {
                    for k2 in 0..k {
                        let row = (i * k + k1) * k + k2;
                        weight_mat[row * out_ch + o] = ks.data()[((i * out_ch + o) * k + k1) * k + k2];
                    }
                }
            }
        }

        let mut cols = vec![0.0; batch * positions * patch];
        let x = xs.data();
        for n in 0..batch {
            let base = n * positions * patch;
            for y in 0..out_h {
                for xo in 0..out_w {
                    let row = base + (y * out_w + xo) * patch;
                    for i in 0..in_ch {
                        for k1 in 0..k {
                            let iy = (y + k1) as isize - pad as isize;
                            if iy < 0 || iy >= height as isize {
                                continue;
                            }
                            for k2 in 0..k {
                                let ix = (xo + k2) as isize - pad as isize;
                                if ix < 0 || ix >= width as isize {
                                    continue;
                                }
                                cols[row + (i * k + k1) * k + k2] = x[((n * in_ch + i) * height
                                    + iy as usize)
                                    * width
                                    + ix as usize];
                            }
                        }
                    }
                }
            }
        }

        let mut out = vec![0.0; batch * out_ch * positions];
        let mut tmp = vec![0.0; positions * out_ch];
        for n in 0..batch {
            tmp.iter_mut().for_each(|v| *v = 0.0);
            let c = &cols[n * positions * patch..(n + 1) * positions * patch];
            gemm(c, &weight_mat, &mut tmp, positions, patch, out_ch);
            for p in 0..positions {
                for o in 0..out_ch {
                    out[(n * out_ch + o) * positions + p] = tmp[p * out_ch + o];
                }
            }
        }
        let value = Tensor::new(vec![batch, out_ch, out_h, out_w], out)?;
        let cache = ConvCache {
            batch,
            in_channels: in_ch,
            out_channels: out_ch,
            height,
            width,
            kernel: k,
            pad,
            out_h,
            out_w,
            cols,
            weight_mat,
        };
        Ok(self.push(value, Op::Conv2d(input, kernel, Box::new(cache)), &[input, kernel]))
    }

    /// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
    pub fn max_pool2(&mut self, input: Var) -> Result<Var> {
        let xs = self.value(input);
        if xs.shape().len() != 4 || xs.shape()[2] < 2 || xs.shape()[3] < 2 {
            return Err(Error::Dimension(format!(
                "max_pool2: need N×C×H×W with H,W ≥ 2, got {:?}",
                xs.shape()
            )));
        }
        let (n, c, h, w) = (xs.shape()[0], xs.shape()[1], xs.shape()[2], xs.shape()[3]);
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        let x = xs.data();
        for plane in 0..n * c {
            let base = plane * h * w;
            for y in 0..oh {
                for xo in 0..ow {
                    let mut best = base + 2 * y * w + 2 * xo;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * y + dy) * w + 2 * xo + dx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new(vec![n, c, oh, ow], out)?;
        Ok(self.push(value, Op::MaxPool2(input, argmax), &[input]))
    }

    /// Mean softmax cross-entropy of `N×C` logits against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let ls = self.value(logits);
        if ls.shape().len() != 2 || ls.shape()[0] != labels.len() {
            return Err(Error::Dimension(format!(
                "softmax_cross_entropy: logits {:?} vs {} labels",
                ls.shape(),
                labels.len()
            )));
        }
        let classes = ls.shape()[1];
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Validation(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        let probs = softmax_rows(ls.data(), classes);
        let n = labels.len();
        let mut total = 0.0;
        for (row, &label) in labels.iter().enumerate() {
            let logits_row = &ls.data()[row * classes..(row + 1) * classes];
            total += log_sum_exp(logits_row) - logits_row[label];
        }
        let value = Tensor::scalar(total / n as f64);
        Ok(self.push(
            value,
            Op::SoftmaxCrossEntropy(logits, probs, labels.to_vec()),
            &[logits],
        ))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(root.value.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if node.is_param {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }

        let map = grads
            .into_iter()
            .enumerate()
            .filter_map(|(i, g)| {
                let g = g?;
                self.nodes[i].is_param.then_some((Var(i), g))
            })
            .collect();
        Ok(Gradients { map })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], var: Var, g: Tensor) {
        if !self.nodes[var.0].requires_grad {
            return;
        }
        match &mut grads[var.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if self.nodes[a.0].requires_grad {
                    let bt = transpose_raw(bv.data(), k, n);
                    let mut ga = vec![0.0; m * k];
                    gemm(g.data(), &bt, &mut ga, m, n, k);
                    self.accumulate(grads, *a, tensor(vec![m, k], ga));
                }
                if self.nodes[b.0].requires_grad {
                    let at = transpose_raw(av.data(), m, k);
                    let mut gb = vec![0.0; k * n];
                    gemm(&at, g.data(), &mut gb, k, m, n);
                    self.accumulate(grads, *b, tensor(vec![k, n], gb));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Mul(a, b) => {
                let ga = g.mul(self.value(*b)).expect("shapes checked in forward");
                let gb = g.mul(self.value(*a)).expect("shapes checked in forward");
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::AddBias(x, bias) => {
                self.accumulate(grads, *x, g.clone());
                let bshape = self.value(*bias).shape().to_vec();
                let cols = g.shape()[1];
                let mut gb = vec![0.0; cols];
                for row in g.data().chunks(cols) {
                    for (acc, v) in gb.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                self.accumulate(grads, *bias, tensor(bshape, gb));
            }
            Op::AddChannelBias(x, bias) => {
                self.accumulate(grads, *x, g.clone());
                let bshape = self.value(*bias).shape().to_vec();
                let channels = g.shape()[1];
                let plane = g.shape()[2] * g.shape()[3];
                let mut gb = vec![0.0; channels];
                for (idx, chunk) in g.data().chunks(plane).enumerate() {
                    gb[idx % channels] += chunk.iter().sum::<f64>();
                }
                self.accumulate(grads, *bias, tensor(bshape, gb));
            }
            Op::Scale(x, factor) => self.accumulate(grads, *x, g.scale(*factor)),
            Op::Relu(x) => {
                let xv = self.value(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(&gv, &v)| if v > 0.0 { gv } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, tensor(xv.shape().to_vec(), data));
            }
            Op::Sum(x) => {
                let shape = self.value(*x).shape();
                self.accumulate(grads, *x, Tensor::full(shape, g.item()));
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                self.accumulate(grads, *x, tensor(shape, g.data().to_vec()));
            }
            Op::Gather(x, map) => {
                let shape = self.value(*x).shape().to_vec();
                let mut data = vec![0.0; map.len()];
                for (j, &src) in map.iter().enumerate() {
                    data[src] += g.data()[j];
                }
                self.accumulate(grads, *x, tensor(shape, data));
            }
            Op::Conv2d(input, kernel, cache) => self.conv_backward(*input, *kernel, cache, g, grads),
            Op::MaxPool2(x, argmax) => {
                let shape = self.value(*x).shape().to_vec();
                let mut data = vec![0.0; self.value(*x).numel()];
                for (j, &src) in argmax.iter().enumerate() {
                    data[src] += g.data()[j];
                }
                self.accumulate(grads, *x, tensor(shape, data));
            }
            Op::SoftmaxCrossEntropy(logits, probs, labels) => {
                let n = labels.len();
                let classes = probs.len() / n;
                let scale = g.item() / n as f64;
                let mut data = probs.clone();
                for (row, &label) in labels.iter().enumerate() {
                    data[row * classes + label] -= 1.0;
                }
                data.iter_mut().for_each(|v| *v *= scale);
                self.accumulate(grads, *logits, tensor(vec![n, classes], data));
            }
        }
    }

    fn conv_backward(
        &self,
        input: Var,
        kernel: Var,
        c: &ConvCache,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) {
        let k = c.kernel;
        let patch = c.in_channels * k * k;
        let positions = c.out_h * c.out_w;
        let out_ch = c.out_channels;
        let want_kernel = self.nodes[kernel.0].requires_grad;
        let want_input = self.nodes[input.0].requires_grad;

        let mut g_weight = vec![0.0; patch * out_ch];
        let mut g_input = if want_input {
            vec![0.0; c.batch * c.in_channels * c.height * c.width]
        } else {
            Vec::new()
        };
        let weight_t = transpose_raw(&c.weight_mat, patch, out_ch);
        let mut g_rows = vec![0.0; positions * out_ch];
        let mut g_cols = vec![0.0; positions * patch];

        for n in 0..c.batch {
            for o in 0..out_ch {
                for p in 0..positions {
                    g_rows[p * out_ch + o] = g.data()[(n * out_ch + o) * positions + p];
                }
            }
            let cols = &c.cols[n * positions * patch..(n + 1) * positions * patch];
            if want_kernel {
                let cols_t = transpose_raw(cols, positions, patch);
                gemm(&cols_t, &g_rows, &mut g_weight, patch, positions, out_ch);
            }
            if want_input {
                g_cols.iter_mut().for_each(|v| *v = 0.0);
                gemm(&g_rows, &weight_t, &mut g_cols, positions, out_ch, patch);
                for y in 0..c.out_h {
                    for xo in 0..c.out_w {
                        let row = (y * c.out_w + xo) * patch;
                        for i in 0..c.in_channels {
                            for k1 in 0..k {
                                let iy = (y + k1) as isize - c.pad as isize;
                                if iy < 0 || iy >= c.height as isize {
                                    continue;
                                }
                                for k2 in 0..k {
                                    let ix = (xo + k2) as isize - c.pad as isize;
                                    if ix < 0 || ix >= c.width as isize {
                                        continue;
                                    }
                                    g_input[((n * c.in_channels + i) * c.height + iy as usize) * c.width
                                        + ix as usize] += g_cols[row + (i * k + k1) * k + k2];
                                }
                            }
                        }
                    }
                }
            }
        }

        if want_kernel {
            let mut gk = vec![0.0; patch * out_ch];
            for i in 0..c.in_channels {
                for o in 0..out_ch {
                    for k1 in 0..k {
                        for k2 in 0..k {
                            let row = (i * k + k1) * k + k2;
                            gk[((i * out_ch + o) * k + k1) * k + k2] = g_weight[row * out_ch + o];
                        }
                    }
                }
            }
            let shape = self.value(kernel).shape().to_vec();
            self.accumulate(grads, kernel, tensor(shape, gk));
        }
        if want_input {
            let shape = self.value(input).shape().to_vec();
            self.accumulate(grads, input, tensor(shape, g_input));
        }
    }
}

fn tensor(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
    Tensor::new(shape, data).expect("gradient shape mirrors a valid forward value")
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn softmax_rows(data: &[f64], classes: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks(classes) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| e / total));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negatives() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap());
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn conv_of_ones_sums_window() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::ones(&[1, 1, 3, 3]));
        let k = g.constant(Tensor::ones(&[1, 1, 3, 3]));
        let y = g.conv2d(x, k, 0).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1, 1, 1]);
        assert_eq!(g.value(y).item(), 9.0);
    }

    #[test]
    fn conv_kernel_larger_than_input_is_rejected() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::ones(&[1, 1, 2, 2]));
        let k = g.constant(Tensor::ones(&[1, 1, 3, 3]));
        assert!(matches!(g.conv2d(x, k, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn label_out_of_range_is_validation_error() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[1, 3]));
        assert!(matches!(
            g.softmax_cross_entropy(x, &[3]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn uniform_logits_give_log_c() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2, 5]));
        let loss = g.softmax_cross_entropy(x, &[0, 4]).unwrap();
        assert!((g.value(loss).item() - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let w = g.param(Tensor::from_rows(&[&[1.0, -2.0], &[3.0, 4.0]]));
        let s = g.sum(w);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(w).unwrap(), &Tensor::ones(&[2, 2]));
    }

    #[test]
    fn half_square_gradient_is_identity_map() {
        let wt = Tensor::from_rows(&[&[1.0, -2.0], &[3.0, 0.5]]);
        let mut g = Graph::new();
        let w = g.param(wt.clone());
        let sq = g.mul(w, w).unwrap();
        let s = g.sum(sq);
        let loss = g.scale(s, 0.5);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap(), &wt);
    }

    #[test]
    fn add_gradient_is_ones() {
        let mut g = Graph::new();
        let a = g.param(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let b = g.param(Tensor::new(vec![2], vec![3.0, 4.0]).unwrap());
        let c = g.add(a, b).unwrap();
        let s = g.sum(c);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn non_scalar_loss_is_contract_error() {
        let mut g = Graph::new();
        let w = g.param(Tensor::ones(&[2, 2]));
        assert!(matches!(g.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_get_no_gradient_entry() {
        let mut g = Graph::new();
        let w = g.param(Tensor::ones(&[2, 2]));
        let c = g.constant(Tensor::ones(&[2, 2]));
        let y = g.matmul(w, c).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert!(grads.contains(w));
        assert!(!grads.contains(c));
        assert_eq!(grads.len(), 1);
    }

    #[test]
    fn max_pool_routes_gradient_to_argmax() {
        let mut g = Graph::new();
        let x = g.param(Tensor::new(vec![1, 1, 2, 2], vec![1.0, 5.0, 2.0, 3.0]).unwrap());
        let y = g.max_pool2(x).unwrap();
        assert_eq!(g.value(y).item(), 5.0);
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0, 0.0, 0.0]);
    }
}
