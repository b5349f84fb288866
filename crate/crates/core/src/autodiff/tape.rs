use super::kernels::{self, BatchStats, Conv2dSpec};
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the per-edge scalars of a gated sum weight their inputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Each input is scaled by `sigmoid(g)`.
    #[default]
    Sigmoid,
    /// Each input is scaled by `g` directly.
    Raw,
}

enum Op<T> {
    Leaf,
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Sum(Var),
    Reshape(Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        spec: Conv2dSpec,
    },
    Separable {
        x: Var,
        depthwise: Var,
        pointwise: Var,
        bias: Var,
        mid: Tensor<T>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor<T>,
        invstd: Vec<f64>,
        train: bool,
    },
    GatedSum {
        inputs: Vec<Var>,
        gates: Var,
        mode: GateMode,
    },
    Mean(Vec<Var>),
    GlobalAvgPool(Var),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Tensor<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Append-only record of a computation. Every operation's inputs precede it,
/// so the reverse of recording order is a valid backward schedule.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn same_shape<T: Scalar>(what: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Record an input. Gradients are kept only for leaves with
    /// `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Hash of the sign pattern of every relu input. Two evaluations with
    /// equal signatures lie on the same linear piece of each relu.
    pub fn kink_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for node in &self.nodes {
            if let Op::Relu(x) = node.op {
                for &v in self.value(x).data() {
                    h ^= u64::from(v > T::zero());
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| if v > T::zero() || v.is_nan() { v } else { T::zero() });
        self.push(y, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = self.value(x).map(sigmoid);
        self.push(y, Op::Sigmoid(x), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let mut y = self.value(a).clone();
        y.add_assign(self.value(b));
        Ok(self.push(y, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape("mul", ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(&p, &q)| p * q).collect();
        let y = Tensor::new(ta.shape(), data)?;
        Ok(self.push(y, Op::Mul(a, b), &[a, b]))
    }

    /// Sum of all elements as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().map(|v| v.as_f64()).sum();
        self.push(Tensor::scalar(T::from_f64_lossy(s)), Op::Sum(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(x).clone().reshape(shape)?;
        Ok(self.push(y, Op::Reshape(x), &[x]))
    }

    /// `B x C x H x W` to `B x (C*H*W)`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let (b, c, h, w) = self.value(x).dims4()?;
        self.reshape(x, &[b, c * h * w])
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, spec: Conv2dSpec) -> Result<Var> {
        let y = kernels::conv2d_forward(self.value(x), self.value(w), self.value(b), spec)?;
        Ok(self.push(y, Op::Conv2d { x, w, b, spec }, &[x, w, b]))
    }

    /// Depthwise 3x3 convolution (stride 1, padding 1), then a 1x1
    /// pointwise convolution, then bias.
    pub fn separable_conv3x3(
        &mut self,
        x: Var,
        depthwise: Var,
        pointwise: Var,
        bias: Var,
    ) -> Result<Var> {
        if self.value(depthwise).shape().get(2..) != Some(&[3, 3][..]) {
            return Err(Error::shape(format!(
                "depthwise kernel {:?} is not 3x3",
                self.value(depthwise).shape()
            )));
        }
        let (y, mid) = kernels::separable_forward(
            self.value(x),
            self.value(depthwise),
            self.value(pointwise),
            self.value(bias),
        )?;
        let op = Op::Separable {
            x,
            depthwise,
            pointwise,
            bias,
            mid,
        };
        Ok(self.push(y, op, &[x, depthwise, pointwise, bias]))
    }

    fn affine_check(&self, x: Var, gamma: Var, beta: Var) -> Result<usize> {
        let (_, c, _, _) = self.value(x).dims4()?;
        for p in [gamma, beta] {
            if self.value(p).shape() != [c] {
                return Err(Error::shape(format!(
                    "batch norm affine shape {:?}, expected [{c}]",
                    self.value(p).shape()
                )));
            }
        }
        Ok(c)
    }

    fn push_batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor<T>,
        invstd: Vec<f64>,
        train: bool,
    ) -> Result<Var> {
        let (b, c, h, w) = xhat.dims4()?;
        let plane = h * w;
        let (g, be) = (self.value(gamma).data(), self.value(beta).data());
        let mut y = xhat.clone();
        let data = y.data_mut();
        for n in 0..b {
            for ch in 0..c {
                let base = (n * c + ch) * plane;
                for v in &mut data[base..base + plane] {
                    *v = g[ch] * *v + be[ch];
                }
            }
        }
        let op = Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            invstd,
            train,
        };
        Ok(self.push(y, op, &[x, gamma, beta]))
    }

    /// Normalize each channel with statistics of the current batch. Returns
    /// the batch mean and unbiased variance for running-average updates.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, BatchStats)> {
        self.affine_check(x, gamma, beta)?;
        let (xhat, invstd, stats) = kernels::batch_norm_train_stats(self.value(x), eps)?;
        let y = self.push_batch_norm(x, gamma, beta, xhat, invstd, true)?;
        Ok((y, stats))
    }

    /// Normalize each channel with fixed running statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[T],
        running_var: &[T],
        eps: f64,
    ) -> Result<Var> {
        let c = self.affine_check(x, gamma, beta)?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(Error::shape(format!(
                "running statistics for {} channels, input has {c}",
                running_mean.len()
            )));
        }
        let mean: Vec<f64> = running_mean.iter().map(|v| v.as_f64()).collect();
        let invstd: Vec<f64> = running_var
            .iter()
            .map(|v| 1.0 / (v.as_f64() + eps).sqrt())
            .collect();
        let xhat = kernels::normalize(self.value(x), &mean, &invstd)?;
        self.push_batch_norm(x, gamma, beta, xhat, invstd, false)
    }

    /// `sum_i w(g_i) * x_i` where `w` is sigmoid or identity and `gates`
    /// holds one scalar per input.
    pub fn gated_sum(&mut self, inputs: &[Var], gates: Var, mode: GateMode) -> Result<Var> {
        let Some(&first) = inputs.first() else {
            return Err(Error::InvalidParameter("gated sum needs at least one input".into()));
        };
        if self.value(gates).shape() != [inputs.len()] {
            return Err(Error::shape(format!(
                "{} gates for {} inputs",
                self.value(gates).numel(),
                inputs.len()
            )));
        }
        for &v in &inputs[1..] {
            same_shape("gated sum", self.value(first), self.value(v))?;
        }
        let weights: Vec<T> = self
            .value(gates)
            .data()
            .iter()
            .map(|&g| match mode {
                GateMode::Sigmoid => sigmoid(g),
                GateMode::Raw => g,
            })
            .collect();
        let mut y = Tensor::zeros(self.value(first).shape());
        for (&v, &wt) in inputs.iter().zip(&weights) {
            for (a, &x) in y.data_mut().iter_mut().zip(self.value(v).data()) {
                *a += wt * x;
            }
        }
        let mut deps = inputs.to_vec();
        deps.push(gates);
        let op = Op::GatedSum {
            inputs: inputs.to_vec(),
            gates,
            mode,
        };
        Ok(self.push(y, op, &deps))
    }

    /// Elementwise arithmetic mean of equally shaped inputs.
    pub fn mean(&mut self, inputs: &[Var]) -> Result<Var> {
        let Some(&first) = inputs.first() else {
            return Err(Error::InvalidParameter("mean needs at least one input".into()));
        };
        for &v in &inputs[1..] {
            same_shape("mean", self.value(first), self.value(v))?;
        }
        let mut y = self.value(first).clone();
        for &v in &inputs[1..] {
            y.add_assign(self.value(v));
        }
        let k = T::from_usize(inputs.len()).expect("input count fits the scalar type");
        for a in y.data_mut() {
            *a = *a / k;
        }
        Ok(self.push(y, Op::Mean(inputs.to_vec()), inputs))
    }

    /// `B x C x H x W` to `B x C` by averaging each plane.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (b, c, h, w) = self.value(x).dims4()?;
        let plane = h * w;
        let xs = self.value(x).data();
        let data = (0..b * c)
            .map(|i| {
                let s: f64 = xs[i * plane..(i + 1) * plane].iter().map(|v| v.as_f64()).sum();
                T::from_f64_lossy(s / plane as f64)
            })
            .collect();
        let y = Tensor::new(&[b, c], data)?;
        Ok(self.push(y, Op::GlobalAvgPool(x), &[x]))
    }

    /// `x [B, N]`, `w [M, N]`, `b [M]` to `x w^T + b [B, M]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let (&[bn, n], &[m, wn]) = (tx.shape(), tw.shape()) else {
            return Err(Error::shape(format!(
                "linear expects rank-2 input and weight, got {:?} and {:?}",
                tx.shape(),
                tw.shape()
            )));
        };
        if wn != n || tb.shape() != [m] {
            return Err(Error::shape(format!(
                "linear weight {:?} and bias {:?} do not fit input {:?}",
                tw.shape(),
                tb.shape(),
                tx.shape()
            )));
        }
        let (xs, ws, bs) = (tx.data(), tw.data(), tb.data());
        let mut out = Vec::with_capacity(bn * m);
        for i in 0..bn {
            let row = &xs[i * n..(i + 1) * n];
            for j in 0..m {
                let wr = &ws[j * n..(j + 1) * n];
                let mut acc = T::zero();
                for (&a, &c) in row.iter().zip(wr) {
                    acc += a * c;
                }
                out.push(acc + bs[j]);
            }
        }
        let y = Tensor::new(&[bn, m], out)?;
        Ok(self.push(y, Op::Linear { x, w, b }, &[x, w, b]))
    }

    /// Mean cross-entropy of `logits [B, M]` against integer labels, plus
    /// the softmax probabilities.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<(Var, Tensor<T>)> {
        let t = self.value(logits);
        let &[b, m] = t.shape() else {
            return Err(Error::shape(format!("logits must be rank 2, got {:?}", t.shape())));
        };
        if labels.len() != b {
            return Err(Error::shape(format!("{} labels for batch of {b}", labels.len())));
        }
        if b == 0 {
            return Err(Error::shape("empty batch"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= m) {
            return Err(Error::Range(format!("label {bad} outside [0, {m})")));
        }
        let xs = t.data();
        let mut probs = Vec::with_capacity(b * m);
        let mut total = 0.0f64;
        for (i, &label) in labels.iter().enumerate() {
            let row: Vec<f64> = xs[i * m..(i + 1) * m].iter().map(|v| v.as_f64()).collect();
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + z.ln();
            total += lse - row[label];
            probs.extend(row.iter().map(|v| T::from_f64_lossy((v - lse).exp())));
        }
        let probs = Tensor::new(&[b, m], probs)?;
        let loss = Tensor::scalar(T::from_f64_lossy(total / b as f64));
        let op = Op::CrossEntropy {
            logits,
            labels: labels.to_vec(),
            probs: probs.clone(),
        };
        Ok((self.push(loss, op, &[logits]), probs))
    }

    /// Reverse-mode sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let seed = self.value(loss);
        if seed.numel() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                seed.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::new();
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::full(seed.shape(), T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gy) = grads[i].take() else {
                continue;
            };
            self.propagate(&node.op, &node.value, gy, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(
        &self,
        op: &Op<T>,
        y: &Tensor<T>,
        gy: Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        let mut acc = |v: Var, g: Tensor<T>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        };
        match op {
            Op::Leaf => {}
            Op::Relu(x) => {
                let xv = self.value(*x);
                let data = gy
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                    .collect();
                acc(*x, Tensor::new(xv.shape(), data)?);
            }
            Op::Sigmoid(x) => {
                let data = gy
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&g, &s)| g * s * (T::one() - s))
                    .collect();
                acc(*x, Tensor::new(y.shape(), data)?);
            }
            Op::Add(a, b) => {
                acc(*a, gy.clone());
                acc(*b, gy);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ga = gy.data().iter().zip(tb.data()).map(|(&g, &v)| g * v).collect();
                let gb = gy.data().iter().zip(ta.data()).map(|(&g, &v)| g * v).collect();
                acc(*a, Tensor::new(ta.shape(), ga)?);
                acc(*b, Tensor::new(tb.shape(), gb)?);
            }
            Op::Sum(x) => {
                acc(*x, Tensor::full(self.value(*x).shape(), gy.data()[0]));
            }
            Op::Reshape(x) => {
                acc(*x, gy.reshape(self.value(*x).shape())?);
            }
            Op::Conv2d { x, w, b, spec } => {
                let (gx, gw, gb) = kernels::conv2d_backward(
                    self.value(*x),
                    self.value(*w),
                    self.value(*b),
                    *spec,
                    &gy,
                    self.wants(*x),
                )?;
                if let Some(gx) = gx {
                    acc(*x, gx);
                }
                acc(*w, gw);
                acc(*b, gb);
            }
            Op::Separable {
                x,
                depthwise,
                pointwise,
                bias,
                mid,
            } => {
                let g = kernels::separable_backward(
                    self.value(*x),
                    self.value(*depthwise),
                    self.value(*pointwise),
                    self.value(*bias),
                    mid,
                    &gy,
                    self.wants(*x),
                )?;
                if let Some(gx) = g.x {
                    acc(*x, gx);
                }
                acc(*depthwise, g.depthwise);
                acc(*pointwise, g.pointwise);
                acc(*bias, g.bias);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                invstd,
                train,
            } => {
                let (b, c, h, w) = xhat.dims4()?;
                let plane = h * w;
                let count = (b * plane) as f64;
                let (gys, xh, gm) = (gy.data(), xhat.data(), self.value(*gamma).data());
                let mut sum_g = vec![0.0f64; c];
                let mut sum_gx = vec![0.0f64; c];
                for n in 0..b {
                    for ch in 0..c {
                        let base = (n * c + ch) * plane;
                        for k in base..base + plane {
                            let g = gys[k].as_f64();
                            sum_g[ch] += g;
                            sum_gx[ch] += g * xh[k].as_f64();
                        }
                    }
                }
                let mut gx = vec![T::zero(); gys.len()];
                for n in 0..b {
                    for ch in 0..c {
                        let base = (n * c + ch) * plane;
                        let scale = gm[ch].as_f64() * invstd[ch];
                        for k in base..base + plane {
                            let g = gys[k].as_f64();
                            let v = if *train {
                                scale / count
                                    * (count * g - sum_g[ch] - xh[k].as_f64() * sum_gx[ch])
                            } else {
                                scale * g
                            };
                            gx[k] = T::from_f64_lossy(v);
                        }
                    }
                }
                acc(*x, Tensor::new(xhat.shape(), gx)?);
                acc(*gamma, Tensor::from_f64(&[c], &sum_gx)?);
                acc(*beta, Tensor::from_f64(&[c], &sum_g)?);
            }
            Op::GatedSum {
                inputs,
                gates,
                mode,
            } => {
                let gv = self.value(*gates).data();
                let mut ggates = Vec::with_capacity(inputs.len());
                for (&v, &g) in inputs.iter().zip(gv) {
                    let (wt, dw) = match mode {
                        GateMode::Sigmoid => {
                            let s = sigmoid(g);
                            (s, s * (T::one() - s))
                        }
                        GateMode::Raw => (g, T::one()),
                    };
                    let xv = self.value(v);
                    let dot: f64 = gy
                        .data()
                        .iter()
                        .zip(xv.data())
                        .map(|(&a, &b)| (a * b).as_f64())
                        .sum();
                    ggates.push(T::from_f64_lossy(dot) * dw);
                    if self.wants(v) {
                        acc(v, gy.map(|a| a * wt));
                    }
                }
                acc(*gates, Tensor::new(&[inputs.len()], ggates)?);
            }
            Op::Mean(inputs) => {
                let k = T::from_usize(inputs.len()).expect("input count fits the scalar type");
                let g = gy.map(|a| a / k);
                for &v in inputs {
                    acc(v, g.clone());
                }
            }
            Op::GlobalAvgPool(x) => {
                let (b, c, h, w) = self.value(*x).dims4()?;
                let plane = h * w;
                let scale = T::from_usize(plane).expect("plane size fits the scalar type");
                let mut gx = Vec::with_capacity(b * c * plane);
                for &g in gy.data() {
                    gx.extend(std::iter::repeat_n(g / scale, plane));
                }
                acc(*x, Tensor::new(&[b, c, h, w], gx)?);
            }
            Op::Linear { x, w, b } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (bn, n, m) = (tx.shape()[0], tx.shape()[1], tw.shape()[0]);
                let (xs, ws, gys) = (tx.data(), tw.data(), gy.data());
                if self.wants(*x) {
                    let mut gx = vec![T::zero(); bn * n];
                    for i in 0..bn {
                        let row = &mut gx[i * n..(i + 1) * n];
                        for j in 0..m {
                            let g = gys[i * m + j];
                            for (a, &wv) in row.iter_mut().zip(&ws[j * n..(j + 1) * n]) {
                                *a += g * wv;
                            }
                        }
                    }
                    acc(*x, Tensor::new(&[bn, n], gx)?);
                }
                let mut gw = vec![T::zero(); m * n];
                let mut gb = vec![T::zero(); m];
                for i in 0..bn {
                    let row = &xs[i * n..(i + 1) * n];
                    for j in 0..m {
                        let g = gys[i * m + j];
                        gb[j] += g;
                        for (a, &xv) in gw[j * n..(j + 1) * n].iter_mut().zip(row) {
                            *a += g * xv;
                        }
                    }
                }
                acc(*w, Tensor::new(&[m, n], gw)?);
                acc(*b, Tensor::new(&[m], gb)?);
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let (b, m) = (probs.shape()[0], probs.shape()[1]);
                let scale = gy.data()[0].as_f64() / b as f64;
                let mut g: Vec<f64> = probs.data().iter().map(|p| p.as_f64()).collect();
                for (i, &l) in labels.iter().enumerate() {
                    g[i * m + l] -= 1.0;
                }
                let g: Vec<f64> = g.into_iter().map(|v| v * scale).collect();
                acc(*logits, Tensor::from_f64(&[b, m], &g)?);
            }
        }
        Ok(())
    }
}

/// Gradients of a scalar loss with respect to the tape's leaves.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`, if any path from `v` reached the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros shaped like `value` when `v` does not
    /// influence the loss.
    pub fn get_or_zeros(&self, v: Var, value: &Tensor<T>) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(value.shape()))
    }
}
