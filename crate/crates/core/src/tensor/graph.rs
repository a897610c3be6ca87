use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::kernels::{self, ConvGeom};
use super::{Gradients, ParamId, ParamStore, Real, ShapeError, Tensor};

/// Handle of a node recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Sigmoid,
    Tanh,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphError {
    Shape(ShapeError),
    /// `backward` was called on a node holding more than one value.
    NonScalarLoss {
        shape: Vec<usize>,
    },
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::Shape(e) => write!(f, "shape error in {}", e),
            GraphError::NonScalarLoss { shape } => {
                write!(f, "loss must be scalar, got shape {:?}", shape)
            }
        }
    }
}

impl core::error::Error for GraphError {}

impl From<ShapeError> for GraphError {
    fn from(e: ShapeError) -> Self {
        GraphError::Shape(e)
    }
}

type Result<T> = core::result::Result<T, GraphError>;

fn shape_err<T>(op: &'static str, detail: alloc::string::String) -> Result<T> {
    Err(GraphError::Shape(ShapeError::new(op, detail)))
}

enum Op<T> {
    Leaf,
    Param,
    Conv2d(ConvGeom),
    Dense,
    LayerNorm { rows: usize, mean: T, rstd: T },
    Act(Activation),
    MaxPool2 { arg: Vec<u32> },
    Upsample2,
    ChannelAffine,
    Concat,
    Crop,
    Add,
    Mul,
    Scale(T),
    AddScalar,
    Sum,
    Slice { start: usize },
    Reshape,
    Dice { target: Vec<T>, eps: T },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    inputs: Vec<NodeId>,
    needs_grad: bool,
}

/// Weights of one LSTM cell as graph nodes. Gate order is
/// input, forget, candidate, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub w_ih: NodeId,
    pub w_hh: NodeId,
    pub bias: NodeId,
}

/// Tape of recorded operations. Nodes are appended in evaluation order,
/// so the node list is already a topological order.
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
    bound: Vec<Option<NodeId>>,
    ln_eps: T,
    corrupt_elu_grad: bool,
    scratch: Vec<T>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of the leaves of a graph after [`Graph::backward_leaves`].
pub struct LeafGrads<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> LeafGrads<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            bound: Vec::new(),
            ln_eps: T::from_f64(LAYER_NORM_EPS),
            corrupt_elu_grad: false,
            scratch: Vec::new(),
        }
    }

    /// Debug hook: perturbs the ELU derivative so gradient checks fail.
    pub fn with_corrupted_elu_grad(mut self) -> Self {
        self.corrupt_elu_grad = true;
        self
    }

    /// Hash of every max-pool argmax choice. Two evaluations with equal
    /// signatures lie on the same smooth piece of the function.
    pub fn kink_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for n in &self.nodes {
            if let Op::MaxPool2 { arg } = &n.op {
                for &a in arg {
                    h = (h ^ a as u64).wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn needs_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: Vec<NodeId>) -> NodeId {
        let needs_grad = match op {
            Op::Leaf => false,
            Op::Param => true,
            _ => inputs.iter().any(|i| self.nodes[i.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            inputs,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, Vec::new())
    }

    /// Leaf that receives a gradient (used by gradient checks).
    pub fn variable(&mut self, value: Tensor<T>) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            inputs: Vec::new(),
            needs_grad: true,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Binds a parameter into the graph; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> NodeId {
        if self.bound.len() <= id.0 {
            self.bound.resize(id.0 + 1, None);
        }
        if let Some(n) = self.bound[id.0] {
            return n;
        }
        let n = self.push(store.get(id).clone(), Op::Param, Vec::new());
        self.bound[id.0] = Some(n);
        n
    }

    /// Copy of `x` that blocks gradient flow.
    pub fn detach(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).clone();
        self.input(v)
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        kernel: NodeId,
        bias: NodeId,
        pad: usize,
        stride: usize,
    ) -> Result<NodeId> {
        let (c_in, h, w) = self.value(x).chw()?;
        let ks = self.value(kernel).shape().to_vec();
        let [c_out, kc, f, f2] = ks[..] else {
            return shape_err("conv2d", format!("kernel must be 4-D, got {:?}", ks));
        };
        if kc != c_in || f != f2 {
            return shape_err(
                "conv2d",
                format!("kernel {:?} does not fit input {:?}", ks, [c_in, h, w]),
            );
        }
        if self.value(bias).shape() != [c_out] {
            return shape_err(
                "conv2d",
                format!("bias {:?} for {} outputs", self.value(bias).shape(), c_out),
            );
        }
        let Some(geom) = ConvGeom::new(c_in, h, w, c_out, f, pad, stride) else {
            return shape_err(
                "conv2d",
                format!("kernel {} pad {} stride {} on {}x{}", f, pad, stride, h, w),
            );
        };
        let mut buf = core::mem::take(&mut self.scratch);
        let y = kernels::conv2d_forward(
            self.value(x).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
            &geom,
            &mut buf,
        );
        self.scratch = buf;
        let out = Tensor::from_vec(&[c_out, geom.ho, geom.wo], y)?;
        Ok(self.push(out, Op::Conv2d(geom), vec![x, kernel, bias]))
    }

    /// `weight * flatten(x) + bias`, with `bias` optional.
    pub fn dense(&mut self, x: NodeId, weight: NodeId, bias: Option<NodeId>) -> Result<NodeId> {
        let n = self.value(x).len();
        let ws = self.value(weight).shape().to_vec();
        let [m, wn] = ws[..] else {
            return shape_err("dense", format!("weight must be 2-D, got {:?}", ws));
        };
        if wn != n {
            return shape_err(
                "dense",
                format!("weight {:?} for input of length {}", ws, n),
            );
        }
        let mut y = match bias {
            Some(b) => {
                if self.value(b).shape() != [m] {
                    return shape_err(
                        "dense",
                        format!("bias {:?} for {} outputs", self.value(b).shape(), m),
                    );
                }
                self.value(b).data().to_vec()
            }
            None => vec![T::ZERO; m],
        };
        super::gemm(
            false,
            false,
            m,
            n,
            1,
            self.value(weight).data(),
            self.value(x).data(),
            &mut y,
            true,
        );
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        Ok(self.push(Tensor::from_vec(&[m], y)?, Op::Dense, inputs))
    }

    /// Layer normalization over the whole sample. `gain`/`bias` have one
    /// entry per leading-axis row: per channel for `[C,H,W]`, per element
    /// for vectors.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let rows = self.value(x).shape()[0];
        if self.value(gain).shape() != [rows] || self.value(bias).shape() != [rows] {
            return shape_err(
                "layer_norm",
                format!(
                    "gain {:?} / bias {:?} for input {:?}",
                    self.value(gain).shape(),
                    self.value(bias).shape(),
                    self.value(x).shape()
                ),
            );
        }
        let (y, mean, rstd) = kernels::layer_norm_forward(
            self.value(x).data(),
            rows,
            self.value(gain).data(),
            self.value(bias).data(),
            self.ln_eps,
        );
        let out = Tensor::from_vec(self.value(x).shape(), y)?;
        Ok(self.push(out, Op::LayerNorm { rows, mean, rstd }, vec![x, gain, bias]))
    }

    pub fn activation(&mut self, kind: Activation, x: NodeId) -> NodeId {
        let out = match kind {
            Activation::Elu => self.value(x).map(elu),
            Activation::Sigmoid => self.value(x).map(T::sigmoid),
            Activation::Tanh => self.value(x).map(T::tanh),
        };
        self.push(out, Op::Act(kind), vec![x])
    }

    pub fn elu(&mut self, x: NodeId) -> NodeId {
        self.activation(Activation::Elu, x)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.activation(Activation::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.activation(Activation::Tanh, x)
    }

    pub fn max_pool2(&mut self, x: NodeId) -> Result<NodeId> {
        let (c, h, w) = self.value(x).chw()?;
        if h < 2 || w < 2 {
            return shape_err("max_pool2", format!("input {}x{} smaller than 2x2", h, w));
        }
        let (y, arg) = kernels::max_pool2_forward(self.value(x).data(), c, h, w);
        let out = Tensor::from_vec(&[c, h / 2, w / 2], y)?;
        Ok(self.push(out, Op::MaxPool2 { arg }, vec![x]))
    }

    pub fn upsample2(&mut self, x: NodeId) -> Result<NodeId> {
        let (c, h, w) = self.value(x).chw()?;
        let y = kernels::upsample2_forward(self.value(x).data(), c, h, w);
        let out = Tensor::from_vec(&[c, 2 * h, 2 * w], y)?;
        Ok(self.push(out, Op::Upsample2, vec![x]))
    }

    /// `out[k] = scale[k] * x[k] + shift[k]` for every feature map `k`.
    pub fn channel_affine(&mut self, x: NodeId, scale: NodeId, shift: NodeId) -> Result<NodeId> {
        let (k, h, w) = self.value(x).chw()?;
        if self.value(scale).shape() != [k] || self.value(shift).shape() != [k] {
            return shape_err(
                "channel_affine",
                format!(
                    "scale {:?} / shift {:?} for {} channels",
                    self.value(scale).shape(),
                    self.value(shift).shape(),
                    k
                ),
            );
        }
        let s = h * w;
        let (xv, sv, tv) = (
            self.value(x).data(),
            self.value(scale).data(),
            self.value(shift).data(),
        );
        let y: Vec<T> = (0..k)
            .flat_map(|ch| {
                xv[ch * s..(ch + 1) * s]
                    .iter()
                    .map(move |&v| sv[ch] * v + tv[ch])
            })
            .collect();
        let out = Tensor::from_vec(&[k, h, w], y)?;
        Ok(self.push(out, Op::ChannelAffine, vec![x, scale, shift]))
    }

    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ca, ha, wa) = self.value(a).chw()?;
        let (cb, hb, wb) = self.value(b).chw()?;
        if (ha, wa) != (hb, wb) {
            return shape_err("concat", format!("{}x{} vs {}x{}", ha, wa, hb, wb));
        }
        let mut y = self.value(a).data().to_vec();
        y.extend_from_slice(self.value(b).data());
        let out = Tensor::from_vec(&[ca + cb, ha, wa], y)?;
        Ok(self.push(out, Op::Concat, vec![a, b]))
    }

    /// Keeps the top-left `h x w` window of every channel.
    pub fn crop(&mut self, x: NodeId, h: usize, w: usize) -> Result<NodeId> {
        let (c, xh, xw) = self.value(x).chw()?;
        if h > xh || w > xw || h == 0 || w == 0 {
            return shape_err("crop", format!("{}x{} from {}x{}", h, w, xh, xw));
        }
        let xv = self.value(x).data();
        let mut y = Vec::with_capacity(c * h * w);
        for ch in 0..c {
            for r in 0..h {
                let start = ch * xh * xw + r * xw;
                y.extend_from_slice(&xv[start..start + w]);
            }
        }
        let out = Tensor::from_vec(&[c, h, w], y)?;
        Ok(self.push(out, Op::Crop, vec![x]))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return shape_err(
                op,
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            );
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let y = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&p, &q)| p + q)
            .collect();
        let out = Tensor::from_vec(self.value(a).shape(), y)?;
        Ok(self.push(out, Op::Add, vec![a, b]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let y = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&p, &q)| p * q)
            .collect();
        let out = Tensor::from_vec(self.value(a).shape(), y)?;
        Ok(self.push(out, Op::Mul, vec![a, b]))
    }

    pub fn scale(&mut self, x: NodeId, s: T) -> NodeId {
        let out = self.value(x).map(|v| v * s);
        self.push(out, Op::Scale(s), vec![x])
    }

    pub fn add_scalar(&mut self, x: NodeId, s: T) -> NodeId {
        let out = self.value(x).map(|v| v + s);
        self.push(out, Op::AddScalar, vec![x])
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum, vec![x])
    }

    /// Flat slice `[start, start + len)` of `x`, returned as a vector.
    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let n = self.value(x).len();
        if len == 0 || start + len > n {
            return shape_err("slice", format!("[{}, {}) of {}", start, start + len, n));
        }
        let out = Tensor::from_vec(&[len], self.value(x).data()[start..start + len].to_vec())?;
        Ok(self.push(out, Op::Slice { start }, vec![x]))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let out = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(out, Op::Reshape, vec![x]))
    }

    /// Soft Dice loss `1 - (2 sum(p g) + eps) / (sum p + sum g + eps)`.
    pub fn dice_loss(&mut self, pred: NodeId, target: &Tensor<T>, eps: T) -> Result<NodeId> {
        if self.value(pred).shape() != target.shape() {
            return shape_err(
                "dice_loss",
                format!(
                    "pred {:?} vs target {:?}",
                    self.value(pred).shape(),
                    target.shape()
                ),
            );
        }
        let (inter, sp, sg) = dice_sums(self.value(pred).data(), target.data());
        let loss = T::ONE - (T::from_f64(2.0) * inter + eps) / (sp + sg + eps);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Dice {
                target: target.data().to_vec(),
                eps,
            },
            vec![pred],
        ))
    }

    /// One LSTM cell step. Returns `(h', c')`.
    pub fn lstm_step(
        &mut self,
        x: NodeId,
        h: NodeId,
        c: NodeId,
        p: &LstmParams,
    ) -> Result<(NodeId, NodeId)> {
        let hidden = self.value(h).len();
        if self.value(c).len() != hidden || self.value(p.w_hh).shape() != [4 * hidden, hidden] {
            return shape_err(
                "lstm_step",
                format!("state {} / w_hh {:?}", hidden, self.value(p.w_hh).shape()),
            );
        }
        let gx = self.dense(x, p.w_ih, Some(p.bias))?;
        let gh = self.dense(h, p.w_hh, None)?;
        let gates = self.add(gx, gh)?;
        let i = self.slice(gates, 0, hidden)?;
        let f = self.slice(gates, hidden, hidden)?;
        let g = self.slice(gates, 2 * hidden, hidden)?;
        let o = self.slice(gates, 3 * hidden, hidden)?;
        let i = self.sigmoid(i);
        let f = self.sigmoid(f);
        let g = self.tanh(g);
        let o = self.sigmoid(o);
        let c_flat = self.reshape(c, &[hidden])?;
        let keep = self.mul(f, c_flat)?;
        let write = self.mul(i, g)?;
        let c_next = self.add(keep, write)?;
        let tc = self.tanh(c_next);
        let h_next = self.mul(o, tc)?;
        Ok((h_next, c_next))
    }

    /// Reverse pass from a scalar node; returns gradients of all leaves
    /// that require one.
    pub fn backward_leaves(&self, loss: NodeId) -> Result<LeafGrads<T>> {
        let shape = self.value(loss).shape();
        if self.value(loss).len() != 1 {
            return Err(GraphError::NonScalarLoss {
                shape: shape.to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].needs_grad {
            return Ok(LeafGrads { grads });
        }
        grads[loss.0] = Some(Tensor::full(shape, T::ONE));
        let mut scratch = Vec::new();
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf | Op::Param) {
                continue;
            }
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            for (slot, &inp) in node.inputs.iter().enumerate() {
                if !self.nodes[inp.0].needs_grad {
                    continue;
                }
                let mut buf = grads[inp.0]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(self.value(inp).shape()));
                self.accumulate_input_grad(node, slot, &dy, buf.data_mut(), &mut scratch);
                grads[inp.0] = Some(buf);
            }
        }
        Ok(LeafGrads { grads })
    }

    /// Reverse pass returning one gradient per parameter of `store`;
    /// parameters not reachable from `loss` get zeros.
    pub fn backward(&self, loss: NodeId, store: &ParamStore<T>) -> Result<Gradients<T>> {
        let leaf = self.backward_leaves(loss)?;
        let mut out = Gradients::zeros_like(store);
        for (pid, node) in self.bound.iter().enumerate() {
            if let Some(n) = node {
                if let Some(g) = leaf.get(*n) {
                    *out.get_mut(ParamId(pid)) = g.clone();
                }
            }
        }
        Ok(out)
    }

    fn accumulate_input_grad(
        &self,
        node: &Node<T>,
        slot: usize,
        dy: &Tensor<T>,
        dx: &mut [T],
        scratch: &mut Vec<T>,
    ) {
        let dyv = dy.data();
        let inp = |k: usize| self.nodes[node.inputs[k].0].value.data();
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Conv2d(geom) => match slot {
                0 => kernels::conv2d_backward(
                    inp(0),
                    inp(1),
                    dyv,
                    geom,
                    Some(dx),
                    None,
                    None,
                    scratch,
                ),
                1 => kernels::conv2d_backward(
                    inp(0),
                    inp(1),
                    dyv,
                    geom,
                    None,
                    Some(dx),
                    None,
                    scratch,
                ),
                _ => kernels::conv2d_backward(
                    inp(0),
                    inp(1),
                    dyv,
                    geom,
                    None,
                    None,
                    Some(dx),
                    scratch,
                ),
            },
            Op::Dense => {
                let x = inp(0);
                let w = inp(1);
                let (m, n) = (dyv.len(), x.len());
                match slot {
                    0 => super::gemm(true, false, n, m, 1, w, dyv, dx, true),
                    1 => super::gemm(false, false, m, 1, n, dyv, x, dx, true),
                    _ => dx.iter_mut().zip(dyv).for_each(|(a, &b)| *a += b),
                }
            }
            Op::LayerNorm { rows, mean, rstd } => {
                let (x, gain) = (inp(0), inp(1));
                match slot {
                    0 => kernels::layer_norm_backward(
                        x,
                        *rows,
                        gain,
                        *mean,
                        *rstd,
                        dyv,
                        Some(dx),
                        None,
                        None,
                    ),
                    1 => kernels::layer_norm_backward(
                        x,
                        *rows,
                        gain,
                        *mean,
                        *rstd,
                        dyv,
                        None,
                        Some(dx),
                        None,
                    ),
                    _ => kernels::layer_norm_backward(
                        x,
                        *rows,
                        gain,
                        *mean,
                        *rstd,
                        dyv,
                        None,
                        None,
                        Some(dx),
                    ),
                }
            }
            Op::Act(kind) => {
                let y = node.value.data();
                match kind {
                    Activation::Elu => {
                        let x = inp(0);
                        let bump = if self.corrupt_elu_grad {
                            T::from_f64(1.01)
                        } else {
                            T::ONE
                        };
                        for i in 0..dx.len() {
                            let d = if x[i] > T::ZERO {
                                T::ONE
                            } else {
                                y[i] + T::ONE
                            };
                            dx[i] += dyv[i] * d * bump;
                        }
                    }
                    Activation::Sigmoid => {
                        for i in 0..dx.len() {
                            dx[i] += dyv[i] * y[i] * (T::ONE - y[i]);
                        }
                    }
                    Activation::Tanh => {
                        for i in 0..dx.len() {
                            dx[i] += dyv[i] * (T::ONE - y[i] * y[i]);
                        }
                    }
                }
            }
            Op::MaxPool2 { arg } => {
                for (&a, &g) in arg.iter().zip(dyv) {
                    dx[a as usize] += g;
                }
            }
            Op::Upsample2 => {
                let [c, h, w] = self.nodes[node.inputs[0].0].value.shape()[..] else {
                    unreachable!()
                };
                kernels::upsample2_backward(dyv, c, h, w, dx);
            }
            Op::ChannelAffine => {
                let x = inp(0);
                let k = dx.len().max(1);
                let s = x.len() / self.nodes[node.inputs[1].0].value.len();
                match slot {
                    0 => {
                        let sv = inp(1);
                        for (i, d) in dx.iter_mut().enumerate() {
                            *d += dyv[i] * sv[i / s];
                        }
                    }
                    1 => {
                        for ch in 0..k {
                            let r = ch * s..(ch + 1) * s;
                            dx[ch] += x[r.clone()]
                                .iter()
                                .zip(&dyv[r])
                                .map(|(&a, &b)| a * b)
                                .sum::<T>();
                        }
                    }
                    _ => {
                        for ch in 0..k {
                            dx[ch] += dyv[ch * s..(ch + 1) * s].iter().copied().sum::<T>();
                        }
                    }
                }
            }
            Op::Concat => {
                let na = inp(0).len();
                let src = if slot == 0 { &dyv[..na] } else { &dyv[na..] };
                dx.iter_mut().zip(src).for_each(|(a, &b)| *a += b);
            }
            Op::Crop => {
                let [c, xh, xw] = self.nodes[node.inputs[0].0].value.shape()[..] else {
                    unreachable!()
                };
                let [_, h, w] = node.value.shape()[..] else {
                    unreachable!()
                };
                for ch in 0..c {
                    for r in 0..h {
                        let d = &mut dx[ch * xh * xw + r * xw..][..w];
                        let g = &dyv[(ch * h + r) * w..][..w];
                        d.iter_mut().zip(g).for_each(|(a, &b)| *a += b);
                    }
                }
            }
            Op::Add | Op::AddScalar | Op::Reshape => {
                dx.iter_mut().zip(dyv).for_each(|(a, &b)| *a += b)
            }
            Op::Mul => {
                let other = inp(1 - slot);
                for i in 0..dx.len() {
                    dx[i] += dyv[i] * other[i];
                }
            }
            Op::Scale(s) => dx.iter_mut().zip(dyv).for_each(|(a, &b)| *a += b * *s),
            Op::Sum => {
                let g = dyv[0];
                dx.iter_mut().for_each(|a| *a += g);
            }
            Op::Slice { start } => {
                dx[*start..*start + dyv.len()]
                    .iter_mut()
                    .zip(dyv)
                    .for_each(|(a, &b)| *a += b);
            }
            Op::Dice { target, eps } => {
                let p = inp(0);
                let (inter, sp, sg) = dice_sums(p, target);
                let denom = sp + sg + *eps;
                let num = T::from_f64(2.0) * inter + *eps;
                let g = dyv[0];
                let two = T::from_f64(2.0);
                for i in 0..dx.len() {
                    dx[i] -= g * (two * target[i] * denom - num) / (denom * denom);
                }
            }
        }
    }
}

#[inline]
fn elu<T: Real>(v: T) -> T {
    if v > T::ZERO {
        v
    } else {
        v.exp() - T::ONE
    }
}

fn dice_sums<T: Real>(p: &[T], g: &[T]) -> (T, T, T) {
    let mut inter = T::ZERO;
    let mut sp = T::ZERO;
    let mut sg = T::ZERO;
    for (&a, &b) in p.iter().zip(g) {
        inter += a * b;
        sp += a;
        sg += b;
    }
    (inter, sp, sg)
}
