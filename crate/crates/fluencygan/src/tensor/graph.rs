//! The recorded computation graph and its operations.

use super::{Result, Tensor, TensorError};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Scale(NodeId, f32),
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    Reshape(NodeId),
    Narrow {
        input: NodeId,
        axis: usize,
        start: usize,
    },
    Concat {
        inputs: Vec<NodeId>,
        axis: usize,
    },
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Clamp {
        input: NodeId,
        lo: f32,
        hi: f32,
    },
    Softmax {
        input: NodeId,
        axis: usize,
    },
    Sum {
        input: NodeId,
        axis: Option<usize>,
    },
    Mean {
        input: NodeId,
        axis: Option<usize>,
    },
    MaxPoolTime {
        input: NodeId,
        argmax: Vec<usize>,
    },
    Conv1d {
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
    },
    EmbeddingIds {
        table: NodeId,
        ids: Vec<u32>,
    },
    LayerNorm {
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f32,
    },
    CrossEntropyRows {
        logits: NodeId,
        targets: Vec<u32>,
        mask: Vec<f32>,
    },
    SplitHeads {
        input: NodeId,
        heads: usize,
    },
    MergeHeads {
        input: NodeId,
        heads: usize,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Define-by-run computation graph. Nodes only reference earlier nodes, so
/// the insertion order is a topological order and one reverse sweep visits
/// every node exactly once.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Insert a copy of `tensor` as a leaf. Gradients flow back to it iff
    /// `tensor.requires_grad`.
    pub fn leaf(&mut self, tensor: &Tensor) -> NodeId {
        let needs = tensor.requires_grad;
        self.push(
            Tensor {
                shape: tensor.shape().to_vec(),
                data: tensor.data().to_vec(),
                grad: None,
                requires_grad: needs,
            },
            Op::Leaf,
            needs,
        )
    }

    /// Insert a non-trainable constant.
    pub fn constant(&mut self, tensor: Tensor) -> NodeId {
        self.push(
            Tensor {
                requires_grad: false,
                grad: None,
                ..tensor
            },
            Op::Leaf,
            false,
        )
    }

    pub fn constant_scalar(&mut self, value: f32) -> NodeId {
        self.constant(Tensor::scalar(value))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn data(&self, id: NodeId) -> &[f32] {
        self.nodes[id.0].value.data()
    }

    /// Gradient of the last `backward` target w.r.t. this node, if computed.
    pub fn grad_of(&self, id: NodeId) -> Option<&[f32]> {
        self.nodes[id.0].value.grad.as_deref()
    }

    pub fn all_values_finite(&self) -> bool {
        self.nodes.iter().all(|n| n.value.all_finite())
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    // ---- elementwise binary ops (numpy-style broadcasting) ----

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "div", |x, y| x / y, Op::Div(a, b))
    }

    fn binary(
        &mut self,
        a: NodeId,
        b: NodeId,
        name: &'static str,
        f: impl Fn(f32, f32) -> f32,
        op: Op,
    ) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let out_shape = broadcast_shape(av.shape(), bv.shape()).ok_or_else(|| {
            TensorError::DimensionMismatch {
                op: name,
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            }
        })?;
        let data = if av.shape() == bv.shape() {
            av.data()
                .iter()
                .zip(bv.data())
                .map(|(&x, &y)| f(x, y))
                .collect()
        } else {
            let numel: usize = out_shape.iter().product();
            let a_idx = BroadcastIndex::new(av.shape(), &out_shape);
            let b_idx = BroadcastIndex::new(bv.shape(), &out_shape);
            (0..numel)
                .map(|i| f(av.data()[a_idx.map(i)], bv.data()[b_idx.map(i)]))
                .collect()
        };
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(out_shape, data)?, op, needs))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| -x, Op::Neg(a))
    }

    pub fn scale(&mut self, a: NodeId, c: f32) -> NodeId {
        self.unary(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f32::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f32::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f32::ln, Op::Log(a))
    }

    pub fn clamp(&mut self, a: NodeId, lo: f32, hi: f32) -> NodeId {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp { input: a, lo, hi })
    }

    fn unary(&mut self, a: NodeId, f: impl Fn(f32) -> f32, op: Op) -> NodeId {
        let av = &self.nodes[a.0].value;
        let data = av.data().iter().map(|&x| f(x)).collect();
        let shape = av.shape().to_vec();
        let needs = self.needs(a);
        self.push(
            Tensor {
                shape,
                data,
                grad: None,
                requires_grad: false,
            },
            op,
            needs,
        )
    }

    // ---- matmul / layout ----

    /// Matrix product. Accepts 2D [m,k]x[k,n] or batched 3D [g,m,k]x[g,k,n].
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (ashape, bshape) = (av.shape(), bv.shape());
        let mismatch = || TensorError::DimensionMismatch {
            op: "matmul",
            lhs: ashape.to_vec(),
            rhs: bshape.to_vec(),
        };
        let (g, m, k, n, out_shape) = match (ashape.len(), bshape.len()) {
            (2, 2) => {
                if ashape[1] != bshape[0] {
                    return Err(mismatch());
                }
                (1, ashape[0], ashape[1], bshape[1], vec![ashape[0], bshape[1]])
            }
            (3, 3) => {
                if ashape[0] != bshape[0] || ashape[2] != bshape[1] {
                    return Err(mismatch());
                }
                (
                    ashape[0],
                    ashape[1],
                    ashape[2],
                    bshape[2],
                    vec![ashape[0], ashape[1], bshape[2]],
                )
            }
            _ => return Err(mismatch()),
        };
        let mut data = vec![0.0; g * m * n];
        for bi in 0..g {
            matmul_kernel(
                &av.data()[bi * m * k..(bi + 1) * m * k],
                &bv.data()[bi * k * n..(bi + 1) * k * n],
                m,
                k,
                n,
                &mut data[bi * m * n..(bi + 1) * m * n],
            );
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(out_shape, data)?, Op::Matmul(a, b), needs))
    }

    /// Swap the last two axes of a 2D or 3D tensor.
    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let shape = av.shape().to_vec();
        if shape.len() != 2 && shape.len() != 3 {
            return Err(TensorError::InvalidShape {
                op: "transpose",
                shape,
                reason: "expects 2 or 3 dims".into(),
            });
        }
        let (out_shape, data) = transpose_last2(av.shape(), av.data());
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(out_shape, data)?, Op::Transpose(a), needs))
    }

    pub fn reshape(&mut self, a: NodeId, new_shape: Vec<usize>) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let numel: usize = new_shape.iter().product();
        if numel != av.numel() {
            return Err(TensorError::InvalidShape {
                op: "reshape",
                shape: new_shape,
                reason: format!("element count must stay {}", av.numel()),
            });
        }
        let data = av.data().to_vec();
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(new_shape, data)?, Op::Reshape(a), needs))
    }

    /// Contiguous slice `start..start+len` along `axis`.
    pub fn narrow(&mut self, a: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let shape = av.shape();
        if axis >= shape.len() || start + len > shape[axis] || len == 0 {
            return Err(TensorError::InvalidShape {
                op: "narrow",
                shape: shape.to_vec(),
                reason: format!("slice {start}..{} on axis {axis}", start + len),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            data.extend_from_slice(&av.data()[base..base + len * inner]);
        }
        let needs = self.needs(a);
        Ok(self.push(
            Tensor::new(out_shape, data)?,
            Op::Narrow {
                input: a,
                axis,
                start,
            },
            needs,
        ))
    }

    /// Concatenate along `axis`; all other dims must match.
    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId> {
        if inputs.is_empty() {
            return Err(TensorError::InvalidParameter {
                op: "concat",
                reason: "no inputs".into(),
            });
        }
        let first = self.nodes[inputs[0].0].value.shape().to_vec();
        if axis >= first.len() {
            return Err(TensorError::InvalidShape {
                op: "concat",
                shape: first,
                reason: format!("axis {axis} out of range"),
            });
        }
        let mut axis_total = 0;
        for &id in inputs {
            let s = self.nodes[id.0].value.shape();
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(d, (&a, &b))| d != axis && a != b)
            {
                return Err(TensorError::DimensionMismatch {
                    op: "concat",
                    lhs: first,
                    rhs: s.to_vec(),
                });
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * axis_total * inner);
        for o in 0..outer {
            for &id in inputs {
                let v = &self.nodes[id.0].value;
                let alen = v.shape()[axis];
                let base = o * alen * inner;
                data.extend_from_slice(&v.data()[base..base + alen * inner]);
            }
        }
        let needs = inputs.iter().any(|&id| self.needs(id));
        Ok(self.push(
            Tensor::new(out_shape, data)?,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            needs,
        ))
    }

    // ---- reductions / normalization ----

    /// Exp-normalize along `axis` with max subtraction; rows sum to 1.
    pub fn softmax(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let shape = av.shape().to_vec();
        if axis >= shape.len() {
            return Err(TensorError::InvalidShape {
                op: "softmax",
                shape,
                reason: format!("axis {axis} out of range"),
            });
        }
        let mut data = av.data().to_vec();
        for_each_lane(&shape, axis, |lane| {
            softmax_lane(&mut data, lane);
        });
        let needs = self.needs(a);
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Softmax { input: a, axis },
            needs,
        ))
    }

    /// Softmax of (logits + noise) / tau along the last axis. With zero noise
    /// and tau == 1 this is exactly `softmax(logits)`: the graph still adds
    /// zero and scales by 1, both of which are bitwise identities.
    pub fn gumbel_softmax(&mut self, logits: NodeId, tau: f32, noise: NodeId) -> Result<NodeId> {
        if !(tau > 0.0) {
            return Err(TensorError::InvalidParameter {
                op: "gumbel_softmax",
                reason: format!("temperature must be positive, got {tau}"),
            });
        }
        let last = self.shape(logits).len() - 1;
        let shifted = self.add(logits, noise)?;
        let scaled = self.scale(shifted, 1.0 / tau);
        self.softmax(scaled, last)
    }

    /// Sum over all elements (axis = None, scalar output) or along one axis
    /// (that axis is removed).
    pub fn sum(&mut self, a: NodeId, axis: Option<usize>) -> Result<NodeId> {
        self.reduce(a, axis, "sum", false)
    }

    pub fn mean(&mut self, a: NodeId, axis: Option<usize>) -> Result<NodeId> {
        self.reduce(a, axis, "mean", true)
    }

    fn reduce(
        &mut self,
        a: NodeId,
        axis: Option<usize>,
        name: &'static str,
        is_mean: bool,
    ) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let shape = av.shape().to_vec();
        let (out_shape, data) = match axis {
            None => {
                let mut acc = 0.0f32;
                for &v in av.data() {
                    acc += v;
                }
                if is_mean {
                    acc /= av.numel() as f32;
                }
                (vec![1], vec![acc])
            }
            Some(ax) => {
                if ax >= shape.len() {
                    return Err(TensorError::InvalidShape {
                        op: name,
                        shape,
                        reason: format!("axis {ax} out of range"),
                    });
                }
                let outer: usize = shape[..ax].iter().product();
                let alen = shape[ax];
                let inner: usize = shape[ax + 1..].iter().product();
                let mut out_shape: Vec<usize> = shape
                    .iter()
                    .enumerate()
                    .filter(|&(d, _)| d != ax)
                    .map(|(_, &s)| s)
                    .collect();
                if out_shape.is_empty() {
                    out_shape.push(1);
                }
                let mut data = vec![0.0f32; outer * inner];
                for o in 0..outer {
                    for j in 0..alen {
                        let base = (o * alen + j) * inner;
                        for i in 0..inner {
                            data[o * inner + i] += av.data()[base + i];
                        }
                    }
                }
                if is_mean {
                    let inv = 1.0 / alen as f32;
                    data.iter_mut().for_each(|v| *v *= inv);
                }
                (out_shape, data)
            }
        };
        let needs = self.needs(a);
        let op = if is_mean {
            Op::Mean { input: a, axis }
        } else {
            Op::Sum { input: a, axis }
        };
        Ok(self.push(Tensor::new(out_shape, data)?, op, needs))
    }

    /// Max over the time axis: [b,l,f] -> [b,f] or [l,f] -> [f].
    /// Gradient routes to the (first) maximal position.
    pub fn max_pool_over_time(&mut self, a: NodeId) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let shape = av.shape();
        let (b, l, f) = match shape.len() {
            2 => (1, shape[0], shape[1]),
            3 => (shape[0], shape[1], shape[2]),
            _ => {
                return Err(TensorError::InvalidShape {
                    op: "max_pool_over_time",
                    shape: shape.to_vec(),
                    reason: "expects 2 or 3 dims".into(),
                })
            }
        };
        let out_shape = if shape.len() == 2 {
            vec![f]
        } else {
            vec![b, f]
        };
        let mut data = vec![f32::NEG_INFINITY; b * f];
        let mut argmax = vec![0usize; b * f];
        for bi in 0..b {
            for t in 0..l {
                let row = &av.data()[(bi * l + t) * f..(bi * l + t + 1) * f];
                for (fi, &v) in row.iter().enumerate() {
                    let slot = bi * f + fi;
                    if v > data[slot] {
                        data[slot] = v;
                        argmax[slot] = (bi * l + t) * f + fi;
                    }
                }
            }
        }
        let needs = self.needs(a);
        Ok(self.push(
            Tensor::new(out_shape, data)?,
            Op::MaxPoolTime { input: a, argmax },
            needs,
        ))
    }

    /// Valid (unpadded) 1D convolution over the sequence axis.
    /// input [l,e] or [b,l,e]; kernel [k,e,f]; bias [f]; output [.., l-k+1, f].
    pub fn conv1d(&mut self, input: NodeId, kernel: NodeId, bias: NodeId) -> Result<NodeId> {
        let iv = &self.nodes[input.0].value;
        let kv = &self.nodes[kernel.0].value;
        let bv = &self.nodes[bias.0].value;
        let ishape = iv.shape();
        let (b, l, e) = match ishape.len() {
            2 => (1, ishape[0], ishape[1]),
            3 => (ishape[0], ishape[1], ishape[2]),
            _ => {
                return Err(TensorError::InvalidShape {
                    op: "conv1d",
                    shape: ishape.to_vec(),
                    reason: "input expects 2 or 3 dims".into(),
                })
            }
        };
        if kv.shape().len() != 3 || kv.shape()[1] != e {
            return Err(TensorError::DimensionMismatch {
                op: "conv1d",
                lhs: ishape.to_vec(),
                rhs: kv.shape().to_vec(),
            });
        }
        let (k, f) = (kv.shape()[0], kv.shape()[2]);
        if bv.shape() != [f] {
            return Err(TensorError::DimensionMismatch {
                op: "conv1d",
                lhs: kv.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        if l < k {
            return Err(TensorError::InvalidShape {
                op: "conv1d",
                shape: ishape.to_vec(),
                reason: format!("sequence length {l} shorter than kernel width {k}"),
            });
        }
        let lo = l - k + 1;
        let out_shape = if ishape.len() == 2 {
            vec![lo, f]
        } else {
            vec![b, lo, f]
        };
        let mut data = vec![0.0f32; b * lo * f];
        for bi in 0..b {
            for t in 0..lo {
                let out_row = &mut data[(bi * lo + t) * f..(bi * lo + t + 1) * f];
                out_row.copy_from_slice(bv.data());
                for dt in 0..k {
                    let in_row = &iv.data()[(bi * l + t + dt) * e..(bi * l + t + dt + 1) * e];
                    for (ei, &x) in in_row.iter().enumerate() {
                        if x != 0.0 {
                            let k_row = &kv.data()[(dt * e + ei) * f..(dt * e + ei + 1) * f];
                            for (o, &w) in out_row.iter_mut().zip(k_row) {
                                *o += x * w;
                            }
                        }
                    }
                }
            }
        }
        let needs = self.needs(input) || self.needs(kernel) || self.needs(bias);
        Ok(self.push(
            Tensor::new(out_shape, data)?,
            Op::Conv1d {
                input,
                kernel,
                bias,
            },
            needs,
        ))
    }

    /// Exact row selection from an embedding table: out[i,:] = table[ids[i],:].
    /// For a distribution over the vocabulary use `matmul(dist, table)`, which
    /// reduces to the same rows when the distribution is one-hot.
    pub fn embedding_ids(&mut self, table: NodeId, ids: &[u32]) -> Result<NodeId> {
        let tv = &self.nodes[table.0].value;
        if tv.shape().len() != 2 {
            return Err(TensorError::InvalidShape {
                op: "embedding_ids",
                shape: tv.shape().to_vec(),
                reason: "table must be 2D".into(),
            });
        }
        let (v, e) = (tv.shape()[0], tv.shape()[1]);
        let mut data = Vec::with_capacity(ids.len() * e);
        for &id in ids {
            let id = id as usize;
            if id >= v {
                return Err(TensorError::InvalidParameter {
                    op: "embedding_ids",
                    reason: format!("id {id} out of vocabulary (size {v})"),
                });
            }
            data.extend_from_slice(&tv.data()[id * e..(id + 1) * e]);
        }
        let needs = self.needs(table);
        Ok(self.push(
            Tensor::new(vec![ids.len(), e], data)?,
            Op::EmbeddingIds {
                table,
                ids: ids.to_vec(),
            },
            needs,
        ))
    }

    /// Normalize the last axis to zero mean and unit variance (eps inside the
    /// square root), then scale by `gamma` and shift by `beta`.
    pub fn layer_norm(
        &mut self,
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f32,
    ) -> Result<NodeId> {
        let iv = &self.nodes[input.0].value;
        let shape = iv.shape().to_vec();
        let d = *shape.last().ok_or_else(|| TensorError::InvalidShape {
            op: "layer_norm",
            shape: shape.clone(),
            reason: "empty shape".into(),
        })?;
        let (gv, bv) = (&self.nodes[gamma.0].value, &self.nodes[beta.0].value);
        if gv.shape() != [d] || bv.shape() != [d] {
            return Err(TensorError::DimensionMismatch {
                op: "layer_norm",
                lhs: shape,
                rhs: gv.shape().to_vec(),
            });
        }
        let rows = iv.numel() / d;
        let mut data = vec![0.0f32; iv.numel()];
        for r in 0..rows {
            let x = &iv.data()[r * d..(r + 1) * d];
            let mean = x.iter().sum::<f32>() / d as f32;
            let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
            let inv_std = 1.0 / (var + eps).sqrt();
            let out = &mut data[r * d..(r + 1) * d];
            for i in 0..d {
                out[i] = (x[i] - mean) * inv_std * gv.data()[i] + bv.data()[i];
            }
        }
        let needs = self.needs(input) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            Tensor::new(iv.shape().to_vec(), data)?,
            Op::LayerNorm {
                input,
                gamma,
                beta,
                eps,
            },
            needs,
        ))
    }

    /// Mean of -log softmax(logits)[target] over rows with mask > 0.
    /// Numerically stable via log-sum-exp.
    pub fn cross_entropy_rows(
        &mut self,
        logits: NodeId,
        targets: &[u32],
        mask: &[f32],
    ) -> Result<NodeId> {
        let lv = &self.nodes[logits.0].value;
        if lv.shape().len() != 2 {
            return Err(TensorError::InvalidShape {
                op: "cross_entropy_rows",
                shape: lv.shape().to_vec(),
                reason: "logits must be 2D".into(),
            });
        }
        let (rows, classes) = (lv.shape()[0], lv.shape()[1]);
        if targets.len() != rows || mask.len() != rows {
            return Err(TensorError::InvalidParameter {
                op: "cross_entropy_rows",
                reason: format!(
                    "targets/mask length {}/{} must equal row count {rows}",
                    targets.len(),
                    mask.len()
                ),
            });
        }
        let denom: f32 = mask.iter().sum();
        if denom <= 0.0 {
            return Err(TensorError::Contract {
                op: "cross_entropy_rows",
                reason: "mask selects no rows".into(),
            });
        }
        let mut total = 0.0f32;
        for r in 0..rows {
            if mask[r] <= 0.0 {
                continue;
            }
            let row = &lv.data()[r * classes..(r + 1) * classes];
            let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f32>().ln();
            total += mask[r] * (lse - row[targets[r] as usize]);
        }
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::new(vec![1], vec![total / denom])?,
            Op::CrossEntropyRows {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
            },
            needs,
        ))
    }

    /// [b,l,d] -> [b*heads, l, d/heads], grouping channels by head.
    pub fn split_heads(&mut self, a: NodeId, heads: usize) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let shape = av.shape();
        if shape.len() != 3 || !shape[2].is_multiple_of(heads) {
            return Err(TensorError::InvalidShape {
                op: "split_heads",
                shape: shape.to_vec(),
                reason: format!("needs 3D with last dim divisible by {heads}"),
            });
        }
        let (b, l, d) = (shape[0], shape[1], shape[2]);
        let dh = d / heads;
        let mut data = vec![0.0f32; av.numel()];
        for bi in 0..b {
            for li in 0..l {
                for h in 0..heads {
                    let src = (bi * l + li) * d + h * dh;
                    let dst = ((bi * heads + h) * l + li) * dh;
                    data[dst..dst + dh].copy_from_slice(&av.data()[src..src + dh]);
                }
            }
        }
        let needs = self.needs(a);
        Ok(self.push(
            Tensor::new(vec![b * heads, l, dh], data)?,
            Op::SplitHeads { input: a, heads },
            needs,
        ))
    }

    /// Inverse of `split_heads`: [b*heads, l, dh] -> [b, l, heads*dh].
    pub fn merge_heads(&mut self, a: NodeId, heads: usize) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let shape = av.shape();
        if shape.len() != 3 || !shape[0].is_multiple_of(heads) {
            return Err(TensorError::InvalidShape {
                op: "merge_heads",
                shape: shape.to_vec(),
                reason: format!("needs 3D with leading dim divisible by {heads}"),
            });
        }
        let (bh, l, dh) = (shape[0], shape[1], shape[2]);
        let b = bh / heads;
        let d = heads * dh;
        let mut data = vec![0.0f32; av.numel()];
        for bi in 0..b {
            for li in 0..l {
                for h in 0..heads {
                    let src = ((bi * heads + h) * l + li) * dh;
                    let dst = (bi * l + li) * d + h * dh;
                    data[dst..dst + dh].copy_from_slice(&av.data()[src..src + dh]);
                }
            }
        }
        let needs = self.needs(a);
        Ok(self.push(
            Tensor::new(vec![b, l, d], data)?,
            Op::MergeHeads { input: a, heads },
            needs,
        ))
    }

    // ---- backward ----

    /// Reverse sweep from a scalar `loss`. Gradients of `requires_grad`
    /// leaves accumulate into their `grad` slots; calling backward again
    /// without zeroing adds on top.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(TensorError::Contract {
                op: "backward",
                reason: format!(
                    "loss must be scalar, got shape {:?}",
                    self.nodes[loss.0].value.shape()
                ),
            });
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..n).rev() {
            if grads[i].is_none() || !self.nodes[i].needs_grad {
                continue;
            }
            let (gpre, gcur) = grads.split_at_mut(i);
            let gout: &[f32] = gcur[0].as_deref().unwrap();
            self.backprop_node(i, gout, gpre);
        }

        for (i, g) in grads.into_iter().enumerate() {
            if let Some(g) = g {
                if matches!(self.nodes[i].op, Op::Leaf) && self.nodes[i].value.requires_grad {
                    self.nodes[i].value.accumulate_grad(&g);
                }
            }
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, gout: &[f32], gpre: &mut [Option<Vec<f32>>]) {
        let out = &self.nodes[i].value;
        let val = |id: NodeId| &self.nodes[id.0].value;
        let needs = |id: NodeId| self.nodes[id.0].needs_grad;
        // Accumulate `delta` into the input's grad buffer.
        macro_rules! acc {
            ($id:expr, $delta:expr) => {{
                let id: NodeId = $id;
                let buf = gpre[id.0]
                    .get_or_insert_with(|| vec![0.0; self.nodes[id.0].value.numel()]);
                for (g, d) in buf.iter_mut().zip($delta) {
                    *g += d;
                }
            }};
        }
        // Broadcast-aware accumulate: reduce `gout`-shaped values to the
        // input's shape by summing over broadcast dimensions.
        let acc_bcast = |gpre: &mut [Option<Vec<f32>>], id: NodeId, full: &[f32]| {
            let ishape = self.nodes[id.0].value.shape();
            let buf = gpre[id.0].get_or_insert_with(|| vec![0.0; self.nodes[id.0].value.numel()]);
            if ishape == out.shape() {
                for (g, d) in buf.iter_mut().zip(full) {
                    *g += d;
                }
            } else {
                let idx = BroadcastIndex::new(ishape, out.shape());
                for (flat, &d) in full.iter().enumerate() {
                    buf[idx.map(flat)] += d;
                }
            }
        };

        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if needs(*a) {
                    acc_bcast(gpre, *a, gout);
                }
                if needs(*b) {
                    acc_bcast(gpre, *b, gout);
                }
            }
            Op::Sub(a, b) => {
                if needs(*a) {
                    acc_bcast(gpre, *a, gout);
                }
                if needs(*b) {
                    let neg: Vec<f32> = gout.iter().map(|&g| -g).collect();
                    acc_bcast(gpre, *b, &neg);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if needs(*a) {
                    let d = broadcast_apply(bv, out.shape(), gout, |y, g| g * y);
                    acc_bcast(gpre, *a, &d);
                }
                if needs(*b) {
                    let d = broadcast_apply(av, out.shape(), gout, |x, g| g * x);
                    acc_bcast(gpre, *b, &d);
                }
            }
            Op::Div(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if needs(*a) {
                    let d = broadcast_apply(bv, out.shape(), gout, |y, g| g / y);
                    acc_bcast(gpre, *a, &d);
                }
                if needs(*b) {
                    let a_idx = BroadcastIndex::new(av.shape(), out.shape());
                    let b_idx = BroadcastIndex::new(bv.shape(), out.shape());
                    let d: Vec<f32> = gout
                        .iter()
                        .enumerate()
                        .map(|(flat, &g)| {
                            let x = av.data()[a_idx.map(flat)];
                            let y = bv.data()[b_idx.map(flat)];
                            -g * x / (y * y)
                        })
                        .collect();
                    acc_bcast(gpre, *b, &d);
                }
            }
            Op::Neg(a) => {
                if needs(*a) {
                    acc!(*a, gout.iter().map(|&g| -g));
                }
            }
            Op::Scale(a, c) => {
                if needs(*a) {
                    let c = *c;
                    acc!(*a, gout.iter().map(move |&g| g * c));
                }
            }
            Op::Tanh(a) => {
                if needs(*a) {
                    acc!(
                        *a,
                        gout.iter().zip(out.data()).map(|(&g, &y)| g * (1.0 - y * y))
                    );
                }
            }
            Op::Sigmoid(a) => {
                if needs(*a) {
                    acc!(
                        *a,
                        gout.iter()
                            .zip(out.data())
                            .map(|(&g, &y)| g * y * (1.0 - y))
                    );
                }
            }
            Op::Relu(a) => {
                if needs(*a) {
                    acc!(
                        *a,
                        gout.iter()
                            .zip(val(*a).data())
                            .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
                    );
                }
            }
            Op::Exp(a) => {
                if needs(*a) {
                    acc!(*a, gout.iter().zip(out.data()).map(|(&g, &y)| g * y));
                }
            }
            Op::Log(a) => {
                if needs(*a) {
                    acc!(
                        *a,
                        gout.iter().zip(val(*a).data()).map(|(&g, &x)| g / x)
                    );
                }
            }
            Op::Clamp { input, lo, hi } => {
                if needs(*input) {
                    let (lo, hi) = (*lo, *hi);
                    acc!(
                        *input,
                        gout.iter()
                            .zip(val(*input).data())
                            .map(move |(&g, &x)| if x > lo && x < hi { g } else { 0.0 })
                    );
                }
            }
            Op::Matmul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (ashape, bshape) = (av.shape(), bv.shape());
                let (g, m, k, n) = if ashape.len() == 2 {
                    (1, ashape[0], ashape[1], bshape[1])
                } else {
                    (ashape[0], ashape[1], ashape[2], bshape[2])
                };
                for bi in 0..g {
                    let a_blk = &av.data()[bi * m * k..(bi + 1) * m * k];
                    let b_blk = &bv.data()[bi * k * n..(bi + 1) * k * n];
                    let g_blk = &gout[bi * m * n..(bi + 1) * m * n];
                    if needs(*a) {
                        let buf = gpre[a.0]
                            .get_or_insert_with(|| vec![0.0; self.nodes[a.0].value.numel()]);
                        matmul_grad_lhs(g_blk, b_blk, m, k, n, &mut buf[bi * m * k..(bi + 1) * m * k]);
                    }
                    if needs(*b) {
                        let buf = gpre[b.0]
                            .get_or_insert_with(|| vec![0.0; self.nodes[b.0].value.numel()]);
                        matmul_grad_rhs(a_blk, g_blk, m, k, n, &mut buf[bi * k * n..(bi + 1) * k * n]);
                    }
                }
            }
            Op::Transpose(a) => {
                if needs(*a) {
                    let (_, back) = transpose_last2(out.shape(), gout);
                    acc!(*a, back.iter().copied());
                }
            }
            Op::Reshape(a) => {
                if needs(*a) {
                    acc!(*a, gout.iter().copied());
                }
            }
            Op::Narrow { input, axis, start } => {
                if needs(*input) {
                    let ishape = val(*input).shape();
                    let outer: usize = ishape[..*axis].iter().product();
                    let inner: usize = ishape[*axis + 1..].iter().product();
                    let len = out.shape()[*axis];
                    let buf = gpre[input.0]
                        .get_or_insert_with(|| vec![0.0; self.nodes[input.0].value.numel()]);
                    for o in 0..outer {
                        let dst = (o * ishape[*axis] + start) * inner;
                        let src = o * len * inner;
                        for j in 0..len * inner {
                            buf[dst + j] += gout[src + j];
                        }
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                let outer: usize = out.shape()[..*axis].iter().product();
                let inner: usize = out.shape()[*axis + 1..].iter().product();
                let total = out.shape()[*axis];
                let mut offset = 0;
                for &id in inputs {
                    let alen = val(id).shape()[*axis];
                    if needs(id) {
                        let buf = gpre[id.0]
                            .get_or_insert_with(|| vec![0.0; self.nodes[id.0].value.numel()]);
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            let dst = o * alen * inner;
                            for j in 0..alen * inner {
                                buf[dst + j] += gout[src + j];
                            }
                        }
                    }
                    offset += alen;
                }
            }
            Op::Softmax { input, axis } => {
                if needs(*input) {
                    let mut delta = vec![0.0f32; out.numel()];
                    let shape = out.shape().to_vec();
                    let y = out.data();
                    for_each_lane(&shape, *axis, |lane| {
                        let dot: f32 = lane.iter().map(|&idx| gout[idx] * y[idx]).sum();
                        for &idx in lane {
                            delta[idx] = y[idx] * (gout[idx] - dot);
                        }
                    });
                    acc!(*input, delta.iter().copied());
                }
            }
            Op::Sum { input, axis } => {
                if needs(*input) {
                    let ishape = val(*input).shape();
                    match axis {
                        None => {
                            let g = gout[0];
                            acc!(*input, std::iter::repeat_n(g, val(*input).numel()));
                        }
                        Some(ax) => {
                            let buf = gpre[input.0].get_or_insert_with(|| {
                                vec![0.0; self.nodes[input.0].value.numel()]
                            });
                            spread_axis(ishape, *ax, gout, 1.0, buf);
                        }
                    }
                }
            }
            Op::Mean { input, axis } => {
                if needs(*input) {
                    let ishape = val(*input).shape();
                    match axis {
                        None => {
                            let g = gout[0] / val(*input).numel() as f32;
                            acc!(*input, std::iter::repeat_n(g, val(*input).numel()));
                        }
                        Some(ax) => {
                            let inv = 1.0 / ishape[*ax] as f32;
                            let buf = gpre[input.0].get_or_insert_with(|| {
                                vec![0.0; self.nodes[input.0].value.numel()]
                            });
                            spread_axis(ishape, *ax, gout, inv, buf);
                        }
                    }
                }
            }
            Op::MaxPoolTime { input, argmax } => {
                if needs(*input) {
                    let buf = gpre[input.0]
                        .get_or_insert_with(|| vec![0.0; self.nodes[input.0].value.numel()]);
                    for (slot, &src) in argmax.iter().enumerate() {
                        buf[src] += gout[slot];
                    }
                }
            }
            Op::Conv1d {
                input,
                kernel,
                bias,
            } => {
                let iv = val(*input);
                let kv = val(*kernel);
                let ishape = iv.shape();
                let (b, l, e) = if ishape.len() == 2 {
                    (1, ishape[0], ishape[1])
                } else {
                    (ishape[0], ishape[1], ishape[2])
                };
                let (k, f) = (kv.shape()[0], kv.shape()[2]);
                let lo = l - k + 1;
                if needs(*bias) {
                    let buf = gpre[bias.0]
                        .get_or_insert_with(|| vec![0.0; self.nodes[bias.0].value.numel()]);
                    for row in 0..b * lo {
                        for fi in 0..f {
                            buf[fi] += gout[row * f + fi];
                        }
                    }
                }
                if needs(*kernel) {
                    let buf = gpre[kernel.0]
                        .get_or_insert_with(|| vec![0.0; self.nodes[kernel.0].value.numel()]);
                    for bi in 0..b {
                        for t in 0..lo {
                            let g_row = &gout[(bi * lo + t) * f..(bi * lo + t + 1) * f];
                            for dt in 0..k {
                                let in_row =
                                    &iv.data()[(bi * l + t + dt) * e..(bi * l + t + dt + 1) * e];
                                for (ei, &x) in in_row.iter().enumerate() {
                                    if x != 0.0 {
                                        let krow = &mut buf[(dt * e + ei) * f..(dt * e + ei + 1) * f];
                                        for (kw, &g) in krow.iter_mut().zip(g_row) {
                                            *kw += x * g;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                if needs(*input) {
                    let buf = gpre[input.0]
                        .get_or_insert_with(|| vec![0.0; self.nodes[input.0].value.numel()]);
                    for bi in 0..b {
                        for t in 0..lo {
                            let g_row = &gout[(bi * lo + t) * f..(bi * lo + t + 1) * f];
                            for dt in 0..k {
                                for ei in 0..e {
                                    let k_row = &kv.data()[(dt * e + ei) * f..(dt * e + ei + 1) * f];
                                    let mut acc = 0.0f32;
                                    for (g, w) in g_row.iter().zip(k_row) {
                                        acc += g * w;
                                    }
                                    buf[(bi * l + t + dt) * e + ei] += acc;
                                }
                            }
                        }
                    }
                }
            }
            Op::EmbeddingIds { table, ids } => {
                if needs(*table) {
                    let e = val(*table).shape()[1];
                    let buf = gpre[table.0]
                        .get_or_insert_with(|| vec![0.0; self.nodes[table.0].value.numel()]);
                    for (row, &id) in ids.iter().enumerate() {
                        let dst = id as usize * e;
                        let src = row * e;
                        for j in 0..e {
                            buf[dst + j] += gout[src + j];
                        }
                    }
                }
            }
            Op::LayerNorm {
                input,
                gamma,
                beta,
                eps,
            } => {
                let iv = val(*input);
                let gv = val(*gamma);
                let d = *iv.shape().last().unwrap();
                let rows = iv.numel() / d;
                for r in 0..rows {
                    let x = &iv.data()[r * d..(r + 1) * d];
                    let g_row = &gout[r * d..(r + 1) * d];
                    let mean = x.iter().sum::<f32>() / d as f32;
                    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
                    let inv_std = 1.0 / (var + eps).sqrt();
                    if needs(*gamma) {
                        let buf = gpre[gamma.0]
                            .get_or_insert_with(|| vec![0.0; self.nodes[gamma.0].value.numel()]);
                        for i in 0..d {
                            buf[i] += g_row[i] * (x[i] - mean) * inv_std;
                        }
                    }
                    if needs(*beta) {
                        let buf = gpre[beta.0]
                            .get_or_insert_with(|| vec![0.0; self.nodes[beta.0].value.numel()]);
                        for i in 0..d {
                            buf[i] += g_row[i];
                        }
                    }
                    if needs(*input) {
                        // d/dx of (x - mu)/sqrt(var + eps) * gamma + beta.
                        let dxhat: Vec<f32> =
                            (0..d).map(|i| g_row[i] * gv.data()[i]).collect();
                        let sum_dxhat: f32 = dxhat.iter().sum();
                        let sum_dxhat_xhat: f32 = (0..d)
                            .map(|i| dxhat[i] * (x[i] - mean) * inv_std)
                            .sum();
                        let buf = gpre[input.0]
                            .get_or_insert_with(|| vec![0.0; self.nodes[input.0].value.numel()]);
                        for i in 0..d {
                            let xhat = (x[i] - mean) * inv_std;
                            buf[r * d + i] += inv_std / d as f32
                                * (d as f32 * dxhat[i] - sum_dxhat - xhat * sum_dxhat_xhat);
                        }
                    }
                }
            }
            Op::CrossEntropyRows {
                logits,
                targets,
                mask,
            } => {
                if needs(*logits) {
                    let lv = val(*logits);
                    let classes = lv.shape()[1];
                    let denom: f32 = mask.iter().sum();
                    let scale = gout[0] / denom;
                    let buf = gpre[logits.0]
                        .get_or_insert_with(|| vec![0.0; self.nodes[logits.0].value.numel()]);
                    for (r, (&t, &m)) in targets.iter().zip(mask).enumerate() {
                        if m <= 0.0 {
                            continue;
                        }
                        let row = &lv.data()[r * classes..(r + 1) * classes];
                        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                        let sum: f32 = row.iter().map(|&x| (x - max).exp()).sum();
                        for c in 0..classes {
                            let p = (row[c] - max).exp() / sum;
                            let onehot = if c == t as usize { 1.0 } else { 0.0 };
                            buf[r * classes + c] += scale * m * (p - onehot);
                        }
                    }
                }
            }
            Op::SplitHeads { input, heads } => {
                if needs(*input) {
                    let (bh, l, dh) = (out.shape()[0], out.shape()[1], out.shape()[2]);
                    let b = bh / heads;
                    let d = heads * dh;
                    let buf = gpre[input.0]
                        .get_or_insert_with(|| vec![0.0; self.nodes[input.0].value.numel()]);
                    for bi in 0..b {
                        for li in 0..l {
                            for h in 0..*heads {
                                let src = ((bi * heads + h) * l + li) * dh;
                                let dst = (bi * l + li) * d + h * dh;
                                for j in 0..dh {
                                    buf[dst + j] += gout[src + j];
                                }
                            }
                        }
                    }
                }
            }
            Op::MergeHeads { input, heads } => {
                if needs(*input) {
                    let (b, l, d) = (out.shape()[0], out.shape()[1], out.shape()[2]);
                    let dh = d / heads;
                    let buf = gpre[input.0]
                        .get_or_insert_with(|| vec![0.0; self.nodes[input.0].value.numel()]);
                    for bi in 0..b {
                        for li in 0..l {
                            for h in 0..*heads {
                                let src = (bi * l + li) * d + h * dh;
                                let dst = ((bi * heads + h) * l + li) * dh;
                                for j in 0..dh {
                                    buf[dst + j] += gout[src + j];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

// ---- kernels and index helpers ----

/// out[m,n] += a[m,k] * b[k,n]; `out` must be pre-zeroed by the caller.
/// Skips zero multipliers so one-hot rows cost almost nothing.
fn matmul_kernel(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let o_row = &mut out[i * n..(i + 1) * n];
        for (p, &aip) in a_row.iter().enumerate() {
            if aip != 0.0 {
                let b_row = &b[p * n..(p + 1) * n];
                for (o, &bv) in o_row.iter_mut().zip(b_row) {
                    *o += aip * bv;
                }
            }
        }
    }
}

/// da[m,k] += gout[m,n] * b^T; row-dot formulation keeps reads contiguous.
fn matmul_grad_lhs(gout: &[f32], b: &[f32], m: usize, k: usize, n: usize, da: &mut [f32]) {
    for i in 0..m {
        let g_row = &gout[i * n..(i + 1) * n];
        let da_row = &mut da[i * k..(i + 1) * k];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let mut acc = 0.0f32;
            for (g, bv) in g_row.iter().zip(b_row) {
                acc += g * bv;
            }
            da_row[p] += acc;
        }
    }
}

/// db[k,n] += a^T * gout[m,n]; saxpy over gout rows.
fn matmul_grad_rhs(a: &[f32], gout: &[f32], m: usize, k: usize, n: usize, db: &mut [f32]) {
    for i in 0..m {
        let g_row = &gout[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &aip) in a_row.iter().enumerate() {
            if aip != 0.0 {
                let db_row = &mut db[p * n..(p + 1) * n];
                for (d, &g) in db_row.iter_mut().zip(g_row) {
                    *d += aip * g;
                }
            }
        }
    }
}

fn transpose_last2(shape: &[usize], data: &[f32]) -> (Vec<usize>, Vec<f32>) {
    let (g, r, c) = if shape.len() == 2 {
        (1, shape[0], shape[1])
    } else {
        (shape[0], shape[1], shape[2])
    };
    let mut out_shape = shape.to_vec();
    let nd = out_shape.len();
    out_shape.swap(nd - 2, nd - 1);
    let mut out = vec![0.0f32; data.len()];
    for bi in 0..g {
        let src = &data[bi * r * c..(bi + 1) * r * c];
        let dst = &mut out[bi * r * c..(bi + 1) * r * c];
        for i in 0..r {
            for j in 0..c {
                dst[j * r + i] = src[i * c + j];
            }
        }
    }
    (out_shape, out)
}

/// In-place stable softmax over the indices in `lane`.
fn softmax_lane(data: &mut [f32], lane: &[usize]) {
    let max = lane
        .iter()
        .map(|&i| data[i])
        .fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for &i in lane {
        let e = (data[i] - max).exp();
        data[i] = e;
        sum += e;
    }
    let inv = 1.0 / sum;
    for &i in lane {
        data[i] *= inv;
    }
}

/// Call `f` with the flat indices of each lane along `axis`.
fn for_each_lane(shape: &[usize], axis: usize, mut f: impl FnMut(&[usize])) {
    let outer: usize = shape[..axis].iter().product();
    let alen = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut lane = vec![0usize; alen];
    for o in 0..outer {
        for i in 0..inner {
            for (j, slot) in lane.iter_mut().enumerate() {
                *slot = (o * alen + j) * inner + i;
            }
            f(&lane);
        }
    }
}

/// buf[input-shape] += scale * gout broadcast back along removed `axis`.
fn spread_axis(ishape: &[usize], axis: usize, gout: &[f32], scale: f32, buf: &mut [f32]) {
    let outer: usize = ishape[..axis].iter().product();
    let alen = ishape[axis];
    let inner: usize = ishape[axis + 1..].iter().product();
    for o in 0..outer {
        for j in 0..alen {
            let base = (o * alen + j) * inner;
            for i in 0..inner {
                buf[base + i] += scale * gout[o * inner + i];
            }
        }
    }
}

/// numpy-style broadcast result shape, or None if incompatible.
fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let nd = a.len().max(b.len());
    let mut out = vec![0usize; nd];
    for d in 0..nd {
        let da = if d < nd - a.len() { 1 } else { a[d - (nd - a.len())] };
        let db = if d < nd - b.len() { 1 } else { b[d - (nd - b.len())] };
        if da != db && da != 1 && db != 1 {
            return None;
        }
        out[d] = da.max(db);
    }
    Some(out)
}

/// Maps flat indices in the broadcast output back to flat indices in a
/// (possibly smaller) operand.
struct BroadcastIndex {
    out_strides: Vec<usize>,
    in_strides: Vec<usize>, // 0 where the operand is broadcast
}

impl BroadcastIndex {
    fn new(in_shape: &[usize], out_shape: &[usize]) -> Self {
        let nd = out_shape.len();
        let mut out_strides = vec![1usize; nd];
        for d in (0..nd.saturating_sub(1)).rev() {
            out_strides[d] = out_strides[d + 1] * out_shape[d + 1];
        }
        let offset = nd - in_shape.len();
        let mut real = vec![1usize; nd];
        real[offset..].copy_from_slice(in_shape);
        let mut in_strides = vec![0usize; nd];
        let mut stride = 1;
        for d in (0..nd).rev() {
            if real[d] != 1 {
                in_strides[d] = stride;
            }
            stride *= real[d];
        }
        BroadcastIndex {
            out_strides,
            in_strides,
        }
    }

    #[inline]
    fn map(&self, flat: usize) -> usize {
        let mut rem = flat;
        let mut idx = 0;
        for (os, is) in self.out_strides.iter().zip(&self.in_strides) {
            let c = rem / os;
            rem %= os;
            idx += c * is;
        }
        idx
    }
}

/// Apply `f(operand_value, gout_value)` elementwise in the output frame,
/// broadcasting the operand as needed.
fn broadcast_apply(
    operand: &Tensor,
    out_shape: &[usize],
    gout: &[f32],
    f: impl Fn(f32, f32) -> f32,
) -> Vec<f32> {
    if operand.shape() == out_shape {
        operand
            .data()
            .iter()
            .zip(gout)
            .map(|(&v, &g)| f(v, g))
            .collect()
    } else {
        let idx = BroadcastIndex::new(operand.shape(), out_shape);
        gout.iter()
            .enumerate()
            .map(|(flat, &g)| f(operand.data()[idx.map(flat)], g))
            .collect()
    }
}
