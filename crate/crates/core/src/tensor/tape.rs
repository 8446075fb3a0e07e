//! Reverse-mode differentiation tape.
//!
//! Operations append nodes in execution order, so the node list is
//! topologically sorted by construction. [`Tape::backward`] walks it once in
//! reverse and then clears the tape; handles from a cleared tape are stale
//! and rejected.

use super::kernels;
use super::Tensor;
use crate::error::{Error, Result};
use crate::par;
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    idx: usize,
    generation: u64,
}

/// Sign pattern of the 4x4 real form of a left quaternion multiplication:
/// entry `(row, col)` selects the weight component and whether it enters
/// negated. Components are ordered (r, x, y, z).
pub(crate) const HAMILTON_PATTERN: [[(usize, bool); 4]; 4] = [
    [(0, false), (1, true), (2, true), (3, true)],
    [(1, false), (0, false), (3, true), (2, false)],
    [(2, false), (3, false), (0, false), (1, true)],
    [(3, false), (2, true), (1, false), (0, false)],
];

enum Op<T> {
    Leaf,
    MatMul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    /// `a * b^T` with `b` stored as `[n, k]`.
    MatMulNt {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Conv3x3 {
        x: usize,
        k: usize,
        dims: [usize; 4],
        filters: usize,
    },
    MaxPool2 {
        x: usize,
        argmax: Vec<usize>,
    },
    Relu {
        x: usize,
    },
    BiasAdd {
        x: usize,
        b: usize,
        channels: usize,
        inner: usize,
    },
    Reshape {
        x: usize,
    },
    SoftmaxCe {
        logits: usize,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    Sum {
        x: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Scale {
        x: usize,
        factor: T,
    },
    HamiltonBlock {
        parts: [usize; 4],
        out_q: usize,
        in_q: usize,
        taps: usize,
    },
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Records a forward pass for one training context.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    generation: u64,
    grad_enabled: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by one backward pass, keyed by the forward handles.
pub struct Gradients<T> {
    generation: u64,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        if var.generation != self.generation {
            return None;
        }
        self.grads.get(var.idx).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        if var.generation != self.generation {
            return None;
        }
        self.grads.get_mut(var.idx).and_then(|g| g.take())
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            generation: 0,
            grad_enabled: true,
        }
    }

    /// A tape that never tracks gradients (evaluation only).
    pub fn inference() -> Self {
        Tape {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node and invalidates outstanding handles.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.generation += 1;
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad && self.grad_enabled, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, var: Var) -> Result<&Tensor<T>> {
        self.check(var)?;
        Ok(&self.nodes[var.idx].value)
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var {
            idx: self.nodes.len() - 1,
            generation: self.generation,
        }
    }

    fn check(&self, var: Var) -> Result<()> {
        if var.generation != self.generation || var.idx >= self.nodes.len() {
            return Err(Error::State(
                "variable handle belongs to a cleared or different tape".into(),
            ));
        }
        Ok(())
    }

    fn needs(&self, vars: &[Var]) -> bool {
        self.grad_enabled && vars.iter().any(|v| self.nodes[v.idx].requires_grad)
    }

    fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.idx].value.shape()
    }

    /// Matrix product of `a: [m, k]` and `b: [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(format!("matmul of {:?} and {:?}", sa, sb)));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        kernels::gemm(
            m,
            k,
            n,
            T::one(),
            self.nodes[a.idx].value.data(),
            false,
            self.nodes[b.idx].value.data(),
            false,
            T::zero(),
            &mut out,
        );
        let rg = self.needs(&[a, b]);
        Ok(self.push(
            Tensor::new(vec![m, n], out)?,
            rg,
            Op::MatMul {
                a: a.idx,
                b: b.idx,
                m,
                k,
                n,
            },
        ))
    }

    /// `x * w^T` for `x: [m, k]` and `w: [n, k]` (a dense layer's weight).
    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var> {
        self.check(x)?;
        self.check(w)?;
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[1] {
            return Err(Error::dim(format!(
                "linear input {:?} against weight {:?}",
                sx, sw
            )));
        }
        let (m, k, n) = (sx[0], sx[1], sw[0]);
        let mut out = vec![T::zero(); m * n];
        kernels::gemm(
            m,
            k,
            n,
            T::one(),
            self.nodes[x.idx].value.data(),
            false,
            self.nodes[w.idx].value.data(),
            true,
            T::zero(),
            &mut out,
        );
        let rg = self.needs(&[x, w]);
        Ok(self.push(
            Tensor::new(vec![m, n], out)?,
            rg,
            Op::MatMulNt {
                a: x.idx,
                b: w.idx,
                m,
                k,
                n,
            },
        ))
    }

    /// 3x3 cross-correlation, stride 1, zero padding 1.
    pub fn conv2d(&mut self, x: Var, k: Var) -> Result<Var> {
        self.check(x)?;
        self.check(k)?;
        let (sx, sk) = (self.shape(x).to_vec(), self.shape(k).to_vec());
        if sx.len() != 4 || sk.len() != 4 {
            return Err(Error::dim(format!(
                "conv2d expects 4-d input and kernel, got {:?} and {:?}",
                sx, sk
            )));
        }
        if sk[2] != 3 || sk[3] != 3 {
            return Err(Error::dim(format!("conv2d kernel {:?} is not 3x3", sk)));
        }
        if sx[1] != sk[1] {
            return Err(Error::dim(format!(
                "conv2d channel mismatch: input {:?}, kernel {:?}",
                sx, sk
            )));
        }
        let dims = [sx[0], sx[1], sx[2], sx[3]];
        let filters = sk[0];
        let rg = self.needs(&[x, k]);
        let out = kernels::conv3x3_forward(
            self.nodes[x.idx].value.data(),
            dims,
            self.nodes[k.idx].value.data(),
            filters,
        );
        Ok(self.push(
            Tensor::new(vec![dims[0], filters, dims[2], dims[3]], out)?,
            rg,
            Op::Conv3x3 {
                x: x.idx,
                k: k.idx,
                dims,
                filters,
            },
        ))
    }

    /// 2x2 max pooling with stride 2.
    pub fn maxpool2d(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(Error::dim(format!("maxpool2d expects 4-d input, got {:?}", s)));
        }
        if !s[2].is_multiple_of(2) || !s[3].is_multiple_of(2) {
            return Err(Error::dim(format!(
                "maxpool2d needs even spatial extents, got {:?}",
                s
            )));
        }
        let (out, argmax) =
            kernels::maxpool2_forward(self.nodes[x.idx].value.data(), [s[0], s[1], s[2], s[3]]);
        let rg = self.needs(&[x]);
        Ok(self.push(
            Tensor::new(vec![s[0], s[1], s[2] / 2, s[3] / 2], out)?,
            rg,
            Op::MaxPool2 {
                x: x.idx,
                argmax: if rg { argmax } else { Vec::new() },
            },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let mut v = self.nodes[x.idx].value.clone();
        par::map_inplace(v.data_mut(), |a| if a > T::zero() { a } else { T::zero() });
        let rg = self.needs(&[x]);
        Ok(self.push(v, rg, Op::Relu { x: x.idx }))
    }

    /// Adds `b` along axis 1 of `x` (features of `[n, f]` or channels of
    /// `[n, f, h, w]`).
    pub fn bias_add(&mut self, x: Var, b: Var) -> Result<Var> {
        self.check(x)?;
        self.check(b)?;
        let (sx, sb) = (self.shape(x).to_vec(), self.shape(b).to_vec());
        if sx.len() < 2 || sb.len() != 1 || sb[0] != sx[1] {
            return Err(Error::dim(format!(
                "bias {:?} does not match axis 1 of {:?}",
                sb, sx
            )));
        }
        let channels = sx[1];
        let inner: usize = sx[2..].iter().product();
        let mut v = self.nodes[x.idx].value.clone();
        let bias = self.nodes[b.idx].value.data().to_vec();
        par::for_each_chunk_mut(v.data_mut(), channels * inner, |_, row| {
            for (ch, plane) in row.chunks_mut(inner).enumerate() {
                for a in plane {
                    *a = *a + bias[ch];
                }
            }
        });
        let rg = self.needs(&[x, b]);
        Ok(self.push(
            v,
            rg,
            Op::BiasAdd {
                x: x.idx,
                b: b.idx,
                channels,
                inner,
            },
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.check(x)?;
        let v = self.nodes[x.idx].value.clone().reshape(shape)?;
        let rg = self.needs(&[x]);
        Ok(self.push(v, rg, Op::Reshape { x: x.idx }))
    }

    /// `[n, ...] -> [n, prod(...)]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let s = self.shape(x);
        if s.is_empty() {
            return Err(Error::dim("cannot flatten a scalar"));
        }
        let shape = [s[0], s[1..].iter().product()];
        self.reshape(x, &shape)
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.check(logits)?;
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != labels.len() {
            return Err(Error::dim(format!(
                "logits {:?} against {} labels",
                s,
                labels.len()
            )));
        }
        let (n, c) = (s[0], s[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Validation(format!(
                "label {} out of range for {} classes",
                bad, c
            )));
        }
        if n == 0 {
            return Err(Error::Validation("empty batch".into()));
        }
        let data = self.nodes[logits.idx].value.data();
        let mut probs = vec![T::zero(); n * c];
        let mut total = 0.0f64;
        for (i, &label) in labels.iter().enumerate() {
            let row = &data[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut denom = T::zero();
            for (p, &z) in probs[i * c..(i + 1) * c].iter_mut().zip(row) {
                *p = (z - max).exp();
                denom = denom + *p;
            }
            for p in &mut probs[i * c..(i + 1) * c] {
                *p = *p / denom;
                // subnormal probabilities stall every later matmul
                if *p < T::min_positive_value() {
                    *p = T::zero();
                }
            }
            total += (denom.ln() + max - row[label]).to_f64_lossy();
        }
        let loss = T::from_f64_lossy(total / n as f64);
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            rg,
            Op::SoftmaxCe {
                logits: logits.idx,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let total = self.nodes[x.idx]
            .value
            .data()
            .iter()
            .fold(T::zero(), |a, &b| a + b);
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::scalar(total), rg, Op::Sum { x: x.idx }))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (va, vb) = (&self.nodes[a.idx].value, &self.nodes[b.idx].value);
        if va.shape() != vb.shape() {
            return Err(Error::dim(format!(
                "elementwise product of {:?} and {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let v = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(v, rg, Op::Mul { a: a.idx, b: b.idx }))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var> {
        self.check(x)?;
        let v = self.nodes[x.idx].value.map(|a| a * factor);
        let rg = self.needs(&[x]);
        Ok(self.push(v, rg, Op::Scale { x: x.idx, factor }))
    }

    /// Assembles the real block matrix of a quaternion weight bank.
    ///
    /// `parts` are the (r, x, y, z) component tensors, each shaped
    /// `[out_q, in_q, taps...]`. The result is `[4*out_q, 4*in_q, taps...]`
    /// whose `(a, b)` block is the signed component given by the 4x4 real
    /// form of `w ⊗ ·`, so multiplying it against component-planar
    /// activations computes `Σ w ⊗ x`.
    pub fn hamilton_block(&mut self, parts: [Var; 4]) -> Result<Var> {
        for p in parts {
            self.check(p)?;
        }
        let shape = self.shape(parts[0]).to_vec();
        if shape.len() < 2 {
            return Err(Error::dim(format!(
                "quaternion weight components need at least 2 axes, got {:?}",
                shape
            )));
        }
        for p in &parts[1..] {
            if self.shape(*p) != shape.as_slice() {
                return Err(Error::dim(format!(
                    "quaternion weight components disagree: {:?} vs {:?}",
                    shape,
                    self.shape(*p)
                )));
            }
        }
        let (out_q, in_q) = (shape[0], shape[1]);
        let taps: usize = shape[2..].iter().product();
        let mut out = vec![T::zero(); 16 * out_q * in_q * taps];
        let comps: Vec<&[T]> = parts
            .iter()
            .map(|p| self.nodes[p.idx].value.data())
            .collect();
        let row_len = 4 * in_q * taps;
        for (a, pattern_row) in HAMILTON_PATTERN.iter().enumerate() {
            for o in 0..out_q {
                let dst_row = &mut out[(a * out_q + o) * row_len..(a * out_q + o + 1) * row_len];
                for (b, &(comp, neg)) in pattern_row.iter().enumerate() {
                    let src = &comps[comp][o * in_q * taps..(o + 1) * in_q * taps];
                    let dst = &mut dst_row[b * in_q * taps..(b + 1) * in_q * taps];
                    if neg {
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d = -s;
                        }
                    } else {
                        dst.copy_from_slice(src);
                    }
                }
            }
        }
        let mut out_shape = vec![4 * out_q, 4 * in_q];
        out_shape.extend_from_slice(&shape[2..]);
        let rg = self.needs(&parts);
        Ok(self.push(
            Tensor::new(out_shape, out)?,
            rg,
            Op::HamiltonBlock {
                parts: parts.map(|p| p.idx),
                out_q,
                in_q,
                taps,
            },
        ))
    }

    /// Propagates d`loss`/d(node) to every node that requires gradients,
    /// then clears the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.nodes.is_empty() {
            return Err(Error::State(
                "backward called without a recorded forward pass".into(),
            ));
        }
        self.check(loss)?;
        if self.nodes[loss.idx].value.numel() != 1 {
            return Err(Error::dim(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.idx].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let loss_shape = self.nodes[loss.idx].value.shape().to_vec();
        grads[loss.idx] = Some(Tensor::full(&loss_shape, T::one()));

        for i in (0..=loss.idx).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        let generation = self.generation;
        self.clear();
        Ok(Gradients { generation, grads })
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let nodes = &self.nodes;
        let want = |idx: usize| nodes[idx].requires_grad;
        match &nodes[i].op {
            Op::Leaf => {}
            &Op::MatMul { a, b, m, k, n } => {
                if want(a) {
                    let mut ga = vec![T::zero(); m * k];
                    kernels::gemm(m, n, k, T::one(), g.data(), false, nodes[b].value.data(), true, T::zero(), &mut ga);
                    accumulate(grads, a, Tensor::new(vec![m, k], ga)?)?;
                }
                if want(b) {
                    let mut gb = vec![T::zero(); k * n];
                    kernels::gemm(k, m, n, T::one(), nodes[a].value.data(), true, g.data(), false, T::zero(), &mut gb);
                    accumulate(grads, b, Tensor::new(vec![k, n], gb)?)?;
                }
            }
            &Op::MatMulNt { a, b, m, k, n } => {
                if want(a) {
                    let mut ga = vec![T::zero(); m * k];
                    kernels::gemm(m, n, k, T::one(), g.data(), false, nodes[b].value.data(), false, T::zero(), &mut ga);
                    accumulate(grads, a, Tensor::new(vec![m, k], ga)?)?;
                }
                if want(b) {
                    let mut gb = vec![T::zero(); n * k];
                    kernels::gemm(n, m, k, T::one(), g.data(), true, nodes[a].value.data(), false, T::zero(), &mut gb);
                    accumulate(grads, b, Tensor::new(vec![n, k], gb)?)?;
                }
            }
            Op::Conv3x3 {
                x,
                k,
                dims,
                filters,
            } => {
                let (dx, dk) = kernels::conv3x3_backward(
                    g.data(),
                    nodes[*x].value.data(),
                    *dims,
                    nodes[*k].value.data(),
                    *filters,
                    want(*x),
                );
                if let Some(dx) = dx {
                    accumulate(grads, *x, Tensor::new(dims.to_vec(), dx)?)?;
                }
                if want(*k) {
                    accumulate(grads, *k, Tensor::new(vec![*filters, dims[1], 3, 3], dk)?)?;
                }
            }
            Op::MaxPool2 { x, argmax } => {
                let mut gx = Tensor::zeros(nodes[*x].value.shape());
                let d = gx.data_mut();
                for (&src, &gv) in argmax.iter().zip(g.data()) {
                    d[src] = d[src] + gv;
                }
                accumulate(grads, *x, gx)?;
            }
            Op::Relu { x } => {
                let out = nodes[i].value.data();
                let data = g
                    .data()
                    .iter()
                    .zip(out)
                    .map(|(&gv, &o)| if o > T::zero() { gv } else { T::zero() })
                    .collect();
                accumulate(grads, *x, Tensor::new(g.shape().to_vec(), data)?)?;
            }
            &Op::BiasAdd {
                x,
                b,
                channels,
                inner,
            } => {
                if want(x) {
                    accumulate(grads, x, g.clone())?;
                }
                if want(b) {
                    let mut gb = vec![T::zero(); channels];
                    for row in g.data().chunks(channels * inner) {
                        for (ch, plane) in row.chunks(inner).enumerate() {
                            gb[ch] = plane.iter().fold(gb[ch], |acc, &v| acc + v);
                        }
                    }
                    accumulate(grads, b, Tensor::new(vec![channels], gb)?)?;
                }
            }
            Op::Reshape { x } => {
                let shape = nodes[*x].value.shape().to_vec();
                accumulate(grads, *x, g.clone().reshape(&shape)?)?;
            }
            Op::SoftmaxCe {
                logits,
                labels,
                probs,
            } => {
                let n = labels.len();
                let c = probs.len() / n;
                let scale = g.item() / T::from_usize(n).expect("batch size fits");
                let mut d = probs.clone();
                for (row, &label) in labels.iter().enumerate() {
                    d[row * c + label] = d[row * c + label] - T::one();
                }
                for v in &mut d {
                    *v = *v * scale;
                }
                accumulate(grads, *logits, Tensor::new(vec![n, c], d)?)?;
            }
            Op::Sum { x } => {
                accumulate(grads, *x, Tensor::full(nodes[*x].value.shape(), g.item()))?;
            }
            &Op::Mul { a, b } => {
                if want(a) {
                    let d = g.data().iter().zip(nodes[b].value.data()).map(|(&u, &v)| u * v).collect();
                    accumulate(grads, a, Tensor::new(g.shape().to_vec(), d)?)?;
                }
                if want(b) {
                    let d = g.data().iter().zip(nodes[a].value.data()).map(|(&u, &v)| u * v).collect();
                    accumulate(grads, b, Tensor::new(g.shape().to_vec(), d)?)?;
                }
            }
            &Op::Scale { x, factor } => {
                accumulate(grads, x, g.map(|v| v * factor))?;
            }
            &Op::HamiltonBlock {
                parts,
                out_q,
                in_q,
                taps,
            } => {
                let part_len = out_q * in_q * taps;
                let mut pg = vec![vec![T::zero(); part_len]; 4];
                let row_len = 4 * in_q * taps;
                let gd = g.data();
                for (a, pattern_row) in HAMILTON_PATTERN.iter().enumerate() {
                    for o in 0..out_q {
                        let src_row = &gd[(a * out_q + o) * row_len..(a * out_q + o + 1) * row_len];
                        for (b, &(comp, neg)) in pattern_row.iter().enumerate() {
                            let src = &src_row[b * in_q * taps..(b + 1) * in_q * taps];
                            let dst = &mut pg[comp][o * in_q * taps..(o + 1) * in_q * taps];
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d = if neg { *d - s } else { *d + s };
                            }
                        }
                    }
                }
                for (part, data) in parts.iter().zip(pg) {
                    if want(*part) {
                        let shape = nodes[*part].value.shape().to_vec();
                        accumulate(grads, *part, Tensor::new(shape, data)?)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], idx: usize, g: Tensor<T>) -> Result<()> {
    match &mut grads[idx] {
        Some(existing) => existing.add_assign(&g),
        slot => {
            *slot = Some(g);
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn matmul_one_by_one() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[1, 1], &[2.0]));
        let b = tape.constant(t(&[1, 1], &[3.0]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).unwrap().data(), &[6.0]);
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let vals: Vec<f64> = (0..6).map(|i| i as f64 * 0.5 - 1.0).collect();
        let a = tape.constant(t(&[2, 3], &vals));
        let eye = tape.constant(t(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]));
        let c = tape.matmul(a, eye).unwrap();
        assert_eq!(tape.value(c).unwrap().data(), vals.as_slice());
    }

    #[test]
    fn matmul_shape_mismatch_names_shapes() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn relu_bias_flatten() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 3], &[-1.0, 2.0, 0.0]));
        let r = tape.relu(x).unwrap();
        assert_eq!(tape.value(r).unwrap().data(), &[0.0, 2.0, 0.0]);

        let zero = tape.constant(Tensor::zeros(&[3]));
        let y = tape.bias_add(x, zero).unwrap();
        assert_eq!(tape.value(y).unwrap(), tape.value(x).unwrap());

        let bad = tape.constant(Tensor::zeros(&[2]));
        assert!(matches!(tape.bias_add(x, bad), Err(Error::Dimension(_))));

        let img: Vec<f64> = (0..24).map(f64::from).collect();
        let m = tape.constant(t(&[2, 3, 2, 2], &img));
        let f = tape.flatten(m).unwrap();
        let fv = tape.value(f).unwrap();
        assert_eq!(fv.shape(), &[2, 12]);
        assert_eq!(fv.data(), img.as_slice());
    }

    #[test]
    fn maxpool_window_and_constant() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let p = tape.maxpool2d(x).unwrap();
        assert_eq!(tape.value(p).unwrap().data(), &[4.0]);

        let c = tape.constant(Tensor::full(&[2, 3, 4, 6], 0.7));
        let p = tape.maxpool2d(c).unwrap();
        let pv = tape.value(p).unwrap();
        assert_eq!(pv.shape(), &[2, 3, 2, 3]);
        assert!(pv.data().iter().all(|&v| v == 0.7));

        let odd = tape.constant(Tensor::zeros(&[1, 1, 3, 4]));
        assert!(matches!(tape.maxpool2d(odd), Err(Error::Dimension(_))));
    }

    #[test]
    fn maxpool_tie_routes_to_first() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(&[1, 1, 2, 2], 1.0), true);
        let p = tape.maxpool2d(x).unwrap();
        let s = tape.sum(p).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn conv_identity_and_zero_kernels() {
        let mut tape = Tape::new();
        let img: Vec<f64> = (0..2 * 2 * 4 * 5).map(|i| (i as f64).sin()).collect();
        let x = tape.constant(t(&[2, 2, 4, 5], &img));
        let mut k = vec![0.0; 2 * 2 * 9];
        k[4] = 1.0; // f0 <- c0 centre
        k[9 * 3 + 4] = 1.0; // f1 <- c1 centre
        let kid = tape.constant(t(&[2, 2, 3, 3], &k));
        let y = tape.conv2d(x, kid).unwrap();
        assert_eq!(tape.value(y).unwrap().data(), img.as_slice());

        let kz = tape.constant(Tensor::zeros(&[3, 2, 3, 3]));
        let y = tape.conv2d(x, kz).unwrap();
        let yv = tape.value(y).unwrap();
        assert_eq!(yv.shape(), &[2, 3, 4, 5]);
        assert!(yv.data().iter().all(|&v| v == 0.0));

        let wrong = tape.constant(Tensor::zeros(&[3, 1, 3, 3]));
        assert!(matches!(tape.conv2d(x, wrong), Err(Error::Dimension(_))));
    }

    #[test]
    fn cross_entropy_uniform_and_margin() {
        let mut tape = Tape::<f64>::new();
        let z = tape.constant(Tensor::zeros(&[3, 7]));
        let l = tape.softmax_cross_entropy(z, &[0, 3, 6]).unwrap();
        assert!((tape.value(l).unwrap().item() - 7f64.ln()).abs() < 1e-12);

        let z = tape.constant(t(&[1, 3], &[50.0, 0.0, 0.0]));
        let l = tape.softmax_cross_entropy(z, &[0]).unwrap();
        assert!(tape.value(l).unwrap().item() < 1e-6);

        assert!(matches!(
            tape.softmax_cross_entropy(z, &[3]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn sum_and_half_square_gradients() {
        let mut tape = Tape::new();
        let w = tape.leaf(t(&[2, 2], &[1.0, -2.0, 0.5, 3.0]), true);
        let s = tape.sum(w).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[1.0; 4]);

        let w = tape.leaf(t(&[4], &[1.0, -2.0, 0.5, 3.0]), true);
        let sq = tape.mul(w, w).unwrap();
        let s = tape.sum(sq).unwrap();
        let half = tape.scale(s, 0.5).unwrap();
        let g = tape.backward(half).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[1.0, -2.0, 0.5, 3.0]);
    }

    #[test]
    fn second_backward_is_a_state_error() {
        let mut tape = Tape::new();
        let w = tape.leaf(t(&[2], &[1.0, 2.0]), true);
        let s = tape.sum(w).unwrap();
        tape.backward(s).unwrap();
        assert!(matches!(tape.backward(s), Err(Error::State(_))));
        assert!(matches!(tape.relu(w), Err(Error::State(_))));
    }

    #[test]
    fn inference_tape_tracks_nothing() {
        let mut tape = Tape::inference();
        let w = tape.leaf(t(&[2], &[1.0, 2.0]), true);
        let s = tape.sum(w).unwrap();
        let g = tape.backward(s).unwrap();
        assert!(g.get(w).is_none());
    }
}
