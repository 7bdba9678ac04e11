use super::kernels::{
    batch_to_channel_major, channel_to_batch_major, col2im, gemm, im2col, ConvGeom,
};
use super::tensor::Tensor;
use crate::error::{dim_err, numeric_err, Result};
use crate::scalar::Real;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
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
    Sub(Var, Var),
    Mul(Var, Var),
    Affine { x: Var, scale: T },
    LeakyRelu { x: Var, slope: T },
    Sigmoid(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    ConcatChannels { a: Var, b: Var },
    Tile { v: Var, h: usize, w: usize },
    GatherRows { x: Var, index: Vec<usize> },
    Linear { x: Var, w: Var, b: Var },
    GlobalAvgPool(Var),
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    ChannelBias { x: Var, b: Var },
    Conv2d { x: Var, k: Var, geom: ConvGeom, cols: Vec<T> },
    ConvTranspose2d { x: Var, k: Var, geom: ConvGeom },
    ChannelWeightedSum { x: Var, w: Var },
    CosineRows { a: Var, b: Var },
    L1Loss { pred: Var, target: Var },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Affine { .. } => "affine",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::Reshape(..) => "reshape",
            Op::ConcatChannels { .. } => "concat_channels",
            Op::Tile { .. } => "tile",
            Op::GatherRows { .. } => "gather_rows",
            Op::Linear { .. } => "linear",
            Op::GlobalAvgPool(..) => "global_avg_pool",
            Op::BatchNorm { .. } => "batch_norm",
            Op::ChannelBias { .. } => "channel_bias",
            Op::Conv2d { .. } => "conv2d",
            Op::ConvTranspose2d { .. } => "conv_transpose2d",
            Op::ChannelWeightedSum { .. } => "channel_weighted_sum",
            Op::CosineRows { .. } => "cosine_similarity",
            Op::L1Loss { .. } => "l1_loss",
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Reverse-mode tape. Nodes are appended in execution order, so the node list
/// is already topologically sorted; [`Graph::backward`] walks it once in
/// reverse.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss with respect to `v`, or `None` if `v` does not
    /// require gradients or is not an ancestor of the loss.
    pub fn get(&self, v: Var) -> Option<Tensor<T>> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor::new(self.shapes[v.0].clone(), g.clone()).expect("gradient shape"))
    }
}

pub const BATCH_NORM_EPS: f64 = 1e-5;

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Record a trainable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Result<Var> {
        self.leaf(t, true)
    }

    /// Record a constant leaf (no gradient).
    pub fn constant(&mut self, t: Tensor<T>) -> Result<Var> {
        self.leaf(t, false)
    }

    pub fn leaf(&mut self, t: Tensor<T>, requires_grad: bool) -> Result<Var> {
        self.push(t, Op::Leaf, requires_grad)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(numeric_err!("non-finite value produced by {}", op.name()));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(dim_err!(
                "{op}: shape mismatch {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            ));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Result<Var> {
        self.same_shape(a, b, op.name())?;
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        self.push(t, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Result<Var> {
        let t = self.value(x).map(|v| scale * v + shift);
        let rg = self.rg(&[x]);
        self.push(t, Op::Affine { x, scale }, rg)
    }

    pub fn scale(&mut self, x: Var, scale: T) -> Result<Var> {
        self.affine(x, scale, T::zero())
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Result<Var> {
        let t = self
            .value(x)
            .map(|v| if v > T::zero() { v } else { slope * v });
        let rg = self.rg(&[x]);
        self.push(t, Op::LeakyRelu { x, slope }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.leaky_relu(x, T::zero())
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(sigmoid);
        let rg = self.rg(&[x]);
        self.push(t, Op::Sigmoid(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: T = self.data(x).iter().copied().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = T::from_usize_lossy(self.value(x).numel());
        let s: T = self.data(x).iter().copied().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s / n), Op::Mean(x), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(&[x]);
        self.push(t, Op::Reshape(x), rg)
    }

    /// Stack `[N,Ca,H,W]` and `[N,Cb,H,W]` along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let [n, ca, h, w] = self.value(a).dims4("concat_channels lhs")?;
        let [nb, cb, hb, wb] = self.value(b).dims4("concat_channels rhs")?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(dim_err!(
                "concat_channels: [N,H,W] mismatch {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            ));
        }
        let p = h * w;
        let (da, db) = (self.data(a), self.data(b));
        let mut out = Vec::with_capacity(n * (ca + cb) * p);
        for ni in 0..n {
            out.extend_from_slice(&da[ni * ca * p..(ni + 1) * ca * p]);
            out.extend_from_slice(&db[ni * cb * p..(ni + 1) * cb * p]);
        }
        let t = Tensor::new([n, ca + cb, h, w], out)?;
        let rg = self.rg(&[a, b]);
        self.push(t, Op::ConcatChannels { a, b }, rg)
    }

    /// Broadcast `[N,D]` to `[N,D,h,w]`, every spatial site a copy of the row.
    pub fn tile(&mut self, v: Var, h: usize, w: usize) -> Result<Var> {
        let [n, d] = self.value(v).dims2("tile")?;
        if h == 0 || w == 0 {
            return Err(dim_err!("tile: zero spatial extent"));
        }
        let src = self.data(v);
        let mut out = Vec::with_capacity(n * d * h * w);
        for &s in src.iter().take(n * d) {
            out.extend(std::iter::repeat_n(s, h * w));
        }
        let t = Tensor::new([n, d, h, w], out)?;
        let rg = self.rg(&[v]);
        self.push(t, Op::Tile { v, h, w }, rg)
    }

    /// Select rows along axis 0 (rows may repeat).
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.is_empty() || index.is_empty() {
            return Err(dim_err!("gather_rows: need rank >= 1 and a non-empty index"));
        }
        let rows = shape[0];
        let row: usize = shape[1..].iter().product();
        let src = self.data(x);
        let mut out = Vec::with_capacity(index.len() * row);
        for &i in index {
            if i >= rows {
                return Err(dim_err!("gather_rows: index {i} out of range for {rows} rows"));
            }
            out.extend_from_slice(&src[i * row..(i + 1) * row]);
        }
        let mut oshape = shape;
        oshape[0] = index.len();
        let t = Tensor::new(oshape, out)?;
        let rg = self.rg(&[x]);
        self.push(
            t,
            Op::GatherRows {
                x,
                index: index.to_vec(),
            },
            rg,
        )
    }

    /// `x W^T + b` with `x: [N,I]`, `W: [O,I]`, `b: [O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let [n, i] = self.value(x).dims2("linear input")?;
        let [o, wi] = self.value(w).dims2("linear weight")?;
        if wi != i || self.shape(b) != [o] {
            return Err(dim_err!(
                "linear: input {:?}, weight {:?}, bias {:?}",
                self.shape(x),
                self.shape(w),
                self.shape(b)
            ));
        }
        let mut out = vec![T::zero(); n * o];
        for row in out.chunks_mut(o) {
            row.copy_from_slice(self.data(b));
        }
        gemm(self.data(x), n, i, false, self.data(w), o, i, true, T::one(), &mut out);
        let t = Tensor::new([n, o], out)?;
        let rg = self.rg(&[x, w, b]);
        self.push(t, Op::Linear { x, w, b }, rg)
    }

    /// Mean over spatial dims: `[N,C,H,W]` -> `[N,C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("global_avg_pool")?;
        let p = h * w;
        let inv = T::one() / T::from_usize_lossy(p);
        let out = self
            .data(x)
            .chunks(p)
            .map(|plane| plane.iter().copied().sum::<T>() * inv)
            .collect();
        let t = Tensor::new([n, c], out)?;
        let rg = self.rg(&[x]);
        self.push(t, Op::GlobalAvgPool(x), rg)
    }

    /// Batch normalization with statistics of the current batch
    /// (biased variance over N, H, W per channel).
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("batch_norm")?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(dim_err!(
                "batch_norm: gamma {:?} / beta {:?} for {c} channels",
                self.shape(gamma),
                self.shape(beta)
            ));
        }
        let p = h * w;
        let m = T::from_usize_lossy(n * p);
        let eps = T::c(BATCH_NORM_EPS);
        let xd = self.data(x);
        let (gd, bd) = (self.data(gamma), self.data(beta));
        let mut xhat = vec![T::zero(); xd.len()];
        let mut out = vec![T::zero(); xd.len()];
        let mut inv_std = vec![T::zero(); c];
        for ci in 0..c {
            let mut mean = T::zero();
            for ni in 0..n {
                mean += xd[(ni * c + ci) * p..][..p].iter().copied().sum::<T>();
            }
            mean /= m;
            let mut var = T::zero();
            for ni in 0..n {
                for &v in &xd[(ni * c + ci) * p..][..p] {
                    var += (v - mean) * (v - mean);
                }
            }
            var /= m;
            let is = T::one() / (var + eps).sqrt();
            inv_std[ci] = is;
            for ni in 0..n {
                let off = (ni * c + ci) * p;
                for j in off..off + p {
                    let xh = (xd[j] - mean) * is;
                    xhat[j] = xh;
                    out[j] = gd[ci] * xh + bd[ci];
                }
            }
        }
        let t = Tensor::new([n, c, h, w], out)?;
        let rg = self.rg(&[x, gamma, beta]);
        self.push(
            t,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        )
    }

    /// Add a per-channel bias `b: [C]` to `[N,C,H,W]`.
    pub fn channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("channel_bias")?;
        if self.shape(b) != [c] {
            return Err(dim_err!("channel_bias: bias {:?} for {c} channels", self.shape(b)));
        }
        let p = h * w;
        let bd = self.data(b);
        let mut out = self.data(x).to_vec();
        for (idx, plane) in out.chunks_mut(p).enumerate() {
            let bc = bd[idx % c];
            plane.iter_mut().for_each(|v| *v += bc);
        }
        let t = Tensor::new([n, c, h, w], out)?;
        let rg = self.rg(&[x, b]);
        self.push(t, Op::ChannelBias { x, b }, rg)
    }

    /// Strided, zero-padded cross-correlation (no kernel flip).
    /// `x: [N,C,H,W]`, `k: [K,C,kh,kw]` -> `[N,K,H',W']`.
    pub fn conv2d(&mut self, x: Var, k: Var, stride: usize, padding: usize) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("conv2d input")?;
        let [kk, kc, kh, kw] = self.value(k).dims4("conv2d kernel")?;
        if kc != c {
            return Err(dim_err!("conv2d: kernel expects {kc} channels, input has {c}"));
        }
        if stride == 0 {
            return Err(dim_err!("conv2d: stride must be >= 1"));
        }
        if kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(dim_err!(
                "conv2d: kernel {kh}x{kw} exceeds padded input {}x{}",
                h + 2 * padding,
                w + 2 * padding
            ));
        }
        let geom = ConvGeom {
            n,
            c,
            h,
            w,
            k: kk,
            kh,
            kw,
            stride,
            pad: padding,
            oh: (h + 2 * padding - kh) / stride + 1,
            ow: (w + 2 * padding - kw) / stride + 1,
        };
        let cols = im2col(self.data(x), &geom);
        let np = geom.cols();
        let mut mat = vec![T::zero(); kk * np];
        gemm(self.data(k), kk, geom.patch(), false, &cols, geom.patch(), np, false, T::zero(), &mut mat);
        let out = channel_to_batch_major(&mat, n, kk, geom.oh * geom.ow);
        let t = Tensor::new([n, kk, geom.oh, geom.ow], out)?;
        let rg = self.rg(&[x, k]);
        // The patch matrix is only needed for the kernel gradient.
        let cols = if self.requires_grad(k) { cols } else { Vec::new() };
        self.push(t, Op::Conv2d { x, k, geom, cols }, rg)
    }

    /// Adjoint of [`conv2d`](Self::conv2d) for the same kernel and geometry.
    /// `x: [N,K,H,W]`, `k: [K,C,kh,kw]` -> `[N,C,(H-1)s-2p+kh,(W-1)s-2p+kw]`.
    pub fn conv_transpose2d(&mut self, x: Var, k: Var, stride: usize, padding: usize) -> Result<Var> {
        let [n, kin, h, w] = self.value(x).dims4("conv_transpose2d input")?;
        let [kk, c, kh, kw] = self.value(k).dims4("conv_transpose2d kernel")?;
        if kk != kin {
            return Err(dim_err!(
                "conv_transpose2d: kernel expects {kk} input channels, input has {kin}"
            ));
        }
        if stride == 0 {
            return Err(dim_err!("conv_transpose2d: stride must be >= 1"));
        }
        let oh = ((h - 1) * stride + kh).checked_sub(2 * padding).filter(|&v| v > 0);
        let ow = ((w - 1) * stride + kw).checked_sub(2 * padding).filter(|&v| v > 0);
        let (Some(oh), Some(ow)) = (oh, ow) else {
            return Err(dim_err!("conv_transpose2d: padding {padding} leaves an empty output"));
        };
        // Geometry of the forward conv whose adjoint this is.
        let geom = ConvGeom {
            n,
            c,
            h: oh,
            w: ow,
            k: kk,
            kh,
            kw,
            stride,
            pad: padding,
            oh: h,
            ow: w,
        };
        let np = geom.cols();
        let xmat = batch_to_channel_major(self.data(x), n, kk, h * w);
        let mut cols = vec![T::zero(); geom.patch() * np];
        gemm(self.data(k), kk, geom.patch(), true, &xmat, kk, np, false, T::zero(), &mut cols);
        let out = col2im(&cols, &geom);
        let t = Tensor::new([n, c, oh, ow], out)?;
        let rg = self.rg(&[x, k]);
        self.push(t, Op::ConvTranspose2d { x, k, geom }, rg)
    }

    /// Per-pixel channel reduction `out[n,0,p] = sum_c w[n,c] x[n,c,p]`.
    pub fn channel_weighted_sum(&mut self, x: Var, w: Var) -> Result<Var> {
        let [n, c, h, wd] = self.value(x).dims4("channel_weighted_sum")?;
        if self.shape(w) != [n, c] {
            return Err(dim_err!(
                "channel_weighted_sum: weights {:?} for features {:?}",
                self.shape(w),
                self.shape(x)
            ));
        }
        let p = h * wd;
        let (xd, wdat) = (self.data(x), self.data(w));
        let mut out = vec![T::zero(); n * p];
        for ni in 0..n {
            let o = &mut out[ni * p..(ni + 1) * p];
            for ci in 0..c {
                let wc = wdat[ni * c + ci];
                for (ov, &xv) in o.iter_mut().zip(&xd[(ni * c + ci) * p..][..p]) {
                    *ov += wc * xv;
                }
            }
        }
        let t = Tensor::new([n, 1, h, wd], out)?;
        let rg = self.rg(&[x, w]);
        self.push(t, Op::ChannelWeightedSum { x, w }, rg)
    }

    /// Cosine similarity. Rank-1 inputs `[D]` give a scalar; rank-2 inputs
    /// `[N,D]` give one similarity per row `[N]`. Zero-norm rows are an error.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "cosine_similarity")?;
        let shape = self.shape(a).to_vec();
        let (rows, d, oshape) = match shape.as_slice() {
            &[d] => (1, d, vec![]),
            &[n, d] => (n, d, vec![n]),
            s => return Err(dim_err!("cosine_similarity: expected [D] or [N,D], got {s:?}")),
        };
        let (ad, bd) = (self.data(a), self.data(b));
        let mut out = Vec::with_capacity(rows);
        for r in 0..rows {
            let (ar, br) = (&ad[r * d..(r + 1) * d], &bd[r * d..(r + 1) * d]);
            let (na, nb) = (norm(ar), norm(br));
            if na <= T::min_positive_value() || nb <= T::min_positive_value() {
                return Err(numeric_err!("cosine_similarity: zero-norm input (row {r})"));
            }
            out.push(dotp(ar, br) / (na * nb));
        }
        let t = Tensor::new(oshape, out)?;
        let rg = self.rg(&[a, b]);
        self.push(t, Op::CosineRows { a, b }, rg)
    }

    /// Mean absolute error over all elements.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape(pred, target, "l1_loss")?;
        let n = T::from_usize_lossy(self.value(pred).numel());
        let s: T = self
            .data(pred)
            .iter()
            .zip(self.data(target))
            .map(|(&p, &t)| (p - t).abs())
            .sum();
        let rg = self.rg(&[pred, target]);
        self.push(Tensor::scalar(s / n), Op::L1Loss { pred, target }, rg)
    }

    /// Reverse pass from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(dim_err!(
                "backward: loss must hold one element, got shape {:?}",
                self.shape(loss)
            ));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        if self.requires_grad(loss) {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(numeric_err!(
                        "non-finite gradient at node {i} ({})",
                        self.nodes[i].op.name()
                    ));
                }
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
        if !self.requires_grad(v) {
            return None;
        }
        let len = self.value(v).numel();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); len]))
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if let Some(s) = self.slot(grads, *a) {
                    axpy(s, T::one(), g);
                }
                if let Some(s) = self.slot(grads, *b) {
                    axpy(s, T::one(), g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(s) = self.slot(grads, *a) {
                    axpy(s, T::one(), g);
                }
                if let Some(s) = self.slot(grads, *b) {
                    axpy(s, -T::one(), g);
                }
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                if let Some(s) = self.slot(grads, *a) {
                    for ((sv, &gv), &bv) in s.iter_mut().zip(g).zip(bd) {
                        *sv += gv * bv;
                    }
                }
                if let Some(s) = self.slot(grads, *b) {
                    for ((sv, &gv), &av) in s.iter_mut().zip(g).zip(ad) {
                        *sv += gv * av;
                    }
                }
            }
            Op::Affine { x, scale } => {
                if let Some(s) = self.slot(grads, *x) {
                    axpy(s, *scale, g);
                }
            }
            Op::LeakyRelu { x, slope } => {
                let xd = self.data(*x);
                if let Some(s) = self.slot(grads, *x) {
                    for ((sv, &gv), &xv) in s.iter_mut().zip(g).zip(xd) {
                        *sv += if xv > T::zero() { gv } else { *slope * gv };
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                if let Some(s) = self.slot(grads, *x) {
                    for ((sv, &gv), &yv) in s.iter_mut().zip(g).zip(y) {
                        *sv += gv * yv * (T::one() - yv);
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut().for_each(|v| *v += g[0]);
                }
            }
            Op::Mean(x) => {
                let n = T::from_usize_lossy(self.value(*x).numel());
                if let Some(s) = self.slot(grads, *x) {
                    let gv = g[0] / n;
                    s.iter_mut().for_each(|v| *v += gv);
                }
            }
            Op::Reshape(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    axpy(s, T::one(), g);
                }
            }
            Op::ConcatChannels { a, b } => {
                let [n, ca, h, w] = dims4(self.value(*a));
                let cb = self.shape(*b)[1];
                let p = h * w;
                if let Some(s) = self.slot(grads, *a) {
                    for ni in 0..n {
                        axpy(
                            &mut s[ni * ca * p..(ni + 1) * ca * p],
                            T::one(),
                            &g[ni * (ca + cb) * p..][..ca * p],
                        );
                    }
                }
                if let Some(s) = self.slot(grads, *b) {
                    for ni in 0..n {
                        axpy(
                            &mut s[ni * cb * p..(ni + 1) * cb * p],
                            T::one(),
                            &g[(ni * (ca + cb) + ca) * p..][..cb * p],
                        );
                    }
                }
            }
            Op::Tile { v, h, w } => {
                let p = h * w;
                if let Some(s) = self.slot(grads, *v) {
                    for (sv, plane) in s.iter_mut().zip(g.chunks(p)) {
                        *sv += plane.iter().copied().sum::<T>();
                    }
                }
            }
            Op::GatherRows { x, index } => {
                let row: usize = self.shape(*x)[1..].iter().product();
                if let Some(s) = self.slot(grads, *x) {
                    for (r, &src) in index.iter().enumerate() {
                        axpy(&mut s[src * row..(src + 1) * row], T::one(), &g[r * row..(r + 1) * row]);
                    }
                }
            }
            Op::Linear { x, w, b } => {
                let [n, i_dim] = dims2(self.value(*x));
                let o = self.shape(*w)[0];
                if let Some(s) = self.slot(grads, *x) {
                    gemm(g, n, o, false, self.data(*w), o, i_dim, false, T::one(), s);
                }
                if let Some(s) = self.slot(grads, *w) {
                    gemm(g, n, o, true, self.data(*x), n, i_dim, false, T::one(), s);
                }
                if let Some(s) = self.slot(grads, *b) {
                    for row in g.chunks(o) {
                        axpy(s, T::one(), row);
                    }
                }
            }
            Op::GlobalAvgPool(x) => {
                let [_, _, h, w] = dims4(self.value(*x));
                let p = h * w;
                let inv = T::one() / T::from_usize_lossy(p);
                if let Some(s) = self.slot(grads, *x) {
                    for (plane, &gv) in s.chunks_mut(p).zip(g) {
                        plane.iter_mut().for_each(|v| *v += gv * inv);
                    }
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let [n, c, h, w] = dims4(self.value(*x));
                let p = h * w;
                let m = T::from_usize_lossy(n * p);
                let gd = self.data(*gamma);
                let mut sum_g = vec![T::zero(); c];
                let mut sum_gx = vec![T::zero(); c];
                for ni in 0..n {
                    for ci in 0..c {
                        let off = (ni * c + ci) * p;
                        for j in off..off + p {
                            sum_g[ci] += g[j];
                            sum_gx[ci] += g[j] * xhat[j];
                        }
                    }
                }
                if let Some(s) = self.slot(grads, *x) {
                    for ni in 0..n {
                        for ci in 0..c {
                            let off = (ni * c + ci) * p;
                            let k = gd[ci] * inv_std[ci] / m;
                            for j in off..off + p {
                                s[j] += k * (m * g[j] - sum_g[ci] - xhat[j] * sum_gx[ci]);
                            }
                        }
                    }
                }
                if let Some(s) = self.slot(grads, *gamma) {
                    axpy(s, T::one(), &sum_gx);
                }
                if let Some(s) = self.slot(grads, *beta) {
                    axpy(s, T::one(), &sum_g);
                }
            }
            Op::ChannelBias { x, b } => {
                let c = self.shape(*x)[1];
                let p = self.shape(*x)[2] * self.shape(*x)[3];
                if let Some(s) = self.slot(grads, *x) {
                    axpy(s, T::one(), g);
                }
                if let Some(s) = self.slot(grads, *b) {
                    for (idx, plane) in g.chunks(p).enumerate() {
                        s[idx % c] += plane.iter().copied().sum::<T>();
                    }
                }
            }
            Op::Conv2d { x, k, geom, cols } => {
                let np = geom.cols();
                let gmat = batch_to_channel_major(g, geom.n, geom.k, geom.oh * geom.ow);
                if let Some(s) = self.slot(grads, *k) {
                    gemm(&gmat, geom.k, np, false, cols, geom.patch(), np, true, T::one(), s);
                }
                if self.requires_grad(*x) {
                    let mut dcols = vec![T::zero(); geom.patch() * np];
                    gemm(self.data(*k), geom.k, geom.patch(), true, &gmat, geom.k, np, false, T::zero(), &mut dcols);
                    let dx = col2im(&dcols, geom);
                    if let Some(s) = self.slot(grads, *x) {
                        axpy(s, T::one(), &dx);
                    }
                }
            }
            Op::ConvTranspose2d { x, k, geom } => {
                let np = geom.cols();
                let dcols = im2col(g, geom);
                if self.requires_grad(*k) {
                    let xmat = batch_to_channel_major(self.data(*x), geom.n, geom.k, geom.oh * geom.ow);
                    if let Some(s) = self.slot(grads, *k) {
                        gemm(&xmat, geom.k, np, false, &dcols, geom.patch(), np, true, T::one(), s);
                    }
                }
                if self.requires_grad(*x) {
                    let mut dmat = vec![T::zero(); geom.k * np];
                    gemm(self.data(*k), geom.k, geom.patch(), false, &dcols, geom.patch(), np, false, T::zero(), &mut dmat);
                    let dx = channel_to_batch_major(&dmat, geom.n, geom.k, geom.oh * geom.ow);
                    if let Some(s) = self.slot(grads, *x) {
                        axpy(s, T::one(), &dx);
                    }
                }
            }
            Op::ChannelWeightedSum { x, w } => {
                let [n, c, h, wd] = dims4(self.value(*x));
                let p = h * wd;
                let (xd, wdat) = (self.data(*x), self.data(*w));
                if let Some(s) = self.slot(grads, *x) {
                    for ni in 0..n {
                        let gp = &g[ni * p..(ni + 1) * p];
                        for ci in 0..c {
                            let wc = wdat[ni * c + ci];
                            axpy(&mut s[(ni * c + ci) * p..][..p], wc, gp);
                        }
                    }
                }
                if let Some(s) = self.slot(grads, *w) {
                    for ni in 0..n {
                        let gp = &g[ni * p..(ni + 1) * p];
                        for ci in 0..c {
                            s[ni * c + ci] += dotp(gp, &xd[(ni * c + ci) * p..][..p]);
                        }
                    }
                }
            }
            Op::CosineRows { a, b } => {
                let d = *self.shape(*a).last().expect("rank >= 1");
                let (ad, bd) = (self.data(*a), self.data(*b));
                let sims = node.value.data();
                let rows = sims.len();
                let mut da = vec![T::zero(); ad.len()];
                let mut db = vec![T::zero(); bd.len()];
                for r in 0..rows {
                    let (ar, br) = (&ad[r * d..(r + 1) * d], &bd[r * d..(r + 1) * d]);
                    let (na, nb) = (norm(ar), norm(br));
                    let sim = sims[r];
                    let inv = T::one() / (na * nb);
                    for j in 0..d {
                        da[r * d + j] = g[r] * (br[j] * inv - sim * ar[j] / (na * na));
                        db[r * d + j] = g[r] * (ar[j] * inv - sim * br[j] / (nb * nb));
                    }
                }
                if let Some(s) = self.slot(grads, *a) {
                    axpy(s, T::one(), &da);
                }
                if let Some(s) = self.slot(grads, *b) {
                    axpy(s, T::one(), &db);
                }
            }
            Op::L1Loss { pred, target } => {
                let n = T::from_usize_lossy(self.value(*pred).numel());
                let gv = g[0] / n;
                let signs: Vec<T> = self
                    .data(*pred)
                    .iter()
                    .zip(self.data(*target))
                    .map(|(&p, &t)| signum0(p - t) * gv)
                    .collect();
                if let Some(s) = self.slot(grads, *pred) {
                    axpy(s, T::one(), &signs);
                }
                if let Some(s) = self.slot(grads, *target) {
                    axpy(s, -T::one(), &signs);
                }
            }
        }
    }
}

fn dims4<T: Real>(t: &Tensor<T>) -> [usize; 4] {
    t.dims4("backward").expect("shape validated in forward")
}

fn dims2<T: Real>(t: &Tensor<T>) -> [usize; 2] {
    t.dims2("backward").expect("shape validated in forward")
}

#[inline]
fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

#[inline]
fn dotp<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
fn norm<T: Real>(a: &[T]) -> T {
    dotp(a, a).sqrt()
}

#[inline]
fn signum0<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
