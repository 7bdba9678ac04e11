//! Conditional U-Net that predicts one ratio mask per query embedding.
//!
//! The encoder runs once per mixture. The decoder runs once per query, with
//! the query's embedding injected at the bottleneck, at the output head, or
//! at both, depending on [`FusionMode`].

mod losses;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::{Grid, Mask};
use crate::error::{config_err, dim_err, input_err, Result};
use crate::ndgrad::{Bound, Graph, ParamStore, Tensor, Var, BATCH_NORM_EPS};
use crate::scalar::Real;

pub use losses::{align_loss, sep_loss, total_loss};

const KERNEL: usize = 4;
const STRIDE: usize = 2;
const PAD: usize = 1;
const ENCODER_SLOPE: f64 = 0.2;

/// Where the query embedding enters the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// Tiled embedding concatenated at the bottleneck.
    Middle,
    /// Projected embedding weights the decoder's output channels.
    Late,
    /// Both, with separate projections.
    Hierarchical,
}

impl FusionMode {
    pub const ALL: [FusionMode; 3] = [FusionMode::Middle, FusionMode::Late, FusionMode::Hierarchical];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Middle => "middle",
            FusionMode::Late => "late",
            FusionMode::Hierarchical => "hierarchical",
        }
    }

    fn fuses_late(self) -> bool {
        self != FusionMode::Middle
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "middle" => Ok(FusionMode::Middle),
            "late" => Ok(FusionMode::Late),
            "hierarchical" => Ok(FusionMode::Hierarchical),
            other => Err(config_err!(
                "unknown fusion mode `{other}` (expected middle, late or hierarchical)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeparatorConfig {
    pub mode: FusionMode,
    /// Number of stride-2 encoder levels.
    pub depth: usize,
    /// Channels of the first encoder level; doubled per level.
    pub base_channels: usize,
    /// Decoder output channels fed to the mask head.
    pub c_out: usize,
    /// Width of the projected embedding tiled at the bottleneck (hierarchical).
    pub c_mid: usize,
    pub d_v: usize,
    pub d_a: usize,
    pub n_frames: usize,
    pub n_freq: usize,
    /// Weight of the alignment term; 0 turns alignment off.
    pub lambda: f64,
    /// Running-statistics update rate of batch norm.
    pub bn_momentum: f64,
}

impl Default for SeparatorConfig {
    fn default() -> Self {
        SeparatorConfig {
            mode: FusionMode::Hierarchical,
            depth: 4,
            base_channels: 16,
            c_out: 16,
            c_mid: 16,
            d_v: 32,
            d_a: 32,
            n_frames: 64,
            n_freq: 64,
            lambda: 0.1,
            bn_momentum: 0.1,
        }
    }
}

impl SeparatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.base_channels == 0 || self.c_out == 0 || self.d_v == 0 || self.d_a == 0 {
            return Err(config_err!("depth, channel counts and embedding dims must be positive"));
        }
        if self.mode == FusionMode::Hierarchical && self.c_mid == 0 {
            return Err(config_err!("hierarchical fusion needs c_mid > 0"));
        }
        let m = 1usize
            .checked_shl(self.depth as u32)
            .ok_or_else(|| config_err!("depth {} is too large", self.depth))?;
        if self.n_frames % m != 0 || self.n_freq % m != 0 || self.n_frames < m || self.n_freq < m {
            return Err(config_err!(
                "input {}x{} is not divisible by 2^{}",
                self.n_frames,
                self.n_freq,
                self.depth
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(config_err!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return Err(config_err!("bn_momentum must lie in (0, 1], got {}", self.bn_momentum));
        }
        Ok(())
    }

    /// Channels of encoder level `l` (1-based).
    pub fn enc_channels(&self, l: usize) -> usize {
        self.base_channels << (l - 1)
    }

    /// Bottleneck channels.
    pub fn c_bottleneck(&self) -> usize {
        self.enc_channels(self.depth)
    }

    /// Bottleneck spatial extent.
    pub fn bottleneck_hw(&self) -> (usize, usize) {
        (self.n_frames >> self.depth, self.n_freq >> self.depth)
    }

    /// Channels tiled onto the bottleneck before decoding.
    pub fn fused_channels(&self) -> usize {
        match self.mode {
            FusionMode::Middle => self.d_v,
            FusionMode::Late => 0,
            FusionMode::Hierarchical => self.c_mid,
        }
    }

    /// (input, output) channels of decoder level `l` (1-based, from the bottleneck up).
    fn dec_channels(&self, l: usize) -> (usize, usize) {
        let d = self.depth;
        let cin = if l == 1 {
            self.c_bottleneck() + self.fused_channels()
        } else {
            2 * self.enc_channels(d - l + 1)
        };
        let cout = if l == d { self.c_out } else { self.enc_channels(d - l) };
        (cin, cout)
    }
}

/// Batch normalization mode for a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    /// Normalize with the statistics of the current batch (training).
    Batch,
    /// Normalize with the stored running statistics (inference).
    Running,
}

/// Per-channel batch statistics observed at one norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStat<T> {
    pub layer: String,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Graph handles produced by [`Separator::forward`].
#[derive(Clone, Debug)]
pub struct ForwardVars<T> {
    /// `[Q,1,T,F]`, one mask per query.
    pub mask: Var,
    /// Encoder output before any fusion, `[N,C_b,h,w]`.
    pub bottleneck: Var,
    /// Alignment head output `[N,d_a]`.
    pub pooled: Var,
    /// Batch statistics seen in [`Norm::Batch`] mode; empty otherwise.
    pub stats: Vec<BatchStat<T>>,
}

/// Plain-value result of [`Separator::infer`].
#[derive(Clone, Debug)]
pub struct Inference<T> {
    pub masks: Vec<Mask<T>>,
    pub bottleneck: Tensor<T>,
    pub pooled: Vec<Vec<T>>,
}

/// Trainable parameter counts by component.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModelSummary {
    pub mode: FusionMode,
    pub encoder: usize,
    pub decoder: usize,
    pub middle_head: usize,
    pub late_head: usize,
    pub proj1: usize,
    pub proj2: usize,
    pub align_head: usize,
    pub total: usize,
}

impl fmt::Display for ModelSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "fusion      {}", self.mode)?;
        for (name, n) in [
            ("encoder", self.encoder),
            ("decoder", self.decoder),
            ("middle_head", self.middle_head),
            ("late_head", self.late_head),
            ("proj1", self.proj1),
            ("proj2", self.proj2),
            ("align_head", self.align_head),
        ] {
            writeln!(f, "{name:<11} {n}")?;
        }
        write!(f, "total       {}", self.total)
    }
}

/// Separator weights, running norm statistics and the config they belong to.
#[derive(Clone, Debug)]
pub struct Separator<T> {
    cfg: SeparatorConfig,
    params: ParamStore<T>,
    running: ParamStore<T>,
}

const RUNNING_PREFIX: &str = "running.";

fn he<T: Real>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape.to_vec(), |_| {
        let z: f64 = StandardNormal.sample(rng);
        T::c(std * z)
    })
}

fn lecun<T: Real>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let std = (1.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape.to_vec(), |_| {
        let z: f64 = StandardNormal.sample(rng);
        T::c(std * z)
    })
}

impl<T: Real> Separator<T> {
    /// Fresh model: He-normal conv kernels, unit norm gains, zero biases.
    pub fn new(cfg: SeparatorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let mut running = ParamStore::new();
        let k2 = KERNEL * KERNEL;
        let mut norm_layer = |p: &mut ParamStore<T>, name: &str, c: usize| {
            p.insert(format!("{name}.gamma"), Tensor::full([c], T::one()));
            p.insert(format!("{name}.beta"), Tensor::zeros([c]));
            running.insert(format!("{RUNNING_PREFIX}{name}.mean"), Tensor::zeros([c]));
            running.insert(format!("{RUNNING_PREFIX}{name}.var"), Tensor::full([c], T::one()));
        };
        for l in 1..=cfg.depth {
            let cin = if l == 1 { 1 } else { cfg.enc_channels(l - 1) };
            let cout = cfg.enc_channels(l);
            p.insert(format!("enc{l}.w"), he(&mut rng, &[cout, cin, KERNEL, KERNEL], cin * k2));
            if l == 1 {
                p.insert("enc1.b", Tensor::zeros([cout]));
            } else {
                norm_layer(&mut p, &format!("enc{l}"), cout);
            }
        }
        for l in 1..=cfg.depth {
            let (cin, cout) = cfg.dec_channels(l);
            // each output pixel of a stride-2 transposed conv sees k^2/4 taps per input channel
            let fan_in = cin * k2 / (STRIDE * STRIDE);
            p.insert(format!("dec{l}.w"), he(&mut rng, &[cin, cout, KERNEL, KERNEL], fan_in));
            norm_layer(&mut p, &format!("dec{l}"), cout);
        }
        if cfg.mode == FusionMode::Middle {
            p.insert("head.w", lecun(&mut rng, &[1, cfg.c_out, 1, 1], cfg.c_out));
            p.insert("head.b", Tensor::zeros([1]));
        }
        if cfg.mode.fuses_late() {
            p.insert("proj1.w", lecun(&mut rng, &[cfg.c_out, cfg.d_v], cfg.d_v));
            p.insert("proj1.b", Tensor::zeros([cfg.c_out]));
            p.insert("late.b", Tensor::zeros([1]));
        }
        if cfg.mode == FusionMode::Hierarchical {
            p.insert("proj2.w", lecun(&mut rng, &[cfg.c_mid, cfg.d_v], cfg.d_v));
            p.insert("proj2.b", Tensor::zeros([cfg.c_mid]));
        }
        let cb = cfg.c_bottleneck();
        p.insert("align.w", lecun(&mut rng, &[cfg.d_a, cb], cb));
        p.insert("align.b", Tensor::zeros([cfg.d_a]));
        Ok(Separator { cfg, params: p, running })
    }

    pub fn config(&self) -> &SeparatorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn running_stats(&self) -> &ParamStore<T> {
        &self.running
    }

    /// Weights and running statistics in one store, for checkpointing.
    pub fn to_store(&self) -> ParamStore<T> {
        let mut all = self.params.clone();
        for (k, v) in self.running.iter() {
            all.insert(k, v.clone());
        }
        all
    }

    /// Inverse of [`to_store`](Self::to_store); every expected tensor must be
    /// present with the expected shape.
    pub fn from_store(cfg: SeparatorConfig, store: ParamStore<T>) -> Result<Self> {
        let template = Separator::<T>::new(cfg, 0)?;
        let mut params = ParamStore::new();
        let mut running = ParamStore::new();
        let expected = template.params.iter().chain(template.running.iter());
        let mut n_expected = 0;
        for (name, t) in expected {
            n_expected += 1;
            let got = store
                .get(name)
                .ok_or_else(|| input_err!("checkpoint lacks tensor `{name}`"))?;
            if got.shape() != t.shape() {
                return Err(input_err!(
                    "checkpoint tensor `{name}` has shape {:?}, config expects {:?}",
                    got.shape(),
                    t.shape()
                ));
            }
            if name.starts_with(RUNNING_PREFIX) {
                running.insert(name, got.clone());
            } else {
                params.insert(name, got.clone());
            }
        }
        if store.len() != n_expected {
            return Err(input_err!(
                "checkpoint holds {} tensors, config expects {n_expected}",
                store.len()
            ));
        }
        Ok(Separator {
            cfg: template.cfg,
            params,
            running,
        })
    }

    /// Fold observed batch statistics into the running estimates.
    pub fn absorb_stats(&mut self, stats: &[BatchStat<T>]) -> Result<()> {
        let mom = T::c(self.cfg.bn_momentum);
        let mut next = ParamStore::new();
        for (name, t) in self.running.iter() {
            next.insert(name, t.clone());
        }
        for s in stats {
            for (suffix, fresh) in [("mean", &s.mean), ("var", &s.var)] {
                let key = format!("{RUNNING_PREFIX}{}.{suffix}", s.layer);
                let old = self
                    .running
                    .get(&key)
                    .ok_or_else(|| dim_err!("no running statistic `{key}`"))?;
                if old.numel() != fresh.len() {
                    return Err(dim_err!("statistic `{key}` has {} channels, got {}", old.numel(), fresh.len()));
                }
                let data = old
                    .data()
                    .iter()
                    .zip(fresh.iter())
                    .map(|(&o, &f)| (T::one() - mom) * o + mom * f)
                    .collect();
                next.insert(key, Tensor::new(old.shape().to_vec(), data)?);
            }
        }
        self.running = next;
        Ok(())
    }

    pub fn summary(&self) -> ModelSummary {
        let count = |pred: &dyn Fn(&str) -> bool| -> usize {
            self.params
                .iter()
                .filter(|(n, _)| pred(n))
                .map(|(_, t)| t.numel())
                .sum()
        };
        let encoder = count(&|n| n.starts_with("enc"));
        let decoder = count(&|n| n.starts_with("dec"));
        let middle_head = count(&|n| n.starts_with("head."));
        let late_head = count(&|n| n.starts_with("late."));
        let proj1 = count(&|n| n.starts_with("proj1."));
        let proj2 = count(&|n| n.starts_with("proj2."));
        let align_head = count(&|n| n.starts_with("align."));
        ModelSummary {
            mode: self.cfg.mode,
            encoder,
            decoder,
            middle_head,
            late_head,
            proj1,
            proj2,
            align_head,
            total: self.params.num_scalars(),
        }
    }

    fn norm(&self, g: &mut Graph<T>, b: &Bound, x: Var, layer: &str, mode: Norm, stats: &mut Vec<BatchStat<T>>) -> Result<Var> {
        let gamma = b.get(&format!("{layer}.gamma"))?;
        let beta = b.get(&format!("{layer}.beta"))?;
        match mode {
            Norm::Batch => {
                stats.push(channel_stats(g.value(x), layer)?);
                g.batch_norm(x, gamma, beta)
            }
            Norm::Running => {
                // y = s*x + (beta - s*mean) with s = gamma / sqrt(var + eps),
                // realised as a diagonal 1x1 conv; inference only, so the
                // affine coefficients are constants.
                let mean = self.running_get(layer, "mean")?;
                let var = self.running_get(layer, "var")?;
                let (gd, bd) = (g.value(gamma).data().to_vec(), g.value(beta).data().to_vec());
                let c = gd.len();
                let eps = T::c(BATCH_NORM_EPS);
                let s: Vec<T> = (0..c).map(|i| gd[i] / (var[i] + eps).sqrt()).collect();
                let kernel = Tensor::from_fn([c, c, 1, 1], |i| if i / c == i % c { s[i / c] } else { T::zero() });
                let shift = Tensor::new([c], (0..c).map(|i| bd[i] - s[i] * mean[i]).collect())?;
                let k = g.constant(kernel)?;
                let sh = g.constant(shift)?;
                let y = g.conv2d(x, k, 1, 0)?;
                g.channel_bias(y, sh)
            }
        }
    }

    fn running_get(&self, layer: &str, what: &str) -> Result<&[T]> {
        let key = format!("{RUNNING_PREFIX}{layer}.{what}");
        self.running
            .get(&key)
            .map(Tensor::data)
            .ok_or_else(|| dim_err!("no running statistic `{key}`"))
    }

    /// Record a forward pass on `g`.
    ///
    /// `x` is the `[N,1,T,F]` network input, `queries[q]` names the mixture
    /// row that query `q` separates and `emb` holds the `[Q,d_v]` query
    /// embeddings. `params` must come from binding [`params`](Self::params).
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        params: &Bound,
        x: Var,
        queries: &[usize],
        emb: Var,
        norm: Norm,
    ) -> Result<ForwardVars<T>> {
        let cfg = &self.cfg;
        let [n, c, t, f] = g.value(x).dims4("separator input")?;
        if c != 1 || t != cfg.n_frames || f != cfg.n_freq {
            return Err(config_err!(
                "separator built for [N,1,{},{}], got {:?}",
                cfg.n_frames,
                cfg.n_freq,
                g.shape(x)
            ));
        }
        if g.shape(emb) != [queries.len(), cfg.d_v] {
            return Err(config_err!(
                "expected [{}, {}] query embeddings, got {:?}",
                queries.len(),
                cfg.d_v,
                g.shape(emb)
            ));
        }
        if let Some(&q) = queries.iter().find(|&&q| q >= n) {
            return Err(input_err!("query refers to mixture {q} of {n}"));
        }
        let mut stats = Vec::new();
        let skips = self.encode(g, params, x, norm, &mut stats)?;
        let bottleneck = skips[cfg.depth - 1];
        let pooled = self.align_head(g, params, bottleneck)?;

        // decoder, once per query
        let (bh, bw) = cfg.bottleneck_hw();
        let mut h = g.gather_rows(bottleneck, queries)?;
        match cfg.mode {
            FusionMode::Middle => {
                let tiled = g.tile(emb, bh, bw)?;
                h = g.concat_channels(h, tiled)?;
            }
            FusionMode::Hierarchical => {
                let e2 = g.linear(emb, params.get("proj2.w")?, params.get("proj2.b")?)?;
                let tiled = g.tile(e2, bh, bw)?;
                h = g.concat_channels(h, tiled)?;
            }
            FusionMode::Late => {}
        }
        for l in 1..=cfg.depth {
            h = g.conv_transpose2d(h, params.get(&format!("dec{l}.w"))?, STRIDE, PAD)?;
            h = self.norm(g, params, h, &format!("dec{l}"), norm, &mut stats)?;
            h = g.relu(h)?;
            if l < cfg.depth {
                let skip = g.gather_rows(skips[cfg.depth - l - 1], queries)?;
                h = g.concat_channels(h, skip)?;
            }
        }

        let logits = if cfg.mode.fuses_late() {
            let e1 = g.linear(emb, params.get("proj1.w")?, params.get("proj1.b")?)?;
            let s = g.channel_weighted_sum(h, e1)?;
            g.channel_bias(s, params.get("late.b")?)?
        } else {
            let s = g.conv2d(h, params.get("head.w")?, 1, 0)?;
            g.channel_bias(s, params.get("head.b")?)?
        };
        let mask = g.sigmoid(logits)?;
        Ok(ForwardVars {
            mask,
            bottleneck,
            pooled,
            stats,
        })
    }

    /// Encoder levels `1..=depth`; the last one is the bottleneck.
    fn encode(&self, g: &mut Graph<T>, params: &Bound, x: Var, norm: Norm, stats: &mut Vec<BatchStat<T>>) -> Result<Vec<Var>> {
        let mut levels = Vec::with_capacity(self.cfg.depth);
        let mut h = x;
        for l in 1..=self.cfg.depth {
            h = g.conv2d(h, params.get(&format!("enc{l}.w"))?, STRIDE, PAD)?;
            h = if l == 1 {
                g.channel_bias(h, params.get("enc1.b")?)?
            } else {
                self.norm(g, params, h, &format!("enc{l}"), norm, stats)?
            };
            h = g.leaky_relu(h, T::c(ENCODER_SLOPE))?;
            levels.push(h);
        }
        Ok(levels)
    }

    fn align_head(&self, g: &mut Graph<T>, params: &Bound, bottleneck: Var) -> Result<Var> {
        let pooled = g.global_avg_pool(bottleneck)?;
        g.linear(pooled, params.get("align.w")?, params.get("align.b")?)
    }

    /// Pooled bottleneck features `[N,d_a]` of `input` with running
    /// statistics; the decoder is not run.
    pub fn pooled(&self, input: &Tensor<T>) -> Result<Vec<Vec<T>>> {
        let [_, c, t, f] = input.dims4("separator input")?;
        if c != 1 || t != self.cfg.n_frames || f != self.cfg.n_freq {
            return Err(config_err!(
                "separator built for [N,1,{},{}], got {:?}",
                self.cfg.n_frames,
                self.cfg.n_freq,
                input.shape()
            ));
        }
        let mut g = Graph::new();
        let b = self.params.bind_frozen(&mut g)?;
        let x = g.constant(input.clone())?;
        let levels = self.encode(&mut g, &b, x, Norm::Running, &mut Vec::new())?;
        let p = self.align_head(&mut g, &b, levels[self.cfg.depth - 1])?;
        Ok(g.value(p).data().chunks(self.cfg.d_a).map(<[T]>::to_vec).collect())
    }

    /// Frozen inference with running statistics. `input` is `[N,1,T,F]`;
    /// each query is `(mixture row, embedding)`.
    pub fn infer(&self, input: &Tensor<T>, queries: &[(usize, Vec<T>)]) -> Result<Inference<T>> {
        if queries.is_empty() {
            return Err(input_err!("inference needs at least one query"));
        }
        let mut g = Graph::new();
        let b = self.params.bind_frozen(&mut g)?;
        let x = g.constant(input.clone())?;
        let rows: Vec<usize> = queries.iter().map(|q| q.0).collect();
        let mut e = Vec::with_capacity(queries.len() * self.cfg.d_v);
        for (_, v) in queries {
            if v.len() != self.cfg.d_v {
                return Err(config_err!("query embedding has {} dims, expected {}", v.len(), self.cfg.d_v));
            }
            e.extend_from_slice(v);
        }
        let e = g.constant(Tensor::new([queries.len(), self.cfg.d_v], e)?)?;
        let out = self.forward(&mut g, &b, x, &rows, e, Norm::Running)?;
        let (t, f) = (self.cfg.n_frames, self.cfg.n_freq);
        let masks = g
            .value(out.mask)
            .data()
            .chunks(t * f)
            .map(|m| Mask::new(Grid::new(t, f, m.to_vec())?))
            .collect::<Result<Vec<_>>>()?;
        let pooled = g
            .value(out.pooled)
            .data()
            .chunks(self.cfg.d_a)
            .map(<[T]>::to_vec)
            .collect();
        Ok(Inference {
            masks,
            bottleneck: g.value(out.bottleneck).clone(),
            pooled,
        })
    }
}

/// Per-channel mean and biased variance over N, H, W.
fn channel_stats<T: Real>(x: &Tensor<T>, layer: &str) -> Result<BatchStat<T>> {
    let [n, c, h, w] = x.dims4("batch statistics")?;
    let p = h * w;
    let m = T::from_usize_lossy(n * p);
    let d = x.data();
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ci in 0..c {
        let planes = || (0..n).flat_map(move |ni| d[(ni * c + ci) * p..][..p].iter().copied());
        let mu = planes().sum::<T>() / m;
        mean[ci] = mu;
        var[ci] = planes().map(|v| (v - mu) * (v - mu)).sum::<T>() / m;
    }
    Ok(BatchStat {
        layer: layer.to_string(),
        mean,
        var,
    })
}
