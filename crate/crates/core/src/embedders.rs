//! Frozen stand-ins for the pretrained visual and audio-semantic encoders.
//!
//! Neither embedder has trainable state; both are rebuilt bit-identically
//! from their config.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::{Grid, StftPlan, Waveform};
use crate::error::{config_err, input_err, Error, Result};
use crate::synthband::clip_seed;

/// Tries before giving up on an embedder seed that keeps classes apart.
const MAX_RESEEDS: u64 = 1000;

fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisualConfig {
    pub dim: usize,
    pub seed: u64,
    /// Upper bound on pairwise |cos| between class vectors.
    pub max_abs_cos: f64,
}

impl Default for VisualConfig {
    fn default() -> Self {
        VisualConfig {
            dim: 32,
            seed: 7,
            max_abs_cos: 0.7,
        }
    }
}

/// One fixed random unit vector per class.
#[derive(Clone, Debug, PartialEq)]
pub struct VisualEmbedder {
    vectors: Vec<Vec<f64>>,
    /// Seed actually used after any re-draws.
    effective_seed: u64,
}

impl VisualEmbedder {
    /// Draw class vectors from `cfg.seed`; if two classes come out closer
    /// than `max_abs_cos` the seed is bumped by one and the draw repeated.
    pub fn new(n_classes: usize, cfg: &VisualConfig) -> Result<Self> {
        if cfg.dim == 0 || n_classes == 0 {
            return Err(config_err!("visual embedder needs dim > 0 and at least one class"));
        }
        for bump in 0..MAX_RESEEDS {
            let seed = cfg.seed.wrapping_add(bump);
            let vectors: Vec<Vec<f64>> = (0..n_classes)
                .map(|c| {
                    let mut rng = ChaCha8Rng::seed_from_u64(clip_seed(c, seed));
                    let mut v = gaussian_vec(&mut rng, cfg.dim);
                    l2_normalize(&mut v);
                    v
                })
                .collect();
            let worst = max_abs_cos(&vectors);
            if worst < cfg.max_abs_cos {
                if bump > 0 {
                    log::info!("visual embedder seed {} -> {seed} (max |cos| {worst:.3})", cfg.seed);
                }
                return Ok(VisualEmbedder {
                    vectors,
                    effective_seed: seed,
                });
            }
        }
        Err(config_err!(
            "no seed within {MAX_RESEEDS} of {} keeps {n_classes} classes under |cos| {} at dim {}",
            cfg.seed,
            cfg.max_abs_cos,
            cfg.dim
        ))
    }

    pub fn embed(&self, class_id: usize) -> Result<&[f64]> {
        self.vectors
            .get(class_id)
            .map(Vec::as_slice)
            .ok_or_else(|| input_err!("unknown class {class_id} (have {})", self.vectors.len()))
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn n_classes(&self) -> usize {
        self.vectors.len()
    }

    pub fn effective_seed(&self) -> u64 {
        self.effective_seed
    }

    pub fn max_abs_cos(&self) -> f64 {
        max_abs_cos(&self.vectors)
    }
}

fn max_abs_cos(vs: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..vs.len() {
        for j in 0..i {
            worst = worst.max(cosine(&vs[i], &vs[j]).abs());
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClapConfig {
    pub n_bands: usize,
    /// Lowest filter edge; the top edge is Nyquist.
    pub fmin_hz: f64,
    pub window: usize,
    pub hop: usize,
    /// Added to band energies before the log; a silent input lands here.
    pub log_floor: f64,
    /// Seed of the fixed orthonormal projection.
    pub seed: u64,
}

impl Default for ClapConfig {
    fn default() -> Self {
        ClapConfig {
            n_bands: 16,
            fmin_hz: 50.0,
            window: 256,
            hop: 64,
            log_floor: 1e-6,
            seed: 11,
        }
    }
}

fn mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_inv(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Proxy audio-semantic encoder: log band energies from a triangular
/// mel-spaced filterbank, mean and std over frames, a fixed orthonormal
/// rotation, then unit norm.
#[derive(Debug)]
pub struct ProxyClap {
    cfg: ClapConfig,
    sample_rate: u32,
    plan: StftPlan<f64>,
    /// `[n_bands, n_bins]` triangle weights.
    bank: Grid<f64>,
    /// `[dim, dim]` orthonormal rows.
    rotation: Grid<f64>,
}

impl ProxyClap {
    pub fn new(sample_rate: u32, cfg: &ClapConfig) -> Result<Self> {
        let nyq = sample_rate as f64 / 2.0;
        if cfg.n_bands == 0 || !(cfg.fmin_hz >= 0.0 && cfg.fmin_hz < nyq) || cfg.log_floor <= 0.0 {
            return Err(config_err!(
                "bad filterbank: {} bands from {} Hz, floor {}",
                cfg.n_bands,
                cfg.fmin_hz,
                cfg.log_floor
            ));
        }
        let plan = StftPlan::new(cfg.window, cfg.hop)?;
        let n_bins = plan.n_bins();
        let df = sample_rate as f64 / cfg.window as f64;
        let (m0, m1) = (mel(cfg.fmin_hz), mel(nyq));
        let edges: Vec<f64> = (0..cfg.n_bands + 2)
            .map(|i| mel_inv(m0 + (m1 - m0) * i as f64 / (cfg.n_bands + 1) as f64))
            .collect();
        let bank = Grid::from_fn(cfg.n_bands, n_bins, |b, k| {
            let f = k as f64 * df;
            let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            }
        });
        for b in 0..cfg.n_bands {
            if bank.row(b).iter().all(|&w| w == 0.0) {
                return Err(config_err!(
                    "filter band {b} covers no FFT bin; use fewer bands or a longer window"
                ));
            }
        }
        let dim = 2 * cfg.n_bands;
        let rotation = random_orthonormal(dim, cfg.seed);
        Ok(ProxyClap {
            cfg: cfg.clone(),
            sample_rate,
            plan,
            bank,
            rotation,
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.cfg.n_bands
    }

    pub fn config(&self) -> &ClapConfig {
        &self.cfg
    }

    /// Pre-rotation features: per-band mean then per-band std of log energy.
    pub fn features(&self, w: &Waveform<f64>) -> Result<Vec<f64>> {
        if w.sample_rate() != self.sample_rate {
            return Err(input_err!(
                "embedder built for {} Hz, got {} Hz",
                self.sample_rate,
                w.sample_rate()
            ));
        }
        let spec = self.plan.stft(w)?;
        let nb = self.cfg.n_bands;
        let t = spec.n_frames();
        let mut logs = vec![0.0; t * nb];
        for f in 0..t {
            for b in 0..nb {
                let e: f64 = self
                    .bank
                    .row(b)
                    .iter()
                    .enumerate()
                    .filter(|(_, &wt)| wt > 0.0)
                    .map(|(k, &wt)| wt * spec.get(f, k).norm_sqr())
                    .sum();
                logs[f * nb + b] = (e + self.cfg.log_floor).ln();
            }
        }
        let mut out = vec![0.0; 2 * nb];
        for b in 0..nb {
            let mean = (0..t).map(|f| logs[f * nb + b]).sum::<f64>() / t as f64;
            let var = (0..t).map(|f| (logs[f * nb + b] - mean).powi(2)).sum::<f64>() / t as f64;
            out[b] = mean;
            out[nb + b] = var.sqrt();
        }
        Ok(out)
    }

    pub fn embed(&self, w: &Waveform<f64>) -> Result<Vec<f64>> {
        let feat = self.features(w)?;
        let d = self.dim();
        let mut z: Vec<f64> = (0..d).map(|i| cosine(self.rotation.row(i), &feat)).collect();
        l2_normalize(&mut z);
        Ok(z)
    }
}

/// Gram-Schmidt on a seeded Gaussian matrix; rows are orthonormal.
fn random_orthonormal(n: usize, seed: u64) -> Grid<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v = gaussian_vec(&mut rng, n);
        // two passes keep the basis orthogonal to rounding
        for _ in 0..2 {
            for r in &rows {
                let p = cosine(&v, r);
                for (x, y) in v.iter_mut().zip(r) {
                    *x -= p * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            l2_normalize(&mut v);
            rows.push(v);
        }
    }
    Grid::new(n, n, rows.concat()).expect("square")
}

/// `label,e0,e1,...` rows.
pub fn write_embeddings_csv(path: &Path, rows: &[(String, Vec<f64>)]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::io(path, e.into()))?;
    for (label, v) in rows {
        let mut rec = vec![label.clone()];
        rec.extend(v.iter().map(|x| format!("{x}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
