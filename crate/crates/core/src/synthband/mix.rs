use rand::seq::index::sample;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{render_clip, Catalog, Clip};
use crate::dsp::Waveform;
use crate::error::{config_err, input_err, Result};

/// Mixture level above which sources and mixture are rescaled together.
const MIX_CEILING: f64 = 0.99;

/// Sum of two or more sources with a shared rescale.
#[derive(Clone, Debug, PartialEq)]
pub struct MixturePair {
    pub mixture: Waveform<f64>,
    /// Sources after the shared gain; they sum exactly to `mixture`.
    pub sources: Vec<Clip>,
    /// Gain applied to every source (1.0 when no rescale was needed).
    pub gain: f64,
}

impl MixturePair {
    pub fn class_ids(&self) -> Vec<usize> {
        self.sources.iter().map(|c| c.class_id).collect()
    }
}

/// Sample-wise sum. When the sum peaks above 0.99 every source is scaled by
/// the same factor first, so the mixture remains the exact sum.
pub fn make_mixture(clips: Vec<Clip>) -> Result<MixturePair> {
    let first = clips
        .first()
        .ok_or_else(|| input_err!("mixture needs at least one source"))?;
    let (len, sr) = (first.waveform.len(), first.waveform.sample_rate());
    for c in &clips {
        if c.waveform.len() != len || c.waveform.sample_rate() != sr {
            return Err(input_err!(
                "sources differ: {} samples at {} Hz vs {} samples at {} Hz",
                len,
                sr,
                c.waveform.len(),
                c.waveform.sample_rate()
            ));
        }
    }
    for (i, a) in clips.iter().enumerate() {
        if clips[..i].iter().any(|b| b.class_id == a.class_id) {
            return Err(input_err!("class {} appears twice in one mixture", a.class_id));
        }
    }
    let sum = |cs: &[Clip]| -> Vec<f64> {
        (0..len)
            .map(|i| cs.iter().map(|c| c.waveform.samples()[i]).sum())
            .collect()
    };
    let raw = sum(&clips);
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (sources, gain, mixed) = if peak > MIX_CEILING {
        let gain = MIX_CEILING / peak;
        let scaled: Vec<Clip> = clips
            .into_iter()
            .map(|c| Clip {
                waveform: c.waveform.scaled(gain),
                ..c
            })
            .collect();
        let mixed = sum(&scaled);
        (scaled, gain, mixed)
    } else {
        (clips, 1.0, raw)
    };
    Ok(MixturePair {
        mixture: Waveform::new(mixed, sr)?,
        sources,
        gain,
    })
}

/// `k` distinct class ids drawn uniformly from `0..n_classes`.
pub fn draw_classes(rng: &mut ChaCha8Rng, n_classes: usize, k: usize) -> Result<Vec<usize>> {
    if n_classes < 2 || n_classes < k {
        return Err(config_err!(
            "need at least {} classes to mix {k} sources, catalog has {n_classes}",
            k.max(2)
        ));
    }
    Ok(sample(rng, n_classes, k).into_vec())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Clip geometry shared by training and evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub sample_rate: u32,
    /// Rendered clip length before cropping.
    pub clip_s: f64,
    /// Samples kept per crop; sized so the STFT yields exactly T frames.
    pub crop_len: usize,
    pub n_sources: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            sample_rate: 8000,
            clip_s: 1.05,
            crop_len: 63 * 64 + 256,
            n_sources: 2,
        }
    }
}

/// Mix-and-separate batch source over a catalog.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    catalog: Catalog,
    cfg: SamplerConfig,
}

impl BatchSampler {
    pub fn new(catalog: Catalog, cfg: SamplerConfig) -> Result<Self> {
        if catalog.len() < 2 || catalog.len() < cfg.n_sources {
            return Err(config_err!(
                "catalog has {} classes, need at least {}",
                catalog.len(),
                cfg.n_sources.max(2)
            ));
        }
        if cfg.n_sources < 2 {
            return Err(config_err!("mixtures need at least 2 sources"));
        }
        let full = (cfg.clip_s * cfg.sample_rate as f64).round() as usize;
        if cfg.crop_len == 0 || cfg.crop_len > full {
            return Err(config_err!(
                "crop of {} samples does not fit a {}-sample clip",
                cfg.crop_len,
                full
            ));
        }
        catalog.validate(cfg.sample_rate)?;
        Ok(BatchSampler { catalog, cfg })
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    /// Render `class_id` with `seed` and crop it: random start for training,
    /// centred for test.
    pub fn render_crop(&self, class_id: usize, seed: u64, split: Split, rng: &mut ChaCha8Rng) -> Result<Clip> {
        let spec = self
            .catalog
            .get(class_id)
            .ok_or_else(|| input_err!("unknown class {class_id}"))?;
        let clip = render_clip(spec, seed, self.cfg.clip_s, self.cfg.sample_rate)?;
        let slack = clip.waveform.len() - self.cfg.crop_len;
        let start = match split {
            Split::Train => rng.random_range(0..=slack),
            Split::Test => slack / 2,
        };
        Ok(Clip {
            waveform: clip.waveform.crop(start, self.cfg.crop_len)?,
            ..clip
        })
    }

    /// One mixture of `classes` with the given per-source seeds.
    pub fn mixture(&self, classes: &[usize], seeds: &[u64], split: Split, rng: &mut ChaCha8Rng) -> Result<MixturePair> {
        let clips = classes
            .iter()
            .zip(seeds)
            .map(|(&c, &s)| self.render_crop(c, s, split, rng))
            .collect::<Result<Vec<_>>>()?;
        make_mixture(clips)
    }

    pub fn sample_batch(&self, rng: &mut ChaCha8Rng, batch: usize, split: Split) -> Result<Vec<MixturePair>> {
        (0..batch)
            .map(|_| {
                let classes = draw_classes(rng, self.catalog.len(), self.cfg.n_sources)?;
                let seeds: Vec<u64> = classes.iter().map(|_| rng.random()).collect();
                self.mixture(&classes, &seeds, split, rng)
            })
            .collect()
    }
}
