use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedders::{ClapConfig, VisualConfig};
use crate::error::{config_err, Error, Result};
use crate::metrics::{HcrConfig, ProbeConfig, YinConfig, DESK_FILTER_LEN};
use crate::separator::{FusionMode, SeparatorConfig};
use crate::synthband::{Catalog, SamplerConfig};

/// What the optimizer minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Separation plus `lambda` times alignment.
    Total,
    /// Separation only; the alignment loss is neither computed nor logged.
    SepOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr: f64,
    pub decay_factor: f64,
    /// 0-based epoch at whose start the learning rate is multiplied by
    /// `decay_factor`; equal to `epochs` means no decay.
    pub decay_epoch: usize,
    /// Mixtures per step.
    pub batch: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub seed: u64,
    pub objective: Objective,
    /// Newest epoch checkpoints kept on disk; 0 keeps all.
    pub keep_checkpoints: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            lr: 1e-3,
            decay_factor: 0.1,
            decay_epoch: 14,
            batch: 16,
            epochs: 20,
            steps_per_epoch: 100,
            seed: 0,
            objective: Objective::Total,
            keep_checkpoints: 3,
        }
    }
}

/// Spectrogram front end shared by training and evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub window: usize,
    pub hop: usize,
    /// Compress magnitudes with `ln(1 + x)` before the network. Masks are
    /// always applied to the uncompressed magnitude.
    pub log1p: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window: 256,
            hop: 64,
            log1p: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub test_items: usize,
    pub test_seed: u64,
    pub filter_len: usize,
    /// Mixtures per inference pass.
    pub chunk: usize,
    /// Separated examples written as WAV per evaluated run.
    pub examples: usize,
    pub probe_seed: u64,
    pub probe: ProbeConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            test_items: 200,
            test_seed: 2024,
            filter_len: DESK_FILTER_LEN,
            chunk: 8,
            examples: 2,
            probe_seed: 0,
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcousticConfig {
    pub seeds_per_class: u64,
    pub duration_s: f64,
    pub yin: YinConfig,
    pub hcr: HcrConfig,
}

impl Default for AcousticConfig {
    fn default() -> Self {
        AcousticConfig {
            seeds_per_class: 10,
            duration_s: 1.0,
            yin: YinConfig::default(),
            hcr: HcrConfig::default(),
        }
    }
}

/// Everything one experiment depends on. Serialized verbatim as the run's
/// config snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Instrument catalog file; the built-in catalog when absent.
    pub catalog: Option<PathBuf>,
    pub train: TrainSection,
    pub separator: SeparatorConfig,
    pub sampler: SamplerConfig,
    pub features: FeatureConfig,
    pub eval: EvalConfig,
    pub visual: VisualConfig,
    pub clap: ClapConfig,
    pub acoustic: AcousticConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// 8 kHz, 64x64 spectrograms, 2000 steps of 16 mixtures.
    pub fn desk() -> Self {
        ExperimentConfig {
            catalog: None,
            train: TrainSection::default(),
            separator: SeparatorConfig::default(),
            sampler: SamplerConfig::default(),
            features: FeatureConfig::default(),
            eval: EvalConfig::default(),
            visual: VisualConfig::default(),
            clap: ClapConfig::default(),
            acoustic: AcousticConfig::default(),
        }
    }

    /// Published schedule and STFT geometry: 11,625 Hz, window 1024, hop
    /// 256, 256x256 log-frequency input, depth 7, batch 32, lr 1e-4 decayed
    /// at epoch 60. Hours per epoch on a CPU.
    pub fn paper() -> Self {
        let mut c = Self::desk();
        c.sampler = SamplerConfig {
            sample_rate: 11_625,
            clip_s: 6.0,
            crop_len: 255 * 256 + 1024,
            n_sources: 2,
        };
        c.features = FeatureConfig {
            window: 1024,
            hop: 256,
            log1p: true,
        };
        c.separator.depth = 7;
        c.separator.n_frames = 256;
        c.separator.n_freq = 256;
        c.separator.d_v = 512;
        c.visual.dim = 512;
        c.clap.window = 1024;
        c.clap.hop = 256;
        c.train = TrainSection {
            lr: 1e-4,
            decay_factor: 0.1,
            decay_epoch: 60,
            batch: 32,
            epochs: 80,
            steps_per_epoch: 100,
            ..TrainSection::default()
        };
        c.eval.filter_len = 512;
        c
    }

    /// Desk geometry on a short schedule: 8 base channels, 500 steps of 8
    /// mixtures, decay at epoch 7. About two minutes per trained model on
    /// one core.
    pub fn quick() -> Self {
        let mut c = Self::desk();
        c.separator.base_channels = 8;
        c.train.batch = 8;
        c.train.epochs = 10;
        c.train.steps_per_epoch = 50;
        c.train.decay_epoch = 7;
        c
    }

    pub const PRESETS: [&'static str; 3] = ["desk", "quick", "paper"];

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "quick" => Ok(Self::quick()),
            "paper" => Ok(Self::paper()),
            other => Err(config_err!("unknown preset `{other}` (expected desk, quick or paper)")),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    /// Parse `text`, then apply `section.key=value` overrides in order.
    /// Values are read as TOML literals, falling back to bare strings.
    pub fn from_toml_with(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| config_err!("{e}"))?;
        for (key, value) in overrides {
            set_path(&mut table, key, value)?;
        }
        let cfg: ExperimentConfig = table.try_into().map_err(|e| config_err!("{e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_with(&text, overrides).map_err(|e| match e {
            Error::Config(m) => Error::Parse {
                path: path.to_path_buf(),
                message: m,
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        // every field is a table, number, string or bool
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn catalog(&self) -> Result<Catalog> {
        match &self.catalog {
            Some(p) => Catalog::load(p, self.sampler.sample_rate),
            None => Catalog::default_for(self.sampler.sample_rate),
        }
    }

    /// Frames produced by one crop.
    pub fn frames_per_crop(&self) -> usize {
        let f = &self.features;
        if self.sampler.crop_len < f.window || f.hop == 0 {
            return 0;
        }
        1 + (self.sampler.crop_len - f.window) / f.hop
    }

    pub fn total_steps(&self) -> usize {
        self.train.epochs * self.train.steps_per_epoch
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.train;
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(config_err!("train.lr must be positive, got {}", t.lr));
        }
        if !(t.decay_factor > 0.0 && t.decay_factor <= 1.0) {
            return Err(config_err!("train.decay_factor must lie in (0, 1], got {}", t.decay_factor));
        }
        if t.batch == 0 || t.epochs == 0 || t.steps_per_epoch == 0 {
            return Err(config_err!("train.batch, train.epochs and train.steps_per_epoch must be at least 1"));
        }
        if t.decay_epoch == 0 || t.decay_epoch > t.epochs {
            return Err(config_err!(
                "train.decay_epoch must lie in 1..={}, got {}",
                t.epochs,
                t.decay_epoch
            ));
        }
        self.separator.validate()?;
        let f = &self.features;
        if f.window < 2 || f.hop == 0 || f.hop > f.window {
            return Err(config_err!("features need window >= 2 and 1 <= hop <= window"));
        }
        if self.frames_per_crop() != self.separator.n_frames {
            return Err(config_err!(
                "a {}-sample crop gives {} frames at window {} hop {}, the separator expects {}",
                self.sampler.crop_len,
                self.frames_per_crop(),
                f.window,
                f.hop,
                self.separator.n_frames
            ));
        }
        if self.separator.n_freq > f.window / 2 + 1 {
            return Err(config_err!(
                "{} log-frequency bins exceed the {} linear bins of a {}-sample window",
                self.separator.n_freq,
                f.window / 2 + 1,
                f.window
            ));
        }
        if self.separator.d_v != self.visual.dim {
            return Err(config_err!(
                "separator.d_v = {} but visual.dim = {}",
                self.separator.d_v,
                self.visual.dim
            ));
        }
        if self.separator.d_a != 2 * self.clap.n_bands {
            return Err(config_err!(
                "separator.d_a = {} but the audio embedder yields {} dims (2 x clap.n_bands)",
                self.separator.d_a,
                2 * self.clap.n_bands
            ));
        }
        let e = &self.eval;
        if e.test_items == 0 || e.chunk == 0 || e.filter_len == 0 {
            return Err(config_err!("eval.test_items, eval.chunk and eval.filter_len must be at least 1"));
        }
        Ok(())
    }

    /// Copy with another fusion mode and alignment weight.
    pub fn cell(&self, mode: FusionMode, lambda: f64) -> Self {
        let mut c = self.clone();
        c.separator.mode = mode;
        c.separator.lambda = lambda;
        c
    }
}

fn set_path(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err!("malformed override key `{key}`"));
    }
    let value = parse_value(raw);
    let mut t = table;
    for p in &parts[..parts.len() - 1] {
        let entry = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| config_err!("override `{key}`: `{p}` is not a section"))?;
    }
    t.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match probe.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}
