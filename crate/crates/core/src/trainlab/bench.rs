use std::path::Path;

use super::ExperimentConfig;
use crate::dsp::{magnitude, ComplexSpectrogram, LogFreqWarp, LogMagSpectrogram, StftPlan, Waveform};
use crate::error::{input_err, Result};
use crate::ndgrad::Tensor;
use crate::synthband::{BatchSampler, MixturePair, TestSet};

/// STFT, magnitude and log-frequency warp, plus the network input transform.
#[derive(Debug)]
pub struct Frontend {
    plan: StftPlan<f64>,
    warp: LogFreqWarp,
    log1p: bool,
}

impl Frontend {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let f = &cfg.features;
        let plan = StftPlan::new(f.window, f.hop)?;
        let warp = LogFreqWarp::new(plan.n_bins(), cfg.separator.n_freq)?;
        Ok(Frontend {
            plan,
            warp,
            log1p: f.log1p,
        })
    }

    pub fn analyze(&self, w: &Waveform<f64>) -> Result<(ComplexSpectrogram<f64>, LogMagSpectrogram<f64>)> {
        let spec = self.plan.stft(w)?;
        let x = self.warp.forward(&magnitude(&spec))?;
        Ok((spec, x))
    }

    pub fn warped(&self, w: &Waveform<f64>) -> Result<LogMagSpectrogram<f64>> {
        Ok(self.analyze(w)?.1)
    }

    /// Network input values for one spectrogram.
    pub fn input_values(&self, x: &LogMagSpectrogram<f64>) -> Vec<f64> {
        if self.log1p {
            x.data().iter().map(|v| v.ln_1p()).collect()
        } else {
            x.data().to_vec()
        }
    }

    /// Stack spectrograms into a `[N,1,T,F]` network input.
    pub fn input_tensor<'a>(&self, xs: impl IntoIterator<Item = &'a LogMagSpectrogram<f64>>) -> Result<Tensor<f64>> {
        stack(xs, |x| self.input_values(x))
    }
}

/// Stack spectrograms as `[N,1,T,F]`, mapping each through `values`.
pub(crate) fn stack<'a>(
    xs: impl IntoIterator<Item = &'a LogMagSpectrogram<f64>>,
    values: impl Fn(&LogMagSpectrogram<f64>) -> Vec<f64>,
) -> Result<Tensor<f64>> {
    let mut data = Vec::new();
    let mut n = 0;
    let mut tf = (0, 0);
    for x in xs {
        tf = (x.n_frames(), x.n_bins());
        data.extend(values(x));
        n += 1;
    }
    Tensor::new([n, 1, tf.0, tf.1], data)
}

/// One frozen test mixture, analyzed once.
#[derive(Debug)]
pub struct BenchItem {
    pub pair: MixturePair,
    pub mix_spec: ComplexSpectrogram<f64>,
    pub mix_mag: LogMagSpectrogram<f64>,
    /// Warped magnitude of each clean source.
    pub source_mags: Vec<LogMagSpectrogram<f64>>,
}

/// The frozen test set shared by every evaluated model.
#[derive(Debug)]
pub struct Benchmark {
    pub test_set: TestSet,
    pub items: Vec<BenchItem>,
    pub fingerprint: String,
    pub class_names: Vec<String>,
}

impl Benchmark {
    /// Render the test set described by `cfg.eval`.
    pub fn generate(cfg: &ExperimentConfig, sampler: &BatchSampler, frontend: &Frontend) -> Result<Self> {
        let ts = TestSet::generate(
            sampler.catalog().len(),
            cfg.sampler.n_sources,
            cfg.eval.test_items,
            cfg.eval.test_seed,
        )?;
        let mixtures = ts.render(sampler)?;
        Self::build(ts, mixtures, sampler, frontend)
    }

    /// Read a test set written by [`TestSet::write`], checking every clip
    /// against the configured geometry.
    pub fn load(dir: &Path, cfg: &ExperimentConfig, sampler: &BatchSampler, frontend: &Frontend) -> Result<Self> {
        let (ts, mixtures) = TestSet::load(dir)?;
        let mut bad = Vec::new();
        for (it, m) in ts.items.iter().zip(&mixtures) {
            for (j, s) in m.sources.iter().enumerate() {
                let w = &s.waveform;
                if w.len() != cfg.sampler.crop_len || w.sample_rate() != cfg.sampler.sample_rate {
                    bad.push(format!(
                        "pair{:04}_src{j} ({} samples at {} Hz)",
                        it.pair,
                        w.len(),
                        w.sample_rate()
                    ));
                } else if s.class_id >= sampler.catalog().len() {
                    bad.push(format!("pair{:04}_src{j} (class {})", it.pair, s.class_id));
                }
            }
        }
        if !bad.is_empty() {
            return Err(input_err!(
                "test clips do not match the configuration ({} samples at {} Hz, {} classes): {}",
                cfg.sampler.crop_len,
                cfg.sampler.sample_rate,
                sampler.catalog().len(),
                bad.join(", ")
            ));
        }
        Self::build(ts, mixtures, sampler, frontend)
    }

    fn build(test_set: TestSet, mixtures: Vec<MixturePair>, sampler: &BatchSampler, frontend: &Frontend) -> Result<Self> {
        let fingerprint = test_set.fingerprint(&mixtures);
        let items = mixtures
            .into_iter()
            .map(|pair| {
                let (mix_spec, mix_mag) = frontend.analyze(&pair.mixture)?;
                let source_mags = pair
                    .sources
                    .iter()
                    .map(|s| frontend.warped(&s.waveform))
                    .collect::<Result<_>>()?;
                Ok(BenchItem {
                    pair,
                    mix_spec,
                    mix_mag,
                    source_mags,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Benchmark {
            test_set,
            items,
            fingerprint,
            class_names: sampler.catalog().names().iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}
