use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::bench::{stack, Frontend};
use super::{EvalTable, ExperimentConfig, Objective};
use crate::embedders::{ProxyClap, VisualEmbedder};
use crate::error::{input_err, Error, Result};
use crate::ndgrad::{checkpoint, Adam, AdamConfig, Graph, ParamStore, Tensor};
use crate::plot::{scatter, Point};
use crate::separator::{align_loss, sep_loss, total_loss, Norm, Separator};
use crate::synthband::{BatchSampler, MixturePair, Split};

/// Mixed into the seed of the batch stream so it differs from the weight
/// initialization stream.
const DATA_STREAM: u64 = 0x6d69_782d_7374_726d;

/// Losses of one optimizer step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub sep: f64,
    /// Absent when the objective skips alignment.
    pub align: Option<f64>,
    pub total: f64,
}

#[derive(Debug)]
pub struct ExperimentRun {
    pub config: ExperimentConfig,
    pub trace: Vec<LossRecord>,
    /// Epoch checkpoints still on disk, oldest first.
    pub checkpoints: Vec<PathBuf>,
    pub model: Separator<f64>,
    pub eval: Option<EvalTable>,
}

/// Configured data source, front end and frozen embedders.
#[derive(Debug)]
pub struct Lab {
    pub cfg: ExperimentConfig,
    pub sampler: BatchSampler,
    pub frontend: Frontend,
    pub visual: VisualEmbedder,
    pub clap: ProxyClap,
}

impl Lab {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let sampler = BatchSampler::new(cfg.catalog()?, cfg.sampler.clone())?;
        let frontend = Frontend::new(&cfg)?;
        let visual = VisualEmbedder::new(sampler.catalog().len(), &cfg.visual)?;
        let clap = ProxyClap::new(cfg.sampler.sample_rate, &cfg.clap)?;
        Ok(Lab {
            cfg,
            sampler,
            frontend,
            visual,
            clap,
        })
    }

    /// Learning rate in effect during `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let t = &self.cfg.train;
        if epoch >= t.decay_epoch {
            t.lr * t.decay_factor
        } else {
            t.lr
        }
    }

    /// Mix-and-separate training. With `out`, the config snapshot, loss CSV
    /// and plot, epoch checkpoints and `model.ckpt` are written there.
    pub fn train(&self, out: Option<&Path>) -> Result<ExperimentRun> {
        let cfg = &self.cfg;
        let t = &cfg.train;
        let mut model = Separator::new(cfg.separator.clone(), t.seed)?;
        let mut adam = Adam::new(AdamConfig {
            lr: t.lr,
            ..AdamConfig::default()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(t.seed ^ DATA_STREAM);
        let ckpt_dir = out.map(|o| o.join("checkpoints"));
        if let Some(o) = out {
            create_dir(o)?;
            write_text(&o.join("config.toml"), &cfg.to_toml())?;
        }
        if let Some(d) = &ckpt_dir {
            create_dir(d)?;
        }
        let mut trace = Vec::with_capacity(cfg.total_steps());
        let mut checkpoints: Vec<PathBuf> = Vec::new();
        let mut step = 0;
        for epoch in 0..t.epochs {
            adam.set_lr(self.lr_at(epoch));
            for _ in 0..t.steps_per_epoch {
                let batch = self.sampler.sample_batch(&mut rng, t.batch, Split::Train)?;
                let rec = self
                    .step(&mut model, &mut adam, &batch, step, epoch)
                    .map_err(|e| match e {
                        Error::Numeric(m) => {
                            log::error!("step {step}: {m}");
                            Error::Diverged {
                                step,
                                checkpoint: checkpoints.last().cloned(),
                            }
                        }
                        other => other,
                    })?;
                trace.push(rec);
                step += 1;
            }
            let recent = &trace[trace.len() - t.steps_per_epoch..];
            let mean = |f: fn(&LossRecord) -> f64| recent.iter().map(f).sum::<f64>() / recent.len() as f64;
            log::info!(
                "epoch {}/{} lr {:.1e} sep {:.4} total {:.4}",
                epoch + 1,
                t.epochs,
                adam.lr(),
                mean(|r| r.sep),
                mean(|r| r.total)
            );
            if let Some(d) = &ckpt_dir {
                let p = d.join(format!("epoch_{:03}.ckpt", epoch + 1));
                checkpoint::save(&model.to_store(), &p)?;
                checkpoints.push(p);
                if t.keep_checkpoints > 0 && checkpoints.len() > t.keep_checkpoints {
                    let old = checkpoints.remove(0);
                    fs::remove_file(&old).map_err(|e| Error::io(&old, e))?;
                }
            }
        }
        if let Some(o) = out {
            checkpoint::save(&model.to_store(), &o.join("model.ckpt"))?;
            write_loss_csv(&o.join("loss.csv"), &trace)?;
            write_text(&o.join("loss.svg"), &loss_svg(&trace))?;
        }
        Ok(ExperimentRun {
            config: cfg.clone(),
            trace,
            checkpoints,
            model,
            eval: None,
        })
    }

    fn step(
        &self,
        model: &mut Separator<f64>,
        adam: &mut Adam<f64>,
        batch: &[MixturePair],
        step: usize,
        epoch: usize,
    ) -> Result<LossRecord> {
        let k = self.cfg.sampler.n_sources;
        let b = batch.len();
        let mixes = batch
            .iter()
            .map(|m| self.frontend.warped(&m.mixture))
            .collect::<Result<Vec<_>>>()?;
        // queries are source-major: query s*b + i separates source s of mixture i
        let mut queries = Vec::with_capacity(k * b);
        let mut emb = Vec::with_capacity(k * b * self.cfg.separator.d_v);
        let mut targets = Vec::with_capacity(k);
        for s in 0..k {
            let mags = batch
                .iter()
                .map(|m| self.frontend.warped(&m.sources[s].waveform))
                .collect::<Result<Vec<_>>>()?;
            targets.push(stack(&mags, |x| x.data().to_vec())?);
            for (i, m) in batch.iter().enumerate() {
                queries.push(i);
                emb.extend_from_slice(self.visual.embed(m.sources[s].class_id)?);
            }
        }
        let mixture_mag = stack(queries.iter().map(|&i| &mixes[i]), |x| x.data().to_vec())?;

        let mut g = Graph::new();
        let params = model.params().bind(&mut g)?;
        let x = g.constant(self.frontend.input_tensor(&mixes)?)?;
        let e = g.constant(Tensor::new([k * b, self.cfg.separator.d_v], emb)?)?;
        let out = model.forward(&mut g, &params, x, &queries, e, Norm::Batch)?;
        let xm = g.constant(mixture_mag)?;
        let xhat = g.mul(out.mask, xm)?;
        let mut preds = Vec::with_capacity(k);
        let mut tvars = Vec::with_capacity(k);
        for (s, tgt) in targets.into_iter().enumerate() {
            let rows: Vec<usize> = (s * b..(s + 1) * b).collect();
            preds.push(g.gather_rows(xhat, &rows)?);
            tvars.push(g.constant(tgt)?);
        }
        let sep = sep_loss(&mut g, &preds, &tvars)?;
        let (loss, align) = match self.cfg.train.objective {
            Objective::SepOnly => (sep, None),
            Objective::Total => {
                let mut z = Vec::with_capacity(b * self.clap.dim());
                for m in batch {
                    z.extend(self.clap.embed(&m.mixture)?);
                }
                let z = g.constant(Tensor::new([b, self.clap.dim()], z)?)?;
                let a = align_loss(&mut g, out.pooled, z)?;
                (total_loss(&mut g, sep, a, self.cfg.separator.lambda)?, Some(a))
            }
        };
        let rec = LossRecord {
            step,
            epoch,
            lr: adam.lr(),
            sep: g.value(sep).item(),
            align: align.map(|a| g.value(a).item()),
            total: g.value(loss).item(),
        };
        let grads = g.backward(loss)?;
        let grads = ParamStore::collect_grads(&params, &grads);
        adam.step(model.params_mut(), &grads)?;
        model.absorb_stats(&out.stats)?;
        Ok(rec)
    }
}

/// Load a model written by [`Lab::train`] (or any checkpoint) for `cfg`.
pub fn load_model(cfg: &ExperimentConfig, path: &Path) -> Result<Separator<f64>> {
    if !path.is_file() {
        return Err(input_err!("checkpoint {} does not exist", path.display()));
    }
    Separator::from_store(cfg.separator.clone(), checkpoint::load(path)?)
}

pub fn write_loss_csv(path: &Path, trace: &[LossRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    w.write_record(["step", "epoch", "lr", "sep", "align", "total"])?;
    for r in trace {
        w.write_record([
            r.step.to_string(),
            r.epoch.to_string(),
            r.lr.to_string(),
            r.sep.to_string(),
            r.align.map(|a| a.to_string()).unwrap_or_default(),
            r.total.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn loss_svg(trace: &[LossRecord]) -> String {
    let pts: Vec<Point> = trace
        .iter()
        .map(|r| Point {
            x: r.step as f64,
            y: r.sep,
            label: String::new(),
        })
        .collect();
    scatter("separation loss", "step", "sep loss", &pts, None)
}

pub(crate) fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

pub(crate) fn write_text(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).map_err(|e| Error::io(p, e))
}
