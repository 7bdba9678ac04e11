use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::bench::Benchmark;
use super::train::{create_dir, Lab};
use crate::dsp::{apply_mask, reconstruct, write_wav, Grid, Mask};
use crate::error::{Error, Result};
use crate::metrics::{bss_eval, BssEvalResult};
use crate::separator::Separator;

/// What produces the masks being scored.
#[derive(Clone, Copy, Debug)]
pub enum Estimator<'a> {
    Model(&'a Separator<f64>),
    /// The unprocessed mixture stands in for every source.
    Mixture,
    /// `clamp(|S_j| / |X|, 0, 1)` on the warped grid.
    IdealRatio,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRow {
    /// `None` on the overall row.
    pub class_id: Option<usize>,
    pub name: String,
    pub sdr_db: f64,
    pub sir_db: f64,
    pub sar_db: f64,
    pub n_clips: usize,
}

/// Per-class and overall means of capped SDR/SIR/SAR.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalTable {
    pub classes: Vec<EvalRow>,
    pub overall: EvalRow,
    pub test_hash: String,
}

impl EvalTable {
    pub fn class(&self, class_id: usize) -> Option<&EvalRow> {
        self.classes.iter().find(|r| r.class_id == Some(class_id))
    }

    /// `class_id,name,sdr,sir,sar,n_clips`, classes first, overall last.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        w.write_record(["class_id", "name", "sdr", "sir", "sar", "n_clips"])?;
        for r in self.classes.iter().chain([&self.overall]) {
            w.write_record([
                r.class_id.map(|c| c.to_string()).unwrap_or_else(|| "all".into()),
                r.name.clone(),
                format!("{:.6}", r.sdr_db),
                format!("{:.6}", r.sir_db),
                format!("{:.6}", r.sar_db),
                r.n_clips.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Default)]
struct Acc {
    sdr: f64,
    sir: f64,
    sar: f64,
    n: usize,
}

impl Acc {
    fn add(&mut self, m: &BssEvalResult) {
        self.sdr += m.sdr_db;
        self.sir += m.sir_db;
        self.sar += m.sar_db;
        self.n += 1;
    }

    fn row(&self, class_id: Option<usize>, name: String) -> EvalRow {
        let n = self.n.max(1) as f64;
        EvalRow {
            class_id,
            name,
            sdr_db: self.sdr / n,
            sir_db: self.sir / n,
            sar_db: self.sar / n,
            n_clips: self.n,
        }
    }
}

impl Lab {
    /// Separate every source of every test mixture, resynthesize with the
    /// mixture phase and score against the clean sources. With `examples`,
    /// the first `cfg.eval.examples` mixtures are written there as WAV.
    pub fn evaluate(&self, est: Estimator<'_>, bench: &Benchmark, examples: Option<&Path>) -> Result<EvalTable> {
        let cfg = &self.cfg.eval;
        if let Some(d) = examples {
            create_dir(d)?;
        }
        let mut per_class: BTreeMap<usize, Acc> = BTreeMap::new();
        let mut overall = Acc::default();
        for (c0, chunk) in bench.items.chunks(cfg.chunk).enumerate() {
            let masks: Vec<Vec<Mask<f64>>> = match est {
                Estimator::Model(model) => {
                    let input = self.frontend.input_tensor(chunk.iter().map(|it| &it.mix_mag))?;
                    let mut queries = Vec::new();
                    for (i, it) in chunk.iter().enumerate() {
                        for s in &it.pair.sources {
                            queries.push((i, self.visual.embed(s.class_id)?.to_vec()));
                        }
                    }
                    let mut all = model.infer(&input, &queries)?.masks.into_iter();
                    chunk
                        .iter()
                        .map(|it| all.by_ref().take(it.pair.sources.len()).collect())
                        .collect()
                }
                Estimator::Mixture => chunk
                    .iter()
                    .map(|it| {
                        let g = it.mix_mag.grid();
                        let ones = Grid::from_fn(g.rows(), g.cols(), |_, _| 1.0);
                        Ok(vec![Mask::new(ones)?; it.pair.sources.len()])
                    })
                    .collect::<Result<_>>()?,
                Estimator::IdealRatio => chunk
                    .iter()
                    .map(|it| {
                        it.source_mags
                            .iter()
                            .map(|s| {
                                let (x, sg) = (it.mix_mag.grid(), s.grid());
                                Mask::new(Grid::from_fn(x.rows(), x.cols(), |r, c| {
                                    let d = x.get(r, c);
                                    if d > 0.0 {
                                        (sg.get(r, c) / d).clamp(0.0, 1.0)
                                    } else {
                                        0.0
                                    }
                                }))
                            })
                            .collect()
                    })
                    .collect::<Result<_>>()?,
            };
            for (i, (it, ms)) in chunk.iter().zip(&masks).enumerate() {
                let refs: Vec<_> = it.pair.sources.iter().map(|s| s.waveform.clone()).collect();
                for (j, (src, m)) in it.pair.sources.iter().zip(ms).enumerate() {
                    let xhat = apply_mask(&it.mix_mag, m)?;
                    let w = reconstruct(&xhat, Some(&it.mix_spec))?;
                    let r = bss_eval(&refs, &w, j, cfg.filter_len)?.capped();
                    per_class.entry(src.class_id).or_default().add(&r);
                    overall.add(&r);
                    if let Some(d) = examples {
                        if c0 * cfg.chunk + i < cfg.examples {
                            let pair = bench.test_set.items[c0 * cfg.chunk + i].pair;
                            write_wav(&d.join(format!("pair{pair:04}_src{j}_est.wav")), &w)?;
                        }
                    }
                }
            }
        }
        let name = |c: usize| bench.class_names.get(c).cloned().unwrap_or_else(|| format!("class{c}"));
        Ok(EvalTable {
            classes: per_class.iter().map(|(&c, a)| a.row(Some(c), name(c))).collect(),
            overall: overall.row(None, "overall".into()),
            test_hash: bench.fingerprint.clone(),
        })
    }
}
