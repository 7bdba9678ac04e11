use std::path::Path;

use super::bench::Benchmark;
use super::train::Lab;
use crate::error::Result;
use crate::metrics::{linear_probe, modality_gap, write_gap_csv, write_probe_csv, ModalityGapReport, ProbeReport};
use crate::separator::Separator;

pub const CLAP_ROW: &str = "clap_proxy";
pub const UNALIGNED_ROW: &str = "pooled_noalign";
pub const ALIGNED_ROW: &str = "pooled_align";

/// Three probe rows (frozen audio embedder, unaligned, aligned) and two gap
/// rows (unaligned, aligned).
#[derive(Clone, Debug)]
pub struct ProbeGapReport {
    pub probes: Vec<(String, ProbeReport)>,
    pub gaps: Vec<(String, ModalityGapReport)>,
}

impl ProbeGapReport {
    pub fn probe(&self, label: &str) -> Option<&ProbeReport> {
        self.probes.iter().find(|(l, _)| l == label).map(|(_, r)| r)
    }

    pub fn gap(&self, label: &str) -> Option<&ModalityGapReport> {
        self.gaps.iter().find(|(l, _)| l == label).map(|(_, r)| r)
    }

    pub fn write_probe_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<(String, &ProbeReport)> = self.probes.iter().map(|(l, r)| (l.clone(), r)).collect();
        write_probe_csv(path, &rows)
    }

    pub fn write_gap_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<(String, &ModalityGapReport)> = self.gaps.iter().map(|(l, r)| (l.clone(), r)).collect();
        write_gap_csv(path, &rows)
    }
}

impl Lab {
    /// Pooled bottleneck features of every clean test source fed alone, with
    /// its class id.
    pub fn pooled_features(&self, model: &Separator<f64>, bench: &Benchmark) -> Result<Vec<(Vec<f64>, usize)>> {
        let sources: Vec<_> = bench
            .items
            .iter()
            .flat_map(|it| it.source_mags.iter().zip(&it.pair.sources))
            .collect();
        let mut out = Vec::with_capacity(sources.len());
        for chunk in sources.chunks(self.cfg.eval.chunk) {
            let input = self.frontend.input_tensor(chunk.iter().map(|(m, _)| *m))?;
            let feats = model.pooled(&input)?;
            out.extend(feats.into_iter().zip(chunk).map(|(f, (_, s))| (f, s.class_id)));
        }
        Ok(out)
    }

    /// Frozen audio-embedder features of every clean test source.
    pub fn clap_features(&self, bench: &Benchmark) -> Result<Vec<(Vec<f64>, usize)>> {
        bench
            .items
            .iter()
            .flat_map(|it| &it.pair.sources)
            .map(|s| Ok((self.clap.embed(&s.waveform)?, s.class_id)))
            .collect()
    }

    pub fn probe_and_gap(
        &self,
        aligned: &Separator<f64>,
        unaligned: &Separator<f64>,
        bench: &Benchmark,
    ) -> Result<ProbeGapReport> {
        let pc = &self.cfg.eval.probe;
        let seed = self.cfg.eval.probe_seed;
        let clap = self.clap_features(bench)?;
        let fu = self.pooled_features(unaligned, bench)?;
        let fa = self.pooled_features(aligned, bench)?;
        let visual: Vec<Vec<f64>> = fa
            .iter()
            .map(|(_, c)| Ok(self.visual.embed(*c)?.to_vec()))
            .collect::<Result<_>>()?;
        let strip = |f: &[(Vec<f64>, usize)]| f.iter().map(|(v, _)| v.clone()).collect::<Vec<_>>();
        Ok(ProbeGapReport {
            probes: vec![
                (CLAP_ROW.into(), linear_probe(&clap, seed, pc)?),
                (UNALIGNED_ROW.into(), linear_probe(&fu, seed, pc)?),
                (ALIGNED_ROW.into(), linear_probe(&fa, seed, pc)?),
            ],
            gaps: vec![
                (UNALIGNED_ROW.into(), modality_gap(&strip(&fu), &visual)?),
                (ALIGNED_ROW.into(), modality_gap(&strip(&fa), &visual)?),
            ],
        })
    }
}
