use std::path::{Path, PathBuf};

use serde::Serialize;

use super::bench::Benchmark;
use super::eval::{EvalTable, Estimator};
use super::train::{create_dir, Lab};
use super::ExperimentConfig;
use crate::error::{config_err, Error, Result};
use crate::separator::{FusionMode, Separator};

/// One trained and evaluated cell of the fusion x alignment grid.
#[derive(Debug)]
pub struct AblationCell {
    pub mode: FusionMode,
    pub align: bool,
    pub lambda: f64,
    pub table: EvalTable,
    pub model: Separator<f64>,
    /// Mean separation loss over the first and last training epochs.
    pub sep_first_epoch: f64,
    pub sep_last_epoch: f64,
}

impl AblationCell {
    pub fn label(&self) -> String {
        cell_name(self.mode, self.align)
    }
}

fn cell_name(mode: FusionMode, align: bool) -> String {
    format!("{mode}_{}", if align { "align" } else { "noalign" })
}

#[derive(Debug)]
pub struct AblationReport {
    /// Modes in [`FusionMode::ALL`] order, aligned cell before unaligned.
    pub cells: Vec<AblationCell>,
    pub mixture: EvalTable,
    pub oracle: EvalTable,
    pub test_hash: String,
}

impl AblationReport {
    pub fn cell(&self, mode: FusionMode, align: bool) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.mode == mode && c.align == align)
    }
}

#[derive(Serialize)]
struct TableRow<'a> {
    mode: &'a str,
    align: bool,
    lambda: f64,
    sdr: String,
    sir: String,
    sar: String,
    n_clips: usize,
    test_hash: &'a str,
}

/// Train and evaluate {Middle, Late, Hierarchical} x {align on, off} with
/// the base seed and one frozen test set. Alignment on uses the base
/// `separator.lambda`; off uses 0.
pub fn ablate(base: &ExperimentConfig, out: Option<&Path>) -> Result<AblationReport> {
    let lambda = base.separator.lambda;
    if !(lambda > 0.0) {
        return Err(config_err!("ablation needs separator.lambda > 0 for the aligned cells, got {lambda}"));
    }
    let lab = Lab::new(base.clone())?;
    let bench = Benchmark::generate(base, &lab.sampler, &lab.frontend)?;
    log::info!("frozen test set: {} mixtures, hash {}", bench.len(), bench.fingerprint);
    if let Some(o) = out {
        create_dir(o)?;
    }
    let mixture = lab.evaluate(Estimator::Mixture, &bench, None)?;
    let oracle = lab.evaluate(Estimator::IdealRatio, &bench, None)?;
    let mut cells = Vec::new();
    for mode in FusionMode::ALL {
        for align in [true, false] {
            let name = cell_name(mode, align);
            let cfg = base.cell(mode, if align { lambda } else { 0.0 });
            let cell_lab = Lab::new(cfg)?;
            let dir: Option<PathBuf> = out.map(|o| o.join(&name));
            log::info!("cell {name}");
            let run = cell_lab.train(dir.as_deref())?;
            let table = cell_lab.evaluate(
                Estimator::Model(&run.model),
                &bench,
                dir.as_ref().map(|d| d.join("examples")).as_deref(),
            )?;
            if let Some(d) = &dir {
                table.write_csv(&d.join("eval.csv"))?;
            }
            log::info!("cell {name}: SDR {:.3} dB", table.overall.sdr_db);
            let spe = base.train.steps_per_epoch;
            let mean = |r: &[super::LossRecord]| r.iter().map(|x| x.sep).sum::<f64>() / r.len() as f64;
            cells.push(AblationCell {
                mode,
                align,
                lambda: cell_lab.cfg.separator.lambda,
                sep_first_epoch: mean(&run.trace[..spe]),
                sep_last_epoch: mean(&run.trace[run.trace.len() - spe..]),
                table,
                model: run.model,
            });
        }
    }
    let report = AblationReport {
        cells,
        mixture,
        oracle,
        test_hash: bench.fingerprint.clone(),
    };
    if let Some(o) = out {
        write_report(&report, o)?;
    }
    Ok(report)
}

fn write_report(r: &AblationReport, out: &Path) -> Result<()> {
    let path = out.join("ablation.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::io(&path, e.into()))?;
    for c in &r.cells {
        let o = &c.table.overall;
        w.serialize(TableRow {
            mode: c.mode.as_str(),
            align: c.align,
            lambda: c.lambda,
            sdr: format!("{:.6}", o.sdr_db),
            sir: format!("{:.6}", o.sir_db),
            sar: format!("{:.6}", o.sar_db),
            n_clips: o.n_clips,
            test_hash: &c.table.test_hash,
        })?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    r.mixture.write_csv(&out.join("mixture_baseline.csv"))?;
    r.oracle.write_csv(&out.join("oracle_irm.csv"))?;

    // per-class SDR, one column per cell
    let path = out.join("per_class_sdr.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::io(&path, e.into()))?;
    let mut header = vec!["class_id".to_string(), "name".to_string()];
    header.extend(r.cells.iter().map(AblationCell::label));
    w.write_record(&header)?;
    for row in &r.mixture.classes {
        let c = row.class_id.unwrap_or_default();
        let mut rec = vec![c.to_string(), row.name.clone()];
        for cell in &r.cells {
            rec.push(cell.table.class(c).map(|x| format!("{:.6}", x.sdr_db)).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}
