//! Per-class acoustic map: mean amplitude ratio against mean harmonic
//! complexity over rendered clips.

use std::path::Path;

use serde::Serialize;

use super::{acoustic_profile, HcrConfig, YinConfig};
use crate::error::{input_err, Error, Result};
use crate::plot::{scatter, Point};
use crate::synthband::{render_clip, Catalog};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassAcoustics {
    pub class_id: usize,
    pub name: String,
    pub mean_ar: f64,
    pub mean_complexity: f64,
    /// Clips that contributed (unvoiced clips are skipped).
    pub n_clips: usize,
}

/// Render seeds `0..seeds_per_class` of every class and average their
/// descriptors. A class whose clips are all unvoiced is an error.
pub fn acoustic_map(
    catalog: &Catalog,
    seeds_per_class: usize,
    duration_s: f64,
    sample_rate: u32,
    yin: &YinConfig,
    hcr: &HcrConfig,
) -> Result<Vec<ClassAcoustics>> {
    if catalog.is_empty() || seeds_per_class == 0 {
        return Err(input_err!("acoustic map needs a non-empty catalog and at least one seed"));
    }
    let mut rows = Vec::with_capacity(catalog.len());
    for spec in &catalog.instruments {
        let (mut ar, mut hc, mut n) = (0.0, 0.0, 0usize);
        for seed in 0..seeds_per_class as u64 {
            let clip = render_clip(spec, seed, duration_s, sample_rate)?;
            match acoustic_profile(&clip.waveform, yin, hcr) {
                Ok(p) => {
                    ar += p.amplitude_ratio;
                    hc += p.harmonic_complexity;
                    n += 1;
                }
                Err(Error::Input(msg)) => log::warn!("{} seed {seed} skipped: {msg}", spec.name),
                Err(e) => return Err(e),
            }
        }
        if n == 0 {
            return Err(input_err!("every clip of `{}` is unvoiced", spec.name));
        }
        rows.push(ClassAcoustics {
            class_id: spec.class_id,
            name: spec.name.clone(),
            mean_ar: ar / n as f64,
            mean_complexity: hc / n as f64,
            n_clips: n,
        });
    }
    Ok(rows)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// `class_id,name,mean_ar,mean_complexity,n_clips`.
pub fn write_acoustic_csv(path: &Path, rows: &[ClassAcoustics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    w.write_record(["class_id", "name", "mean_ar", "mean_complexity", "n_clips"])?;
    for r in rows {
        w.write_record([
            r.class_id.to_string(),
            r.name.clone(),
            format!("{:.6}", r.mean_ar),
            format!("{:.6}", r.mean_complexity),
            r.n_clips.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Scatter of the map with quadrant guides at the class medians.
pub fn acoustic_svg(rows: &[ClassAcoustics]) -> String {
    let pts: Vec<Point> = rows
        .iter()
        .map(|r| Point {
            x: r.mean_ar,
            y: r.mean_complexity,
            label: r.name.clone(),
        })
        .collect();
    let split = (
        median(rows.iter().map(|r| r.mean_ar).collect()),
        median(rows.iter().map(|r| r.mean_complexity).collect()),
    );
    scatter("Acoustic map", "amplitude ratio", "harmonic complexity", &pts, Some(split))
}
