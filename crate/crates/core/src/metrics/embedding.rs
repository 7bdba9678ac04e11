//! Embedding geometry: modality gap and linear probing.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModalityGapReport {
    pub gap: f64,
    pub mean_audio: Vec<f64>,
    pub mean_visual: Vec<f64>,
}

fn normalized_mean(vs: &[Vec<f64>], what: &str) -> Result<Vec<f64>> {
    let d = vs[0].len();
    let mut m = vec![0.0; d];
    for v in vs {
        if v.len() != d {
            return Err(input_err!("{what} embeddings have mixed dimensions {d} and {}", v.len()));
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(input_err!("{what} embedding with norm {n} cannot be normalized"));
        }
        for (a, x) in m.iter_mut().zip(v) {
            *a += x / n;
        }
    }
    for a in &mut m {
        *a /= vs.len() as f64;
    }
    Ok(m)
}

/// Distance between the centroids of two sets of unit-normalized embeddings.
pub fn modality_gap(audio: &[Vec<f64>], visual: &[Vec<f64>]) -> Result<ModalityGapReport> {
    if audio.is_empty() || visual.is_empty() {
        return Err(input_err!("modality gap needs two non-empty sets"));
    }
    let mean_audio = normalized_mean(audio, "audio")?;
    let mean_visual = normalized_mean(visual, "visual")?;
    if mean_audio.len() != mean_visual.len() {
        return Err(input_err!(
            "audio embeddings have {} dims, visual have {}",
            mean_audio.len(),
            mean_visual.len()
        ));
    }
    let gap = mean_audio
        .iter()
        .zip(&mean_visual)
        .map(|(a, v)| (a - v).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(ModalityGapReport {
        gap,
        mean_audio,
        mean_visual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// Held-out fraction per class.
    pub test_fraction: f64,
    pub l2: f64,
    pub max_iters: usize,
    /// Stop once the gradient norm falls below this.
    pub tol: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            test_fraction: 0.2,
            l2: 1e-3,
            max_iters: 3000,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    pub accuracy: f64,
    /// Class ids in the order used by `confusion`.
    pub classes: Vec<usize>,
    /// `confusion[true][predicted]` counts on the held-out split.
    pub confusion: Vec<Vec<usize>>,
    pub n_train: usize,
    pub n_test: usize,
    pub iterations: usize,
}

/// Softmax regression on frozen features, trained by full-batch gradient
/// descent on a stratified split and scored on the held-out part.
pub fn linear_probe(features: &[(Vec<f64>, usize)], split_seed: u64, cfg: &ProbeConfig) -> Result<ProbeReport> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, (_, c)) in features.iter().enumerate() {
        by_class.entry(*c).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(input_err!("linear probe needs at least 2 classes, got {}", by_class.len()));
    }
    if let Some((c, v)) = by_class.iter().find(|(_, v)| v.len() < 10) {
        return Err(input_err!("class {c} has {} samples; the probe needs at least 10", v.len()));
    }
    let d = features[0].0.len();
    if d == 0 || features.iter().any(|(f, _)| f.len() != d || f.iter().any(|v| !v.is_finite())) {
        return Err(input_err!("probe features must be finite and share one non-zero dimension"));
    }
    let classes: Vec<usize> = by_class.keys().copied().collect();
    let k = classes.len();

    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (ci, idx) in by_class.values().enumerate() {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng);
        let n_test = ((idx.len() as f64 * cfg.test_fraction).round() as usize).clamp(1, idx.len() - 1);
        test.extend(idx[..n_test].iter().map(|&i| (i, ci)));
        train.extend(idx[n_test..].iter().map(|&i| (i, ci)));
    }

    // standardize with training statistics; a constant feature maps to 0
    let mut mu = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for &(i, _) in &train {
        for (m, x) in mu.iter_mut().zip(&features[i].0) {
            *m += x;
        }
    }
    mu.iter_mut().for_each(|m| *m /= train.len() as f64);
    for &(i, _) in &train {
        for ((s, m), x) in sd.iter_mut().zip(&mu).zip(&features[i].0) {
            *s += (x - m).powi(2);
        }
    }
    sd.iter_mut().for_each(|s| *s = (*s / train.len() as f64).sqrt());
    let prep = |i: usize| -> Vec<f64> {
        let mut z: Vec<f64> = features[i]
            .0
            .iter()
            .zip(&mu)
            .zip(&sd)
            .map(|((x, m), s)| if *s > 1e-12 { (x - m) / s } else { 0.0 })
            .collect();
        z.push(1.0);
        z
    };
    let xtr: Vec<Vec<f64>> = train.iter().map(|&(i, _)| prep(i)).collect();
    let ytr: Vec<usize> = train.iter().map(|&(_, c)| c).collect();
    let da = d + 1;

    // The cross-entropy Hessian is bounded by X'X/(2n) per class block,
    // so 1/L with L its largest eigenvalue (plus l2) is a safe step.
    let lip = 0.5 * top_eigenvalue(&xtr, da) + cfg.l2;
    let step = 1.0 / lip;

    let n = xtr.len() as f64;
    let mut w = vec![0.0; k * da];
    let mut iterations = 0;
    let mut grad = vec![0.0; k * da];
    for it in 0..cfg.max_iters {
        iterations = it + 1;
        grad.fill(0.0);
        for (x, &y) in xtr.iter().zip(&ytr) {
            let p = softmax(&w, x, k);
            for c in 0..k {
                let r = p[c] - if c == y { 1.0 } else { 0.0 };
                for (g, xv) in grad[c * da..(c + 1) * da].iter_mut().zip(x) {
                    *g += r * xv / n;
                }
            }
        }
        for c in 0..k {
            for j in 0..d {
                grad[c * da + j] += cfg.l2 * w[c * da + j];
            }
        }
        let gn = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gn < cfg.tol {
            break;
        }
        for (wv, g) in w.iter_mut().zip(&grad) {
            *wv -= step * g;
        }
    }

    let mut confusion = vec![vec![0usize; k]; k];
    for &(i, c) in &test {
        let p = softmax(&w, &prep(i), k);
        let pred = (0..k).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap_or(0);
        confusion[c][pred] += 1;
    }
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    Ok(ProbeReport {
        accuracy: correct as f64 / test.len() as f64,
        classes,
        confusion,
        n_train: train.len(),
        n_test: test.len(),
        iterations,
    })
}

fn softmax(w: &[f64], x: &[f64], k: usize) -> Vec<f64> {
    let da = x.len();
    let logits: Vec<f64> = (0..k)
        .map(|c| w[c * da..(c + 1) * da].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect();
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Largest eigenvalue of `X'X / n` by power iteration (upper estimate).
fn top_eigenvalue(x: &[Vec<f64>], d: usize) -> f64 {
    let n = x.len() as f64;
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut next = vec![0.0; d];
        for row in x {
            let p: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (nv, r) in next.iter_mut().zip(row) {
                *nv += p * r / n;
            }
        }
        let norm = next.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 1.0;
        }
        lambda = norm;
        v = next.into_iter().map(|a| a / norm).collect();
    }
    // pad against an unconverged iterate
    1.05 * lambda
}

/// `label,accuracy,n_train,n_test` rows.
pub fn write_probe_csv(path: &Path, rows: &[(String, &ProbeReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    w.write_record(["features", "accuracy", "n_train", "n_test"])?;
    for (label, r) in rows {
        w.write_record([
            label.clone(),
            format!("{:.6}", r.accuracy),
            r.n_train.to_string(),
            r.n_test.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `label,gap` rows.
pub fn write_gap_csv(path: &Path, rows: &[(String, &ModalityGapReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    w.write_record(["features", "gap"])?;
    for (label, r) in rows {
        w.write_record([label.clone(), format!("{:.6}", r.gap)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
