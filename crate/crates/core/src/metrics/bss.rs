//! BSS-eval source metrics with a time-invariant distortion filter, and
//! scale-invariant SDR.

use serde::Serialize;

use crate::dsp::Waveform;
use crate::error::{input_err, numeric_err, Result};
use crate::scalar::Real;

/// Reported decibel values are clamped to this ceiling.
pub const DB_CAP: f64 = 60.0;

/// Added to the Gram diagonal before factorization.
const GRAM_REG: f64 = 1e-10;

/// Default distortion filter length at desk scale.
pub const DESK_FILTER_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BssEvalResult {
    pub sdr_db: f64,
    pub sir_db: f64,
    pub sar_db: f64,
}

impl BssEvalResult {
    /// Clamp to [`DB_CAP`] for reporting; a perfect estimate becomes 60 dB.
    pub fn capped(self) -> Self {
        BssEvalResult {
            sdr_db: self.sdr_db.min(DB_CAP),
            sir_db: self.sir_db.min(DB_CAP),
            sar_db: self.sar_db.min(DB_CAP),
        }
    }
}

/// `est = target + interf + artif`, each `len + filter_len - 1` long.
#[derive(Clone, Debug, PartialEq)]
pub struct BssDecomposition {
    pub target: Vec<f64>,
    pub interf: Vec<f64>,
    pub artif: Vec<f64>,
}

fn db(num: f64, den: f64) -> f64 {
    10.0 * (num / den).log10()
}

fn energy(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

impl BssDecomposition {
    pub fn metrics(&self) -> BssEvalResult {
        let t = energy(&self.target);
        let distortion: Vec<f64> = self.interf.iter().zip(&self.artif).map(|(a, b)| a + b).collect();
        let ti: Vec<f64> = self.target.iter().zip(&self.interf).map(|(a, b)| a + b).collect();
        BssEvalResult {
            sdr_db: db(t, energy(&distortion)),
            sir_db: db(t, energy(&self.interf)),
            sar_db: db(energy(&ti), energy(&self.artif)),
        }
    }
}

/// Correlation `sum_t a[t] * b[t + lag]` over the unpadded signals.
fn xcorr(a: &[f64], b: &[f64], lag: isize) -> f64 {
    let n = a.len() as isize;
    let (lo, hi) = (0.max(-lag), n.min(n - lag));
    (lo..hi).map(|t| a[t as usize] * b[(t + lag) as usize]).sum()
}

/// In-place Cholesky of a symmetric positive-definite matrix (row-major,
/// lower triangle), then solve `G c = d`.
fn cholesky_solve(mut g: Vec<f64>, n: usize, d: &[f64]) -> Result<Vec<f64>> {
    for j in 0..n {
        let mut s = g[j * n + j];
        for k in 0..j {
            s -= g[j * n + k] * g[j * n + k];
        }
        if !(s > 0.0) {
            return Err(numeric_err!(
                "reference Gram matrix is singular at column {j}; are the references linearly independent?"
            ));
        }
        let l = s.sqrt();
        g[j * n + j] = l;
        for i in j + 1..n {
            let mut s = g[i * n + j];
            for k in 0..j {
                s -= g[i * n + k] * g[j * n + k];
            }
            g[i * n + j] = s / l;
        }
    }
    let mut y = d.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= g[i * n + k] * y[k];
        }
        y[i] /= g[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= g[k * n + i] * y[k];
        }
        y[i] /= g[i * n + i];
    }
    Ok(y)
}

/// Least-squares projection of `est` onto the delays `0..flen` of every
/// signal in `refs`, returned at the padded length.
fn project(refs: &[&[f64]], est: &[f64], flen: usize) -> Result<Vec<f64>> {
    let n = refs.len();
    let len = est.len();
    let dim = n * flen;
    // G[(i,a),(j,b)] = <s_i delayed a, s_j delayed b> = xcorr(s_i, s_j, a - b)
    let mut corr = vec![vec![0.0; 2 * flen - 1]; n * n];
    for i in 0..n {
        for j in 0..n {
            for (k, c) in corr[i * n + j].iter_mut().enumerate() {
                *c = xcorr(refs[i], refs[j], k as isize - (flen as isize - 1));
            }
        }
    }
    let mut g = vec![0.0; dim * dim];
    for i in 0..n {
        for a in 0..flen {
            for j in 0..n {
                for b in 0..flen {
                    let lag = a as isize - b as isize + flen as isize - 1;
                    g[(i * flen + a) * dim + j * flen + b] = corr[i * n + j][lag as usize];
                }
            }
        }
    }
    for k in 0..dim {
        g[k * dim + k] += GRAM_REG;
    }
    // D[(i,a)] = <s_i delayed a, est> = sum_t s_i[t] est[t + a]
    let d: Vec<f64> = (0..n)
        .flat_map(|i| (0..flen).map(move |a| (i, a)))
        .map(|(i, a)| xcorr(refs[i], est, a as isize))
        .collect();
    let c = cholesky_solve(g, dim, &d)?;
    let mut out = vec![0.0; len + flen - 1];
    for i in 0..n {
        for a in 0..flen {
            let w = c[i * flen + a];
            for (t, &s) in refs[i].iter().enumerate() {
                out[t + a] += w * s;
            }
        }
    }
    Ok(out)
}

fn to_f64<T: Real>(w: &Waveform<T>) -> Vec<f64> {
    w.samples().iter().map(|v| v.to_f64_lossy()).collect()
}

/// Orthogonal decomposition of `estimate` against `references`.
pub fn bss_decompose<T: Real>(
    references: &[Waveform<T>],
    estimate: &Waveform<T>,
    target_index: usize,
    filter_len: usize,
) -> Result<BssDecomposition> {
    if references.is_empty() || target_index >= references.len() {
        return Err(input_err!(
            "target index {target_index} out of range for {} references",
            references.len()
        ));
    }
    if filter_len == 0 {
        return Err(input_err!("filter length must be at least 1"));
    }
    let len = estimate.len();
    if let Some(r) = references.iter().find(|r| r.len() != len) {
        return Err(input_err!("reference has {} samples, estimate has {len}", r.len()));
    }
    let refs: Vec<Vec<f64>> = references.iter().map(to_f64).collect();
    let est = to_f64(estimate);
    let views: Vec<&[f64]> = refs.iter().map(Vec::as_slice).collect();
    let target = project(&views[target_index..=target_index], &est, filter_len)?;
    let all = project(&views, &est, filter_len)?;
    let mut padded = est;
    padded.resize(len + filter_len - 1, 0.0);
    let interf = all.iter().zip(&target).map(|(a, t)| a - t).collect();
    let artif = padded.iter().zip(&all).map(|(e, a)| e - a).collect();
    Ok(BssDecomposition { target, interf, artif })
}

/// SDR, SIR and SAR of one estimate (uncapped; +inf for a perfect match).
pub fn bss_eval<T: Real>(
    references: &[Waveform<T>],
    estimate: &Waveform<T>,
    target_index: usize,
    filter_len: usize,
) -> Result<BssEvalResult> {
    Ok(bss_decompose(references, estimate, target_index, filter_len)?.metrics())
}

/// Scale-invariant SDR: the target is the optimal scalar multiple of the
/// reference.
pub fn si_sdr<T: Real>(reference: &Waveform<T>, estimate: &Waveform<T>) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(input_err!(
            "reference has {} samples, estimate has {}",
            reference.len(),
            estimate.len()
        ));
    }
    let (s, e) = (to_f64(reference), to_f64(estimate));
    let ss = energy(&s);
    if ss == 0.0 {
        return Err(input_err!("scale-invariant SDR needs a non-silent reference"));
    }
    let alpha = s.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() / ss;
    let target: Vec<f64> = s.iter().map(|v| alpha * v).collect();
    let resid: Vec<f64> = e.iter().zip(&target).map(|(a, b)| a - b).collect();
    Ok(db(energy(&target), energy(&resid)))
}
