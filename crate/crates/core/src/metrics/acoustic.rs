//! Acoustic descriptors: amplitude ratio, YIN pitch and harmonic complexity.

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp::{hann, Waveform};
use crate::error::{config_err, input_err, Result};
use crate::scalar::Real;

/// Peak over RMS; 1 for a constant, sqrt(2) for a sine.
pub fn amplitude_ratio<T: Real>(w: &Waveform<T>) -> Result<T> {
    let n = T::from_usize_lossy(w.len());
    let rms = (w.energy() / n).sqrt();
    if rms == T::zero() {
        return Err(input_err!("amplitude ratio of a silent signal is undefined"));
    }
    Ok(w.peak() / rms)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct YinConfig {
    pub fmin: f64,
    pub fmax: f64,
    /// Analysis frame; must span at least two periods of `fmin`.
    pub frame_len: usize,
    pub hop: usize,
    /// Absolute CMNDF threshold.
    pub threshold: f64,
    /// Fraction of frames that must be voiced for a clip-level pitch.
    pub min_voiced: f64,
}

impl Default for YinConfig {
    fn default() -> Self {
        YinConfig {
            fmin: 50.0,
            fmax: 1000.0,
            frame_len: 1024,
            hop: 256,
            threshold: 0.1,
            min_voiced: 0.5,
        }
    }
}

/// Per-frame YIN estimates; `None` marks an unvoiced frame.
pub fn yin_track<T: Real>(w: &Waveform<T>, cfg: &YinConfig) -> Result<Vec<Option<f64>>> {
    let sr = w.sample_rate() as f64;
    if !(cfg.fmin > 0.0 && cfg.fmin < cfg.fmax && cfg.fmax < sr / 2.0) {
        return Err(config_err!(
            "need 0 < fmin < fmax < Nyquist, got {} / {} at {sr} Hz",
            cfg.fmin,
            cfg.fmax
        ));
    }
    let tau_max = (sr / cfg.fmin).ceil() as usize;
    let tau_min = ((sr / cfg.fmax).floor() as usize).max(2);
    if cfg.frame_len < 2 * tau_max || cfg.hop == 0 {
        return Err(config_err!(
            "YIN frame of {} samples cannot resolve {} Hz (needs {})",
            cfg.frame_len,
            cfg.fmin,
            2 * tau_max
        ));
    }
    let x: Vec<f64> = w.samples().iter().map(|v| v.to_f64_lossy()).collect();
    if x.len() < cfg.frame_len {
        return Err(input_err!(
            "signal of {} samples is shorter than the {}-sample YIN frame",
            x.len(),
            cfg.frame_len
        ));
    }
    let win = cfg.frame_len - tau_max;
    let mut d = vec![0.0; tau_max + 2];
    let mut out = Vec::new();
    let mut start = 0;
    while start + cfg.frame_len <= x.len() {
        let f = &x[start..start + cfg.frame_len];
        for (tau, dt) in d.iter_mut().enumerate().take(tau_max + 1).skip(1) {
            *dt = (0..win).map(|j| (f[j] - f[j + tau]).powi(2)).sum();
        }
        out.push(yin_pick(&d[..=tau_max], tau_min, cfg.threshold).map(|tau| sr / tau));
        start += cfg.hop;
    }
    Ok(out)
}

/// Lag (fractional) of the first CMNDF dip under `threshold` in
/// `[tau_min, tau_max]`, refined by a parabola through raw `d`.
fn yin_pick(d: &[f64], tau_min: usize, threshold: f64) -> Option<f64> {
    let tau_max = d.len() - 1;
    let mut cmndf = vec![1.0; d.len()];
    let mut running = 0.0;
    for tau in 1..=tau_max {
        running += d[tau];
        cmndf[tau] = if running > 0.0 { d[tau] * tau as f64 / running } else { 1.0 };
    }
    let mut tau = tau_min;
    while tau <= tau_max {
        if cmndf[tau] < threshold {
            while tau < tau_max && cmndf[tau + 1] < cmndf[tau] {
                tau += 1;
            }
            break;
        }
        tau += 1;
    }
    if tau > tau_max || cmndf[tau] >= threshold {
        return None;
    }
    if tau == 0 || tau >= tau_max {
        return Some(tau as f64);
    }
    let (a, b, c) = (d[tau - 1], d[tau], d[tau + 1]);
    let den = a - 2.0 * b + c;
    let shift = if den > 0.0 { 0.5 * (a - c) / den } else { 0.0 };
    Some(tau as f64 + shift.clamp(-0.5, 0.5))
}

/// Clip-level pitch: median of voiced frame estimates, `None` when fewer
/// than `min_voiced` of the frames are voiced.
pub fn yin_f0<T: Real>(w: &Waveform<T>, cfg: &YinConfig) -> Result<Option<f64>> {
    let track = yin_track(w, cfg)?;
    let mut voiced: Vec<f64> = track.iter().flatten().copied().collect();
    if voiced.is_empty() || (voiced.len() as f64) < cfg.min_voiced * track.len() as f64 {
        return Ok(None);
    }
    voiced.sort_by(f64::total_cmp);
    let m = voiced.len();
    Ok(Some(if m % 2 == 1 {
        voiced[m / 2]
    } else {
        0.5 * (voiced[m / 2 - 1] + voiced[m / 2])
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HcrConfig {
    pub n_harmonics: usize,
    /// Hann frame length; the signal length is used when shorter.
    pub frame_len: usize,
    /// Zero-padded FFT size (>= frame_len), so the +-1 bin band sits on the
    /// main lobe.
    pub fft_len: usize,
    /// Peak search half-width around each nominal harmonic, in cents.
    pub search_cents: f64,
}

impl Default for HcrConfig {
    fn default() -> Self {
        HcrConfig {
            n_harmonics: 8,
            frame_len: 2048,
            fft_len: 4096,
            search_cents: 30.0,
        }
    }
}

/// Frame-averaged power spectrum, bins `0..=fft_len/2`.
fn mean_power<T: Real>(w: &Waveform<T>, cfg: &HcrConfig) -> Result<Vec<f64>> {
    let x: Vec<f64> = w.samples().iter().map(|v| v.to_f64_lossy()).collect();
    let l = cfg.frame_len.min(x.len());
    if l < 16 || cfg.fft_len < l {
        return Err(config_err!(
            "spectrum needs 16 <= frame ({l}) <= fft ({})",
            cfg.fft_len
        ));
    }
    let win = hann::<f64>(l);
    let fft = FftPlanner::new().plan_fft_forward(cfg.fft_len);
    let hop = (l / 2).max(1);
    let mut acc = vec![0.0; cfg.fft_len / 2 + 1];
    let mut frames = 0usize;
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_len];
    let mut start = 0;
    while start + l <= x.len() {
        buf.fill(Complex::new(0.0, 0.0));
        for i in 0..l {
            buf[i].re = x[start + i] * win[i];
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        frames += 1;
        start += hop;
    }
    for a in &mut acc {
        *a /= frames as f64;
    }
    Ok(acc)
}

/// Per-harmonic band energies `E_1..E_N` for a known fundamental. Harmonics
/// whose band would cross Nyquist are dropped with a warning.
pub fn harmonic_energies<T: Real>(w: &Waveform<T>, f0: f64, cfg: &HcrConfig) -> Result<Vec<f64>> {
    if !(f0 > 0.0 && f0.is_finite()) {
        return Err(input_err!("fundamental must be positive, got {f0}"));
    }
    let p = mean_power(w, cfg)?;
    let df = w.sample_rate() as f64 / cfg.fft_len as f64;
    let top = p.len() - 2;
    let ratio = 2f64.powf(cfg.search_cents / 1200.0) - 1.0;
    let mut out = Vec::with_capacity(cfg.n_harmonics);
    for i in 1..=cfg.n_harmonics {
        let centre = i as f64 * f0 / df;
        let reach = (centre * ratio).max(1.0);
        let lo = (centre - reach).floor().max(1.0) as usize;
        let hi = (centre + reach).ceil() as usize;
        if hi > top {
            log::warn!(
                "harmonic {i} of {f0:.1} Hz exceeds Nyquist; using {} harmonics",
                i - 1
            );
            break;
        }
        let peak = (lo..=hi).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap_or(lo);
        out.push((p[peak - 1] + p[peak] + p[peak + 1]) / 3.0);
    }
    if out.is_empty() {
        return Err(input_err!("no harmonic of {f0} Hz lies below Nyquist"));
    }
    Ok(out)
}

/// `1 - HCR` with HCR = sum(E_i / i) / sum(E_i) at a known fundamental.
pub fn harmonic_complexity_at<T: Real>(w: &Waveform<T>, f0: f64, cfg: &HcrConfig) -> Result<f64> {
    let e = harmonic_energies(w, f0, cfg)?;
    let total: f64 = e.iter().sum();
    if total <= 0.0 {
        return Err(input_err!("no harmonic energy at {f0} Hz"));
    }
    let weighted: f64 = e.iter().enumerate().map(|(i, v)| v / (i + 1) as f64).sum();
    Ok((1.0 - weighted / total).clamp(0.0, 1.0))
}

/// Harmonic complexity with the fundamental taken from [`yin_f0`].
pub fn harmonic_complexity<T: Real>(w: &Waveform<T>, yin: &YinConfig, cfg: &HcrConfig) -> Result<f64> {
    let f0 = yin_f0(w, yin)?.ok_or_else(|| input_err!("no pitch: signal is unvoiced"))?;
    harmonic_complexity_at(w, f0, cfg)
}

/// Per-clip acoustic descriptors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcousticProfile {
    pub amplitude_ratio: f64,
    pub harmonic_complexity: f64,
    pub f0_hz: Option<f64>,
}

pub fn acoustic_profile<T: Real>(w: &Waveform<T>, yin: &YinConfig, hcr: &HcrConfig) -> Result<AcousticProfile> {
    let f0 = yin_f0(w, yin)?.ok_or_else(|| input_err!("no pitch: signal is unvoiced"))?;
    Ok(AcousticProfile {
        amplitude_ratio: amplitude_ratio(w)?.to_f64_lossy(),
        harmonic_complexity: harmonic_complexity_at(w, f0, hcr)?,
        f0_hz: Some(f0),
    })
}
