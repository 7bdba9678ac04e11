use std::f64::consts::TAU;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Envelope, InstrumentSpec};
use crate::dsp::{quantize_pcm16, Waveform};
use crate::error::{input_err, Result};

/// Peak level every rendered clip is normalized to.
pub const CLIP_PEAK: f64 = 0.9;

/// Short linear onset on struck envelopes, so strikes do not click.
const STRIKE_ATTACK_S: f64 = 0.002;

/// Smoothing coefficient of the one-pole low-pass applied to burst noise.
const NOISE_LOWPASS: f64 = 0.3;

/// One rendered source.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub waveform: Waveform<f64>,
    pub class_id: usize,
    pub seed: u64,
    /// Fundamental drawn at render time; unknown for clips read from disk.
    pub f0_hz: Option<f64>,
}

/// RNG stream for one (class, seed) pair.
pub fn clip_seed(class_id: usize, seed: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ (class_id as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Additive synthesis of `spec` for `duration_s` seconds. Deterministic per
/// `(spec, seed)`; output is peak-normalized and on the 16-bit PCM grid.
pub fn render_clip(spec: &InstrumentSpec, seed: u64, duration_s: f64, sample_rate: u32) -> Result<Clip> {
    let n = (duration_s * sample_rate as f64).round() as usize;
    if n < 2 {
        return Err(input_err!("clip of {duration_s} s is too short to render"));
    }
    let sr = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(clip_seed(spec.class_id, seed));
    let [lo, hi] = spec.f0_range;
    let f0 = if hi > lo { rng.random_range(lo..hi) } else { lo };
    assert!((lo..=hi).contains(&f0), "f0 {f0} outside {lo}..{hi}");
    let phases: Vec<f64> = spec.harmonics.iter().map(|_| rng.random_range(0.0..TAU)).collect();
    let vib_phase = rng.random_range(0.0..TAU);

    let env = envelope(&spec.envelope, n, sr, &mut rng);

    // instantaneous phase of the fundamental, vibrato folded in
    let mut phase = 0.0;
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / sr;
        let ratio = match spec.vibrato {
            Some(v) => 2f64.powf(v.depth_cents / 1200.0 * (TAU * v.rate_hz * t + vib_phase).sin()),
            None => 1.0,
        };
        let tone: f64 = spec
            .harmonics
            .iter()
            .zip(&phases)
            .enumerate()
            .map(|(h, (&a, &p))| a * ((h + 1) as f64 * phase + p).sin())
            .sum();
        *o = tone;
        phase = (phase + TAU * f0 * ratio / sr) % (TAU * 1024.0);
    }

    if let Envelope::Burst { noise, .. } = spec.envelope {
        if noise > 0.0 {
            let mut lp = 0.0;
            let raw: Vec<f64> = (0..n)
                .map(|_| {
                    lp += NOISE_LOWPASS * (rng.random_range(-1.0..1.0) - lp);
                    lp
                })
                .collect();
            let rms = (raw.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
            let level: f64 = spec.harmonics.iter().map(|a| a * a).sum::<f64>().sqrt() / 2f64.sqrt();
            let g = noise * level / rms.max(1e-12);
            for (o, r) in out.iter_mut().zip(&raw) {
                *o += g * r;
            }
        }
    }

    for (o, e) in out.iter_mut().zip(&env) {
        *o *= e;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let g = if peak > 0.0 { CLIP_PEAK / peak } else { 0.0 };
    for o in &mut out {
        *o = quantize_pcm16(*o * g);
    }
    Ok(Clip {
        waveform: Waveform::new(out, sample_rate)?,
        class_id: spec.class_id,
        seed,
        f0_hz: Some(f0),
    })
}

fn envelope(kind: &Envelope, n: usize, sr: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let struck = |decay_s: f64, period: [f64; 2], rng: &mut ChaCha8Rng| {
        let p = if period[1] > period[0] {
            rng.random_range(period[0]..period[1])
        } else {
            period[0]
        };
        let offset = rng.random_range(0.0..p);
        (0..n)
            .map(|i| {
                let u = (i as f64 / sr - offset).rem_euclid(p);
                (u / STRIKE_ATTACK_S).min(1.0) * (-u / decay_s).exp()
            })
            .collect()
    };
    match *kind {
        Envelope::Pluck { decay_s, period_s } => struck(decay_s, period_s, rng),
        Envelope::Burst {
            decay_s, period_s, ..
        } => struck(decay_s, period_s, rng),
        Envelope::Sustain {
            attack_s,
            release_s,
        } => {
            let dur = n as f64 / sr;
            (0..n)
                .map(|i| {
                    let t = i as f64 / sr;
                    let up = if attack_s > 0.0 { (t / attack_s).min(1.0) } else { 1.0 };
                    let down = if release_s > 0.0 {
                        ((dur - t) / release_s).min(1.0)
                    } else {
                        1.0
                    };
                    up.min(down).max(0.0)
                })
                .collect()
        }
    }
}
