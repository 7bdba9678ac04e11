use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{ComplexSpectrogram, Grid, Waveform};
use crate::error::{config_err, input_err, Result};
use crate::scalar::Real;

/// Periodic Hann window, `w[n] = sin^2(pi n / N)`.
pub fn hann<T: Real>(len: usize) -> Vec<T> {
    (0..len)
        .map(|n| {
            let s = (std::f64::consts::PI * n as f64 / len as f64).sin();
            T::c(s * s)
        })
        .collect()
}

/// Cached window and FFT plans for one (window, hop) pair.
pub struct StftPlan<T: Real> {
    window: usize,
    hop: usize,
    win: Vec<T>,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
    /// Interior value of the squared-window overlap sum, `None` when the
    /// pair is not COLA.
    wss_interior: Option<T>,
    wss_floor: T,
}

impl<T: Real> std::fmt::Debug for StftPlan<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StftPlan")
            .field("window", &self.window)
            .field("hop", &self.hop)
            .field("cola", &self.wss_interior.is_some())
            .finish()
    }
}

impl<T: Real> StftPlan<T> {
    pub fn new(window: usize, hop: usize) -> Result<Self> {
        if window < 2 || hop == 0 || hop > window {
            return Err(config_err!(
                "need window >= 2 and 0 < hop <= window, got window {window}, hop {hop}"
            ));
        }
        let win = hann::<T>(window);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(window);
        let inv = planner.plan_fft_inverse(window);
        let wss_interior = cola_constant(&win, hop);
        Ok(StftPlan {
            window,
            hop,
            win,
            fwd,
            inv,
            wss_interior,
            wss_floor: T::c(WSS_FLOOR),
        })
    }

    /// Override the relative squared-window floor used at the signal ends.
    pub fn with_wss_floor(mut self, floor: T) -> Self {
        self.wss_floor = floor;
        self
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn n_bins(&self) -> usize {
        self.window / 2 + 1
    }

    pub fn is_cola(&self) -> bool {
        self.wss_interior.is_some()
    }

    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.window {
            0
        } else {
            1 + (len - self.window) / self.hop
        }
    }

    /// Squared-window overlap sum for a signal of `n_frames` frames.
    pub fn window_square_sum(&self, n_frames: usize) -> Vec<T> {
        let len = self.hop * n_frames.saturating_sub(1) + self.window;
        let mut wss = vec![T::zero(); len];
        for f in 0..n_frames {
            for (n, &w) in self.win.iter().enumerate() {
                wss[f * self.hop + n] += w * w;
            }
        }
        wss
    }

    pub fn stft(&self, w: &Waveform<T>) -> Result<ComplexSpectrogram<T>> {
        let x = w.samples();
        if x.len() < self.window {
            return Err(input_err!(
                "signal of {} samples is shorter than one {}-sample window",
                x.len(),
                self.window
            ));
        }
        let n_frames = self.n_frames(x.len());
        let n_bins = self.n_bins();
        let mut data = Vec::with_capacity(n_frames * n_bins);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.window];
        let mut scratch =
            vec![Complex::new(T::zero(), T::zero()); self.fwd.get_inplace_scratch_len()];
        for f in 0..n_frames {
            let frame = &x[f * self.hop..f * self.hop + self.window];
            for ((b, &s), &wv) in buf.iter_mut().zip(frame).zip(&self.win) {
                *b = Complex::new(s * wv, T::zero());
            }
            self.fwd.process_with_scratch(&mut buf, &mut scratch);
            data.extend_from_slice(&buf[..n_bins]);
        }
        Ok(ComplexSpectrogram {
            data,
            n_frames,
            n_bins,
            window: self.window,
            hop: self.hop,
            sample_rate: w.sample_rate(),
        })
    }

    /// Weighted overlap-add. Each output sample is divided by the local
    /// squared-window sum; near the two ends, where only the window tails
    /// overlap, that sum is floored at a small fraction of its interior
    /// value so masked spectra cannot blow up there.
    pub fn istft(&self, s: &ComplexSpectrogram<T>) -> Result<Waveform<T>> {
        if s.window != self.window || s.hop != self.hop {
            return Err(config_err!(
                "spectrogram ({}, {}) does not match plan ({}, {})",
                s.window,
                s.hop,
                self.window,
                self.hop
            ));
        }
        let Some(interior) = self.wss_interior else {
            return Err(config_err!(
                "Hann window {} with hop {} is not overlap-add invertible",
                self.window,
                self.hop
            ));
        };
        let len = s.signal_len();
        let mut out = vec![T::zero(); len];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.window];
        let mut scratch =
            vec![Complex::new(T::zero(), T::zero()); self.inv.get_inplace_scratch_len()];
        let half = self.window / 2;
        let scale = T::one() / T::from_usize_lossy(self.window);
        for f in 0..s.n_frames {
            let row = &s.data[f * s.n_bins..(f + 1) * s.n_bins];
            buf[..s.n_bins].copy_from_slice(row);
            // DC and Nyquist of a real signal are real.
            buf[0].im = T::zero();
            if self.window % 2 == 0 {
                buf[half].im = T::zero();
            }
            for k in s.n_bins..self.window {
                buf[k] = buf[self.window - k].conj();
            }
            self.inv.process_with_scratch(&mut buf, &mut scratch);
            let dst = &mut out[f * self.hop..f * self.hop + self.window];
            for ((o, b), &wv) in dst.iter_mut().zip(&buf).zip(&self.win) {
                *o += b.re * scale * wv;
            }
        }
        let floor = interior * self.wss_floor;
        for (o, wss) in out.iter_mut().zip(self.window_square_sum(s.n_frames)) {
            *o /= wss.max(floor);
        }
        Waveform::new(out, s.sample_rate)
    }
}

/// Relative floor on the squared-window sum used by [`StftPlan::istft`].
const WSS_FLOOR: f64 = 1e-2;

/// Interior squared-window overlap sum if it is constant to 1e-9.
fn cola_constant<T: Real>(win: &[T], hop: usize) -> Option<T> {
    let n = win.len();
    let per = n.div_ceil(hop);
    let frames = 2 * per + 1;
    let len = hop * (frames - 1) + n;
    let mut wss = vec![0.0f64; len];
    for f in 0..frames {
        for (i, w) in win.iter().enumerate() {
            let w = w.to_f64_lossy();
            wss[f * hop + i] += w * w;
        }
    }
    let interior = &wss[n..len - n];
    let c = interior[0];
    let ok = c > 0.0 && interior.iter().all(|v| (v - c).abs() <= 1e-9 * c);
    ok.then(|| T::c(c))
}

/// One-shot [`StftPlan::stft`].
pub fn stft<T: Real>(w: &Waveform<T>, window: usize, hop: usize) -> Result<ComplexSpectrogram<T>> {
    StftPlan::new(window, hop)?.stft(w)
}

/// One-shot [`StftPlan::istft`].
pub fn istft<T: Real>(s: &ComplexSpectrogram<T>) -> Result<Waveform<T>> {
    StftPlan::new(s.window, s.hop)?.istft(s)
}

/// `|S|` as a frame-major grid.
pub fn magnitude<T: Real>(s: &ComplexSpectrogram<T>) -> Grid<T> {
    Grid::new(s.n_frames, s.n_bins, s.data.iter().map(|c| c.norm()).collect())
        .expect("spectrogram geometry")
}
