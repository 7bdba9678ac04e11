//! Waveform <-> spectrogram transforms, log-frequency warping and masking.
//!
//! Spectrogram matrices are frame-major: row `t` is one analysis frame,
//! column `f` one frequency bin.

mod export;
mod mask;
mod stft;
mod warp;
mod wav;

pub use export::{grid_csv, grid_svg, write_grid_csv};
pub use mask::{apply_mask, reconstruct};
pub use stft::{hann, istft, magnitude, stft, StftPlan};
pub use warp::{inv_log_freq_warp, log_freq_warp, LogFreqWarp};
pub use wav::{quantize_pcm16, read_wav, write_wav};

use num_complex::Complex;

use crate::error::{dim_err, input_err, Result};
use crate::scalar::Real;

/// Mono sampled signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform<T> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Real> Waveform<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(input_err!("waveform must hold at least one sample"));
        }
        if sample_rate == 0 {
            return Err(input_err!("sample rate must be positive"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(input_err!("waveform contains non-finite samples"));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Waveform::new(vec![T::zero(); len.max(1)], sample_rate).expect("valid")
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn energy(&self) -> T {
        self.samples.iter().map(|&v| v * v).sum()
    }

    pub fn scaled(&self, gain: T) -> Self {
        Waveform {
            samples: self.samples.iter().map(|&v| v * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Sub-range `[start, start + len)`.
    pub fn crop(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.samples.len() {
            return Err(input_err!(
                "crop [{start}, {}) outside waveform of {} samples",
                start + len,
                self.samples.len()
            ));
        }
        Waveform::new(self.samples[start..start + len].to_vec(), self.sample_rate)
    }

    /// Clamp to [-1, 1]; returns how many samples were clipped and logs a
    /// warning when any were.
    pub fn clip_to_unit(&mut self) -> usize {
        let limit = T::one() + T::c(1e-6);
        let mut clipped = 0;
        for v in &mut self.samples {
            if v.abs() > limit {
                *v = v.signum();
                clipped += 1;
            }
        }
        if clipped > 0 {
            log::warn!("clipped {clipped} samples beyond full scale");
        }
        clipped
    }
}

/// Dense row-major real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Grid<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows * cols != data.len() || rows == 0 || cols == 0 {
            return Err(dim_err!(
                "grid {rows}x{cols} cannot hold {} values",
                data.len()
            ));
        }
        Ok(Grid { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Grid {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Grid { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// Complex STFT frames: `n_frames` rows of `window/2 + 1` bins.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram<T> {
    pub(crate) data: Vec<Complex<T>>,
    pub(crate) n_frames: usize,
    pub(crate) n_bins: usize,
    pub(crate) window: usize,
    pub(crate) hop: usize,
    pub(crate) sample_rate: u32,
}

impl<T: Real> ComplexSpectrogram<T> {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn get(&self, t: usize, f: usize) -> Complex<T> {
        self.data[t * self.n_bins + f]
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    /// Same geometry, new bin values.
    pub fn with_data(&self, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(dim_err!(
                "spectrogram expects {} bins, got {}",
                self.data.len(),
                data.len()
            ));
        }
        Ok(ComplexSpectrogram {
            data,
            ..self.clone()
        })
    }

    /// Length of the signal an inverse transform produces.
    pub fn signal_len(&self) -> usize {
        self.hop * (self.n_frames - 1) + self.window
    }
}

/// Magnitude on a log-frequency grid plus the warp metadata needed to map it
/// back to linear bins.
#[derive(Clone, Debug, PartialEq)]
pub struct LogMagSpectrogram<T> {
    grid: Grid<T>,
    /// Fractional linear-bin position of each warped bin.
    centers: Vec<f64>,
    /// Linear bin count of the spectrogram this was warped from.
    source_bins: usize,
}

impl<T: Real> LogMagSpectrogram<T> {
    pub fn new(grid: Grid<T>, centers: Vec<f64>, source_bins: usize) -> Result<Self> {
        if centers.len() != grid.cols() {
            return Err(dim_err!(
                "{} warp centers for {} bins",
                centers.len(),
                grid.cols()
            ));
        }
        if grid.data().iter().any(|&v| v < T::zero() || !v.is_finite()) {
            return Err(input_err!("log-magnitude entries must be finite and >= 0"));
        }
        Ok(LogMagSpectrogram {
            grid,
            centers,
            source_bins,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn n_frames(&self) -> usize {
        self.grid.rows()
    }

    pub fn n_bins(&self) -> usize {
        self.grid.cols()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn source_bins(&self) -> usize {
        self.source_bins
    }

    pub fn data(&self) -> &[T] {
        self.grid.data()
    }

    /// Same warp metadata, new values.
    pub fn with_grid(&self, grid: Grid<T>) -> Result<Self> {
        if !grid.same_shape(&self.grid) {
            return Err(dim_err!(
                "expected {}x{} grid, got {}x{}",
                self.grid.rows(),
                self.grid.cols(),
                grid.rows(),
                grid.cols()
            ));
        }
        LogMagSpectrogram::new(grid, self.centers.clone(), self.source_bins)
    }
}

/// Time-frequency gain in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Mask<T> {
    grid: Grid<T>,
}

impl<T: Real> Mask<T> {
    pub fn new(grid: Grid<T>) -> Result<Self> {
        if grid
            .data()
            .iter()
            .any(|&v| !(v >= T::zero() && v <= T::one()))
        {
            return Err(input_err!("mask entries must lie in [0, 1]"));
        }
        Ok(Mask { grid })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }
}
