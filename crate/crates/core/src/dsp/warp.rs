use super::{Grid, LogMagSpectrogram};
use crate::error::{dim_err, input_err, Result};
use crate::scalar::Real;

/// Geometric resampling of linear STFT bins onto a log-frequency axis.
///
/// Output bin `j` sits at linear bin position `K^(j / (F_out - 1))` where
/// `K` is the Nyquist bin, so the first center is bin 1 and the last is
/// Nyquist. Both directions interpolate linearly in bin position.
#[derive(Clone, Debug, PartialEq)]
pub struct LogFreqWarp {
    n_lin: usize,
    centers: Vec<f64>,
}

impl LogFreqWarp {
    pub fn new(n_lin: usize, n_out: usize) -> Result<Self> {
        if n_out < 2 {
            return Err(input_err!("log-frequency grid needs at least 2 bins, got {n_out}"));
        }
        if n_lin < 3 {
            return Err(input_err!("need at least 3 linear bins to warp, got {n_lin}"));
        }
        let top = (n_lin - 1) as f64;
        let last = (n_out - 1) as f64;
        let mut centers: Vec<f64> = (0..n_out).map(|j| top.powf(j as f64 / last)).collect();
        // pin the ends exactly; powf can land an ulp off
        centers[0] = 1.0;
        centers[n_out - 1] = top;
        Ok(LogFreqWarp { n_lin, centers })
    }

    pub fn n_lin(&self) -> usize {
        self.n_lin
    }

    pub fn n_out(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Center frequencies in Hz for a given sample rate and window.
    pub fn center_hz(&self, sample_rate: u32, window: usize) -> Vec<f64> {
        let df = sample_rate as f64 / window as f64;
        self.centers.iter().map(|c| c * df).collect()
    }

    pub fn forward<T: Real>(&self, mag: &Grid<T>) -> Result<LogMagSpectrogram<T>> {
        if mag.cols() != self.n_lin {
            return Err(dim_err!(
                "warp built for {} bins, frame has {}",
                self.n_lin,
                mag.cols()
            ));
        }
        if mag.data().iter().any(|&v| v < T::zero() || !v.is_finite()) {
            return Err(input_err!("magnitudes must be finite and >= 0"));
        }
        let taps: Vec<(usize, T, T)> = self
            .centers
            .iter()
            .map(|&c| {
                let i = (c.floor() as usize).min(self.n_lin - 2);
                let a = c - i as f64;
                (i, T::c(1.0 - a), T::c(a))
            })
            .collect();
        let grid = Grid::from_fn(mag.rows(), taps.len(), |t, j| {
            let (i, wl, wr) = taps[j];
            let row = mag.row(t);
            wl * row[i] + wr * row[i + 1]
        });
        LogMagSpectrogram::new(grid, self.centers.clone(), self.n_lin)
    }
}

/// Warp each frame of `mag` onto `f_out` geometrically spaced bins.
pub fn log_freq_warp<T: Real>(mag: &Grid<T>, f_out: usize) -> Result<LogMagSpectrogram<T>> {
    LogFreqWarp::new(mag.cols(), f_out)?.forward(mag)
}

/// Map a warped spectrogram back onto its linear bins. Bins below the first
/// center (DC) take the first warped value, bins above the last take the
/// last.
pub fn inv_log_freq_warp<T: Real>(x: &LogMagSpectrogram<T>) -> Result<Grid<T>> {
    let centers = x.centers();
    let n_lin = x.source_bins();
    if centers.len() < 2 || centers.windows(2).any(|w| w[1] <= w[0]) {
        return Err(input_err!("warp centers must be strictly increasing"));
    }
    let last = centers.len() - 1;
    let taps: Vec<(usize, T, T)> = (0..n_lin)
        .map(|k| {
            let k = k as f64;
            if k <= centers[0] {
                return (0, T::one(), T::zero());
            }
            if k >= centers[last] {
                return (last - 1, T::zero(), T::one());
            }
            let j = centers.partition_point(|&c| c <= k) - 1;
            let a = (k - centers[j]) / (centers[j + 1] - centers[j]);
            (j, T::c(1.0 - a), T::c(a))
        })
        .collect();
    let g = x.grid();
    Ok(Grid::from_fn(g.rows(), n_lin, |t, k| {
        let (j, wl, wr) = taps[k];
        let row = g.row(t);
        wl * row[j] + wr * row[j + 1]
    }))
}
