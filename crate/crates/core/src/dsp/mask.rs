use num_complex::Complex;

use super::{inv_log_freq_warp, ComplexSpectrogram, LogMagSpectrogram, Mask, StftPlan, Waveform};
use crate::error::{dim_err, input_err, Result};
use crate::scalar::Real;

/// Elementwise `M * X`.
pub fn apply_mask<T: Real>(x: &LogMagSpectrogram<T>, m: &Mask<T>) -> Result<LogMagSpectrogram<T>> {
    let (xg, mg) = (x.grid(), m.grid());
    if !xg.same_shape(mg) {
        return Err(dim_err!(
            "mask {}x{} does not match spectrogram {}x{}",
            mg.rows(),
            mg.cols(),
            xg.rows(),
            xg.cols()
        ));
    }
    let data = xg.data().iter().zip(mg.data()).map(|(&a, &b)| a * b).collect();
    x.with_grid(super::Grid::new(xg.rows(), xg.cols(), data)?)
}

/// Inverse-warp `xhat`, attach the phase of `phase` and invert. Samples past
/// full scale are clipped with a warning.
pub fn reconstruct<T: Real>(
    xhat: &LogMagSpectrogram<T>,
    phase: Option<&ComplexSpectrogram<T>>,
) -> Result<Waveform<T>> {
    let phase = phase.ok_or_else(|| input_err!("reconstruction needs a phase spectrogram"))?;
    if phase.n_frames() != xhat.n_frames() || phase.n_bins() != xhat.source_bins() {
        return Err(dim_err!(
            "phase is {}x{} but magnitude maps to {}x{}",
            phase.n_frames(),
            phase.n_bins(),
            xhat.n_frames(),
            xhat.source_bins()
        ));
    }
    let mag = inv_log_freq_warp(xhat)?;
    let data = mag
        .data()
        .iter()
        .zip(phase.data())
        .map(|(&m, &p)| {
            let r = p.norm();
            if r > T::zero() {
                p * (m / r)
            } else {
                Complex::new(m, T::zero())
            }
        })
        .collect();
    let spec = phase.with_data(data)?;
    let mut w = StftPlan::new(spec.window(), spec.hop())?.istft(&spec)?;
    w.clip_to_unit();
    Ok(w)
}
