//! Audio-visual source separation on a desk-scale synthetic band.
//!
//! Core numerics are generic over [`Real`] (`f32`/`f64`); the aliases below
//! pin the double-precision flavour used by the training pipeline.

pub mod dsp;
pub mod embedders;
pub mod error;
pub mod metrics;
pub mod ndgrad;
pub mod plot;
pub mod scalar;
pub mod separator;
pub mod synthband;
pub mod trainlab;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Tensor = ndgrad::Tensor<f64>;
pub type Graph = ndgrad::Graph<f64>;
pub type ParamStore = ndgrad::ParamStore<f64>;
pub type Waveform = dsp::Waveform<f64>;
pub type ComplexSpectrogram = dsp::ComplexSpectrogram<f64>;
pub type LogMagSpectrogram = dsp::LogMagSpectrogram<f64>;
pub type Mask = dsp::Mask<f64>;
pub type Separator = separator::Separator<f64>;
