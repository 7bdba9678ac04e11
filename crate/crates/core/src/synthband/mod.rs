//! Procedural instrument catalog, clip rendering and mix-and-separate
//! batch sampling.

mod catalog;
mod mix;
mod render;
mod testset;

pub use catalog::{Catalog, Envelope, InstrumentSpec, Vibrato, DEFAULT_CATALOG};
pub use mix::{draw_classes, make_mixture, BatchSampler, MixturePair, SamplerConfig, Split};
pub use render::{clip_seed, render_clip, Clip, CLIP_PEAK};
pub use testset::{TestItem, TestSet};
