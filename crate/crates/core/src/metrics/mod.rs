//! Evaluation: separation quality, embedding geometry and acoustic
//! descriptors.

mod acoustic;
mod bss;
mod embedding;
mod map;

pub use acoustic::{
    acoustic_profile, amplitude_ratio, harmonic_complexity, harmonic_complexity_at, harmonic_energies,
    yin_f0, yin_track, AcousticProfile, HcrConfig, YinConfig,
};
pub use bss::{bss_decompose, bss_eval, si_sdr, BssDecomposition, BssEvalResult, DB_CAP, DESK_FILTER_LEN};
pub use embedding::{
    linear_probe, modality_gap, write_gap_csv, write_probe_csv, ModalityGapReport, ProbeConfig, ProbeReport,
};
pub use map::{acoustic_map, acoustic_svg, write_acoustic_csv, ClassAcoustics};
