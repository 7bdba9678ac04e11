mod common;

use avsep::dsp::Waveform;
use avsep::metrics::{acoustic_profile, amplitude_ratio, harmonic_complexity, HcrConfig, YinConfig};
use avsep::synthband::*;
use avsep::Error;
use common::rng;
use proptest::prelude::*;

const SR: u32 = 8000;

fn catalog() -> Catalog {
    Catalog::default_for(SR).unwrap()
}

fn sampler() -> BatchSampler {
    BatchSampler::new(catalog(), SamplerConfig::default()).unwrap()
}

fn spec(envelope: Envelope, harmonics: Vec<f64>) -> InstrumentSpec {
    InstrumentSpec {
        class_id: 0,
        name: "probe".into(),
        harmonics,
        f0_range: [200.0, 300.0],
        envelope,
        vibrato: None,
    }
}

fn pluck() -> Envelope {
    Envelope::Pluck { decay_s: 0.08, period_s: [0.25, 0.35] }
}

fn sustain() -> Envelope {
    Envelope::Sustain { attack_s: 0.05, release_s: 0.05 }
}

#[test]
fn rendering_is_bit_identical_per_seed() {
    for s in &catalog().instruments {
        let a = render_clip(s, 42, 1.05, SR).unwrap();
        let b = render_clip(s, 42, 1.05, SR).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.waveform, render_clip(s, 43, 1.05, SR).unwrap().waveform);
    }
}

#[test]
fn clips_are_peak_normalized_to_configured_length() {
    for s in &catalog().instruments {
        let c = render_clip(s, 7, 1.05, SR).unwrap();
        assert_eq!(c.waveform.len(), 8400);
        assert!((c.waveform.peak() - CLIP_PEAK).abs() < 1.0 / 32767.0);
    }
}

#[test]
fn pluck_is_more_transient_than_sustain() {
    let h = vec![1.0, 0.5, 0.25];
    let mean_ar = |env: Envelope| {
        let sp = spec(env, h.clone());
        (0..20).map(|s| amplitude_ratio(&render_clip(&sp, s, 1.05, SR).unwrap().waveform).unwrap()).sum::<f64>() / 20.0
    };
    let (p, s) = (mean_ar(pluck()), mean_ar(sustain()));
    assert!(p > s, "pluck AR {p} vs sustain AR {s}");
}

#[test]
fn single_harmonic_sustain_is_nearly_pure() {
    let sp = spec(sustain(), vec![1.0]);
    for s in 0..5 {
        let c = render_clip(&sp, s, 1.05, SR).unwrap();
        let hc = harmonic_complexity(&c.waveform, &YinConfig::default(), &HcrConfig::default()).unwrap();
        assert!(hc < 0.05, "seed {s}: {hc}");
    }
}

#[test]
fn default_catalog_covers_all_four_quadrants() {
    let cat = catalog();
    let (yin, hcr) = (YinConfig::default(), HcrConfig::default());
    let mut ar = Vec::new();
    let mut hc = Vec::new();
    for s in &cat.instruments {
        let profiles: Vec<_> = (0..50)
            .map(|seed| acoustic_profile(&render_clip(s, seed, 1.05, SR).unwrap().waveform, &yin, &hcr).unwrap())
            .collect();
        ar.push(profiles.iter().map(|p| p.amplitude_ratio).sum::<f64>() / 50.0);
        hc.push(profiles.iter().map(|p| p.harmonic_complexity).sum::<f64>() / 50.0);
    }
    let mut sorted = ar.clone();
    sorted.sort_by(f64::total_cmp);
    let (q1, q3) = (sorted[1], sorted[6]);
    assert!(ar.iter().filter(|&&a| a >= q3).count() >= 2);
    assert!(ar.iter().filter(|&&a| a <= q1).count() >= 2);
    assert!(hc.iter().filter(|&&h| h > 0.25).count() >= 2, "{hc:?}");
    assert!(hc.iter().filter(|&&h| h < 0.1).count() >= 2, "{hc:?}");
    // both transient and sustained classes on each side of the complexity split
    let transient: Vec<usize> = (0..8).filter(|&i| ar[i] > 4.0).collect();
    let sustained: Vec<usize> = (0..8).filter(|&i| ar[i] < 3.0).collect();
    for group in [&transient, &sustained] {
        assert!(group.iter().any(|&i| hc[i] > 0.25) && group.iter().any(|&i| hc[i] < 0.1), "{ar:?} {hc:?}");
    }
}

#[test]
fn mixing_with_silence_is_identity() {
    let c = render_clip(&catalog().instruments[0], 1, 1.05, SR).unwrap();
    let silent = Clip { waveform: Waveform::zeros(8400, SR), class_id: 5, seed: 0, f0_hz: None };
    let m = make_mixture(vec![c.clone(), silent]).unwrap();
    assert_eq!(m.gain, 1.0);
    assert_eq!(m.mixture, c.waveform);
}

#[test]
fn mixture_is_sum_of_sources_with_shared_gain() {
    let cat = catalog();
    let a = render_clip(&cat.instruments[1], 3, 1.05, SR).unwrap();
    let b = render_clip(&cat.instruments[3], 4, 1.05, SR).unwrap();
    let m = make_mixture(vec![a.clone(), b.clone()]).unwrap();
    let raw: Vec<f64> = a.waveform.samples().iter().zip(b.waveform.samples()).map(|(x, y)| x + y).collect();
    let raw_peak = raw.iter().fold(0.0f64, |p, v| p.max(v.abs()));
    if raw_peak > 0.99 {
        assert!((m.gain - 0.99 / raw_peak).abs() < 1e-15);
    } else {
        assert_eq!(m.gain, 1.0);
    }
    for i in 0..raw.len() {
        let s: f64 = m.sources.iter().map(|c| c.waveform.samples()[i]).sum();
        assert_eq!(m.mixture.samples()[i], s);
        assert!((m.mixture.samples()[i] - m.gain * raw[i]).abs() < 1e-12);
        assert_eq!(m.sources[0].waveform.samples()[i], m.gain * a.waveform.samples()[i]);
    }
    assert!(m.mixture.peak() <= 0.99 + 1e-12);
    let e = |w: &Waveform<f64>| w.energy();
    assert!(e(&Waveform::new(raw, SR).unwrap()) <= 2.0 * (e(&a.waveform) + e(&b.waveform)));
}

#[test]
fn mixture_rejects_mismatched_sources() {
    let cat = catalog();
    let a = render_clip(&cat.instruments[0], 1, 1.05, SR).unwrap();
    let b = render_clip(&cat.instruments[1], 1, 1.0, SR).unwrap();
    assert!(matches!(make_mixture(vec![a.clone(), b]), Err(Error::Input(_))));
    assert!(matches!(make_mixture(vec![a.clone(), a]), Err(Error::Input(_))));
}

#[test]
fn batch_has_requested_size_and_distinct_classes() {
    let s = sampler();
    let batch = s.sample_batch(&mut rng(1), 32, Split::Train).unwrap();
    assert_eq!(batch.len(), 32);
    for m in &batch {
        let ids = m.class_ids();
        assert_eq!(ids.len(), 2);
        assert_ne!(ids[0], ids[1]);
        assert_eq!(m.mixture.len(), 4288);
    }
}

#[test]
fn batches_are_deterministic_per_seed() {
    let s = sampler();
    let a = s.sample_batch(&mut rng(9), 4, Split::Train).unwrap();
    let b = s.sample_batch(&mut rng(9), 4, Split::Train).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, s.sample_batch(&mut rng(10), 4, Split::Train).unwrap());
}

#[test]
fn test_split_uses_centre_crop() {
    let s = sampler();
    let full = render_clip(&catalog().instruments[2], 5, 1.05, SR).unwrap();
    let c = s.render_crop(2, 5, Split::Test, &mut rng(0)).unwrap();
    let start = (8400 - 4288) / 2;
    assert_eq!(c.waveform.samples(), &full.waveform.samples()[start..start + 4288]);
    // training crops move
    let starts: std::collections::BTreeSet<Vec<u64>> = (0..5)
        .map(|k| {
            let t = s.render_crop(2, 5, Split::Train, &mut rng(k)).unwrap();
            t.waveform.samples()[..4].iter().map(|v| v.to_bits()).collect()
        })
        .collect();
    assert!(starts.len() > 1);
}

#[test]
fn class_draws_are_uniform() {
    let mut r = rng(123);
    let mut counts = [0usize; 8];
    let draws = 10_000;
    for _ in 0..draws {
        let ids = draw_classes(&mut r, 8, 2).unwrap();
        assert_ne!(ids[0], ids[1]);
        for i in ids {
            counts[i] += 1;
        }
    }
    let expected = 2.0 * draws as f64 / 8.0;
    for (c, &n) in counts.iter().enumerate() {
        assert!(((n as f64 - expected) / expected).abs() < 0.05, "class {c}: {n}");
    }
}

#[test]
fn too_few_classes_is_config_error() {
    let mut cat = catalog();
    cat.instruments.truncate(1);
    assert!(matches!(BatchSampler::new(cat, SamplerConfig::default()), Err(Error::Config(_))));
    assert!(matches!(draw_classes(&mut rng(0), 1, 2), Err(Error::Config(_))));
}

#[test]
fn catalog_validation() {
    let text = catalog().to_toml();
    assert_eq!(Catalog::parse(&text, SR).unwrap(), catalog());
    let high = DEFAULT_CATALOG.replacen("f0_range = [260.0, 340.0]", "f0_range = [260.0, 600.0]", 1);
    assert!(matches!(Catalog::parse(&high, SR), Err(Error::Config(_))));
    let swapped = DEFAULT_CATALOG.replacen("class_id = 0", "class_id = 9", 1);
    assert!(matches!(Catalog::parse(&swapped, SR), Err(Error::Config(_))));
    let unknown = DEFAULT_CATALOG.replacen("name = \"kalimba\"", "name = \"kalimba\"\ncolour = 3", 1);
    assert!(matches!(Catalog::parse(&unknown, SR), Err(Error::Parse { .. })));
    let silent = DEFAULT_CATALOG.replacen("harmonics = [1.0, 0.12]", "harmonics = [0.0, 0.12]", 1);
    assert!(matches!(Catalog::parse(&silent, SR), Err(Error::Config(_))));
}

#[test]
fn test_set_balances_class_pairs() {
    let t = TestSet::generate(8, 2, 200, 5).unwrap();
    assert_eq!(t.len(), 200);
    let mut counts = std::collections::BTreeMap::new();
    for it in &t.items {
        let mut p = it.class_ids.clone();
        p.sort();
        *counts.entry(p).or_insert(0) += 1;
    }
    assert_eq!(counts.len(), 28);
    assert!(counts.values().all(|&n| n == 7 || n == 8), "{counts:?}");
    assert_eq!(t, TestSet::generate(8, 2, 200, 5).unwrap());
}

#[test]
fn test_set_survives_disk_round_trip() {
    let s = sampler();
    let t = TestSet::generate(8, 2, 6, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = t.write(dir.path(), &s).unwrap();
    let (back, loaded) = TestSet::load(dir.path()).unwrap();
    assert_eq!(back, t);
    for (a, b) in written.iter().zip(&loaded) {
        assert_eq!(a.mixture, b.mixture);
        assert_eq!(a.gain, b.gain);
        for (x, y) in a.sources.iter().zip(&b.sources) {
            assert_eq!((x.class_id, x.seed), (y.class_id, y.seed));
            assert_eq!(x.waveform, y.waveform);
        }
    }
    assert_eq!(t.fingerprint(&written), t.fingerprint(&loaded));
    let manifest = std::fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().next().unwrap(), "path,class_id,seed,split,pair");
    assert_eq!(manifest.lines().count(), 1 + 12);
}

#[test]
fn three_source_mixtures_are_supported() {
    let cfg = SamplerConfig { n_sources: 3, ..SamplerConfig::default() };
    let s = BatchSampler::new(catalog(), cfg).unwrap();
    let b = s.sample_batch(&mut rng(2), 3, Split::Test).unwrap();
    assert!(b.iter().all(|m| m.sources.len() == 3));
    let t = TestSet::generate(8, 3, 10, 0).unwrap();
    assert!(t.items.iter().all(|i| i.class_ids.len() == 3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn clips_are_finite_and_within_full_scale(seed in any::<u64>(), class in 0usize..8) {
        let c = render_clip(&catalog().instruments[class], seed, 1.05, SR).unwrap();
        prop_assert!(c.waveform.samples().iter().all(|v| v.is_finite() && v.abs() <= 1.0));
        let f0 = c.f0_hz.unwrap();
        let [lo, hi] = catalog().instruments[class].f0_range;
        prop_assert!(f0 >= lo && f0 <= hi);
    }
}
