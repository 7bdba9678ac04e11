//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria 5 to 7 train the fusion x alignment grid three times on the
//! `quick` preset (about 14 minutes per grid on one core). Set
//! `AVSEP_ACCEPT_DIR` to keep the run directories, and
//! `AVSEP_ACCEPT_STRICT=1` to exit non-zero when a criterion fails.

mod common;

use std::f64::consts::{PI, SQRT_2, TAU};
use std::path::{Path, PathBuf};
use std::time::Instant;

use avsep::dsp::*;
use avsep::metrics::*;
use avsep::separator::FusionMode;
use avsep::synthband::Envelope;
use avsep::trainlab::*;
use common::*;

const SR: u32 = 8000;
const SEEDS: [u64; 3] = [0, 1, 2];
const LAMBDA: f64 = 0.1;

struct Verdict {
    pass: bool,
    lines: Vec<String>,
}

impl Verdict {
    fn new() -> Self {
        Verdict {
            pass: true,
            lines: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: String) {
        self.pass &= ok;
        self.lines.push(format!("{} {what}", if ok { "ok  " } else { "MISS" }));
    }

    fn note(&mut self, what: String) {
        self.lines.push(format!("     {what}"));
    }
}

fn report(id: usize, title: &str, v: &Verdict, secs: f64) -> bool {
    println!(
        "[{}] {id}. {title} ({secs:.1} s)",
        if v.pass { "PASS" } else { "FAIL" }
    );
    for l in &v.lines {
        println!("       {l}");
    }
    v.pass
}

fn timed(f: impl FnOnce() -> Verdict) -> (Verdict, f64) {
    let t0 = Instant::now();
    let v = f();
    (v, t0.elapsed().as_secs_f64())
}

fn wave(v: Vec<f64>) -> Waveform<f64> {
    Waveform::new(v, SR).unwrap()
}

fn tone(partials: &[(f64, f64, f64)], n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / SR as f64;
            partials.iter().map(|&(f, a, p)| a * (TAU * f * t + p).sin()).sum()
        })
        .collect()
}

// ---------------------------------------------------------------- 1

fn numerical_core() -> Verdict {
    let mut v = Verdict::new();
    let mut worst: (f64, String) = (0.0, String::new());
    let mut n_checks = 0;
    for seed in 0..10 {
        let mut cases = op_cases(seed);
        let (b, i) = composite_case(seed);
        cases.push(("composite", b, i));
        for (name, build, inputs) in cases {
            let err = gradcheck(build.as_ref(), &inputs, seed);
            n_checks += 1;
            if !(err <= worst.0) {
                worst = (err, format!("{name} seed {seed}"));
            }
        }
    }
    v.check(
        worst.0 < 1e-4,
        format!("gradcheck: {n_checks} op/seed pairs over 10 seeds, worst rel err {:.2e} ({})", worst.0, worst.1),
    );
    let geoms = [(8, 4, 2, 1), (6, 3, 1, 1), (9, 3, 2, 0), (5, 1, 1, 0), (7, 3, 2, 1)];
    let mut gap: f64 = 0.0;
    for seed in 0..10 {
        for &(hw, ks, stride, pad) in &geoms {
            gap = gap.max(adjoint_gap(seed, 2, 3, 2, hw, ks, stride, pad));
        }
    }
    v.check(gap < 1e-9, format!("conv / conv-transpose adjoint: max gap {gap:.2e}"));
    v
}

// ---------------------------------------------------------------- 2

fn dsp() -> Verdict {
    let mut v = Verdict::new();
    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    let sine: Vec<f64> = (0..4288).map(|i| (2.0 * PI * 440.0 * i as f64 / SR as f64).sin()).collect();
    for (x, win, hop) in [
        (white_noise(&mut r, 64 * 63 + 256, 1.0), 256, 64),
        (white_noise(&mut r, 256 * 20 + 1024, 1.0), 1024, 256),
        (sine, 256, 64),
    ] {
        let y = istft(&stft(&wave(x.clone()), win, hop).unwrap()).unwrap();
        let y = y.samples();
        let e = (win - hop..y.len() - (win - hop))
            .map(|i| (y[i] - x[i]).abs())
            .fold(0.0, f64::max);
        worst = worst.max(e);
    }
    v.check(worst < 1e-10, format!("istft(stft(x)) interior max abs error {worst:.2e}"));

    let mut worst: f64 = 0.0;
    for (n_lin, f_out, centre, width) in [(129, 64, 30.0, 12.0), (513, 256, 120.0, 30.0), (129, 64, 45.0, 16.0)] {
        let frame: Vec<f64> = (0..n_lin)
            .map(|k| (-0.5 * ((k as f64 - centre) / width).powi(2)).exp())
            .collect();
        let g = Grid::new(1, n_lin, frame).unwrap();
        let back = inv_log_freq_warp(&log_freq_warp(&g, f_out).unwrap()).unwrap();
        worst = worst.max(rel_l2(back.data(), g.data()));
    }
    v.check(worst < 1e-2, format!("log-warp round trip on smooth spectra: worst rel L2 {worst:.2e}"));

    let mut exact = true;
    for seed in 0..5 {
        let mut r = rng(100 + seed);
        let mag = Grid::new(16, 129, white_noise(&mut r, 16 * 129, 1.0).iter().map(|x| x.abs()).collect()).unwrap();
        let x = log_freq_warp(&mag, 64).unwrap();
        let ones = Mask::new(Grid::from_fn(16, 64, |_, _| 1.0)).unwrap();
        exact &= apply_mask(&x, &ones).unwrap() == x;
        let m = Mask::new(Grid::new(16, 64, white_noise(&mut r, 16 * 64, 1.0).iter().map(|x| x.abs()).collect()).unwrap())
            .unwrap();
        let y = apply_mask(&x, &m).unwrap();
        exact &= (0..16).all(|t| (0..64).all(|f| y.grid().get(t, f) == m.grid().get(t, f) * x.grid().get(t, f)));
    }
    v.check(exact, "apply_mask is the exact elementwise product (ones mask is the identity)".into());
    v
}

// ---------------------------------------------------------------- 3

fn bss() -> Verdict {
    let mut v = Verdict::new();
    let n = 1024;
    let refs = |seed: u64| {
        let mut r = rng(seed);
        (white_noise(&mut r, n, 0.5), white_noise(&mut r, n, 0.5))
    };
    let mut dev: f64 = 0.0;
    for seed in 0..3 {
        let (s1, s2) = refs(10 + seed);
        let basis = delay_basis(&[&s1, &s2], DESK_FILTER_LEN);
        let mut r = rng(20 + seed);
        let w = rescale(&orthogonalize(&white_noise(&mut r, n, 1.0), &basis), 0.01 * norm2(&s1));
        let est: Vec<f64> = s1.iter().zip(&w).map(|(a, b)| a + b).collect();
        let m = bss_eval(&[wave(s1), wave(s2)], &wave(est), 0, DESK_FILTER_LEN).unwrap();
        dev = dev.max((m.sdr_db - 20.0).abs()).max((m.sar_db - 20.0).abs());
    }
    v.check(dev < 0.1, format!("orthogonal noise at -20 dB: SDR, SAR max |x - 20| = {dev:.4} dB"));

    let mut dev: f64 = 0.0;
    for seed in 0..3 {
        let (mut s1, mut s2) = refs(30 + seed);
        for s in [&mut s1, &mut s2] {
            s[n - DESK_FILTER_LEN..].fill(0.0);
        }
        let basis = delay_basis(&[&s1], DESK_FILTER_LEN);
        let s2o = rescale(&orthogonalize(&s2, &basis), norm2(&s1));
        let est: Vec<f64> = s1.iter().zip(&s2o).map(|(a, b)| a + 0.1 * b).collect();
        let m = bss_eval(&[wave(s1), wave(s2)], &wave(est), 0, DESK_FILTER_LEN).unwrap();
        dev = dev.max((m.sdr_db - 20.0).abs()).max((m.sir_db - 20.0).abs());
    }
    v.check(dev < 0.1, format!("orthogonal interference at -20 dB: SDR, SIR max |x - 20| = {dev:.4} dB"));

    let (mut orth, mut scale): (f64, f64) = (0.0, 0.0);
    for seed in 0..20u64 {
        let (s1, s2) = refs(500 + seed);
        let mut r = rng(600 + seed);
        let w = white_noise(&mut r, n, 0.2);
        let mix = 0.05 * seed as f64;
        let est: Vec<f64> = (0..n).map(|i| s1[i] + mix * s2[i] + w[i]).collect();
        let refs = [wave(s1), wave(s2)];
        let dec = bss_decompose(&refs, &wave(est.clone()), 0, DESK_FILTER_LEN).unwrap();
        let parts = [&dec.target, &dec.interf, &dec.artif];
        let e2 = norm2(&est);
        for i in 0..3 {
            for j in 0..i {
                orth = orth.max(dot(parts[i], parts[j]).abs() / e2);
            }
        }
        let m1 = bss_eval(&refs, &wave(est.clone()), 0, DESK_FILTER_LEN).unwrap();
        let est3: Vec<f64> = est.iter().map(|x| 3.7 * x).collect();
        let m2 = bss_eval(&refs, &wave(est3), 0, DESK_FILTER_LEN).unwrap();
        scale = scale
            .max((m1.sdr_db - m2.sdr_db).abs())
            .max((m1.sir_db - m2.sir_db).abs())
            .max((m1.sar_db - m2.sar_db).abs());
    }
    v.check(orth < 1e-6, format!("decomposition orthogonality: max |<a,b>| / |est|^2 = {orth:.2e}"));
    v.check(scale < 1e-9, format!("scale invariance (x3.7): max metric change {scale:.2e} dB"));
    v
}

// ---------------------------------------------------------------- 4

fn appendix_metrics() -> Verdict {
    let mut v = Verdict::new();
    let (yin, hcr) = (YinConfig::default(), HcrConfig::default());
    let ar = amplitude_ratio(&wave(tone(&[(100.0, 0.7, 0.3)], 8000))).unwrap();
    v.check((ar - SQRT_2).abs() < 1e-3, format!("AR(sine) = {ar:.6} (sqrt 2 = {SQRT_2:.6})"));

    let c = harmonic_complexity(&wave(tone(&[(210.0, 0.8, 0.0)], 8000)), &yin, &hcr).unwrap();
    v.check(c.abs() < 0.02, format!("complexity(pure sine) = {c:.5}"));

    let equal: Vec<(f64, f64, f64)> = (1..=8).map(|k| (210.0 * k as f64, 0.1, 0.7 * k as f64)).collect();
    let c = harmonic_complexity(&wave(tone(&equal, 8000)), &yin, &hcr).unwrap();
    v.check((c - 0.66027).abs() < 0.01, format!("complexity(8 equal harmonics) = {c:.5} (0.66027)"));

    let mut worst: f64 = 0.0;
    let mut n = 0;
    for f0 in [82.0, 131.0, 220.0, 250.0, 333.0, 440.0, 610.0] {
        for stack in [vec![(f0, 0.8, 0.0)], (1..=4).map(|k| (f0 * k as f64, 0.3 / k as f64, k as f64)).collect()] {
            let est = yin_f0(&wave(tone(&stack, 8000)), &yin).unwrap();
            n += 1;
            worst = worst.max(est.map_or(f64::INFINITY, |f| (f - f0).abs()));
        }
    }
    v.check(worst < 1.0, format!("YIN on {n} clean tones (82..610 Hz): max |f0 error| {worst:.3} Hz"));
    v
}

// ---------------------------------------------------------------- 5-7

struct SeedRun {
    seed: u64,
    report: AblationReport,
    probes: ProbeGapReport,
    secs: f64,
}

fn run_grid(base: &ExperimentConfig, seed: u64, root: &Path) -> SeedRun {
    let t0 = Instant::now();
    let mut cfg = base.clone();
    cfg.train.seed = seed;
    let report = ablate(&cfg, Some(&root.join(format!("seed{seed}")))).expect("ablation runs");
    let secs = t0.elapsed().as_secs_f64();
    let lab = Lab::new(cfg.clone()).unwrap();
    let bench = Benchmark::generate(&cfg, &lab.sampler, &lab.frontend).unwrap();
    let cell = |align| &report.cell(FusionMode::Hierarchical, align).unwrap().model;
    let probes = lab.probe_and_gap(cell(true), cell(false), &bench).expect("probe runs");
    SeedRun {
        seed,
        report,
        probes,
        secs,
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn cell_sdr(runs: &[SeedRun], mode: FusionMode, align: bool) -> f64 {
    mean(runs.iter().map(|r| r.report.cell(mode, align).unwrap().table.overall.sdr_db))
}

fn separation(runs: &[SeedRun]) -> Verdict {
    let mut v = Verdict::new();
    let mixture = mean(runs.iter().map(|r| r.report.mixture.overall.sdr_db));
    let oracle = mean(runs.iter().map(|r| r.report.oracle.overall.sdr_db));
    v.note(format!("mixture-as-estimate {mixture:.3} dB, ideal ratio mask {oracle:.3} dB"));
    for mode in FusionMode::ALL {
        for align in [true, false] {
            let sdr = cell_sdr(runs, mode, align);
            let per_seed: Vec<String> = runs
                .iter()
                .map(|r| format!("{:.2}", r.report.cell(mode, align).unwrap().table.overall.sdr_db))
                .collect();
            v.check(
                sdr >= mixture + 3.0,
                format!(
                    "{mode:<12} {:<7} mean SDR {sdr:.3} dB = mixture {:+.3} dB (seeds {})",
                    if align { "align" } else { "noalign" },
                    sdr - mixture,
                    per_seed.join(", ")
                ),
            );
        }
    }
    let (m, l, h) = (
        cell_sdr(runs, FusionMode::Middle, true),
        cell_sdr(runs, FusionMode::Late, true),
        cell_sdr(runs, FusionMode::Hierarchical, true),
    );
    v.check(
        h >= m.max(l) - 0.5,
        format!("aligned Hierarchical {h:.3} >= max(Middle {m:.3}, Late {l:.3}) - 0.5"),
    );
    let (m0, l0, h0) = (
        cell_sdr(runs, FusionMode::Middle, false),
        cell_sdr(runs, FusionMode::Late, false),
        cell_sdr(runs, FusionMode::Hierarchical, false),
    );
    v.note(format!(
        "unaligned for reference: Hierarchical {h0:.3}, Middle {m0:.3}, Late {l0:.3}"
    ));
    let worst = runs
        .iter()
        .flat_map(|r| r.report.cells.iter())
        .map(|c| c.sep_last_epoch / c.sep_first_epoch)
        .fold(0.0, f64::max);
    v.note(format!(
        "training progress: worst last/first epoch sep-loss ratio {worst:.3} over {} runs",
        3 * 6
    ));
    let slowest = runs.iter().map(|r| r.secs).fold(0.0, f64::max);
    v.check(
        slowest <= 45.0 * 60.0,
        format!("slowest six-cell grid {:.1} min (budget 45)", slowest / 60.0),
    );
    v
}

/// Clip-weighted SDR over `classes` for one cell.
fn group_sdr(table: &EvalTable, classes: &[usize]) -> f64 {
    let rows: Vec<&EvalRow> = classes.iter().filter_map(|&c| table.class(c)).collect();
    let n: usize = rows.iter().map(|r| r.n_clips).sum();
    rows.iter().map(|r| r.sdr_db * r.n_clips as f64).sum::<f64>() / n as f64
}

fn fusion_acoustics(runs: &[SeedRun], cfg: &ExperimentConfig) -> Verdict {
    let mut v = Verdict::new();
    let catalog = cfg.catalog().unwrap();
    let a = &cfg.acoustic;
    let map = acoustic_map(&catalog, a.seeds_per_class as usize, a.duration_s, cfg.sampler.sample_rate, &a.yin, &a.hcr)
        .unwrap();
    let top2 = |mut rows: Vec<&ClassAcoustics>, key: fn(&ClassAcoustics) -> f64| {
        rows.sort_by(|x, y| key(y).total_cmp(&key(x)));
        rows.iter().take(2).map(|r| (r.class_id, r.name.clone())).collect::<Vec<_>>()
    };
    let transient = top2(map.iter().collect(), |r| r.mean_ar);
    let sustained = map
        .iter()
        .filter(|r| matches!(catalog.get(r.class_id).unwrap().envelope, Envelope::Sustain { .. }))
        .collect();
    let complex = top2(sustained, |r| r.mean_complexity);

    let group = |pair: &[(usize, String)], mode| {
        let ids: Vec<usize> = pair.iter().map(|p| p.0).collect();
        mean(runs.iter().map(|r| group_sdr(&r.report.cell(mode, true).unwrap().table, &ids)))
    };
    let names = |pair: &[(usize, String)]| pair.iter().map(|p| p.1.as_str()).collect::<Vec<_>>().join("+");
    for (label, pair, favoured, other) in [
        ("top-AR", &transient, FusionMode::Middle, FusionMode::Late),
        ("complex sustained", &complex, FusionMode::Late, FusionMode::Middle),
    ] {
        let (m, l, h) = (
            group(pair, FusionMode::Middle),
            group(pair, FusionMode::Late),
            group(pair, FusionMode::Hierarchical),
        );
        v.note(format!(
            "{label} pair {}: Middle {m:.3}, Late {l:.3}, Hierarchical {h:.3} dB",
            names(pair)
        ));
        let (f, o) = (group(pair, favoured), group(pair, other));
        v.check(f >= o - 0.3, format!("{label}: {favoured} {f:.3} >= {other} {o:.3} - 0.3"));
        v.check(
            h >= m.max(l) - 1.0,
            format!("{label}: Hierarchical {h:.3} within 1 dB of the better mode {:.3}", m.max(l)),
        );
    }
    v
}

fn alignment(runs: &[SeedRun]) -> Verdict {
    let mut v = Verdict::new();
    let (mut probe_wins, mut gap_wins) = (0, 0);
    for r in runs {
        let p = &r.probes;
        let (pa, pu) = (p.probe(ALIGNED_ROW).unwrap().accuracy, p.probe(UNALIGNED_ROW).unwrap().accuracy);
        let (ga, gu) = (p.gap(ALIGNED_ROW).unwrap().gap, p.gap(UNALIGNED_ROW).unwrap().gap);
        probe_wins += usize::from(pa > pu);
        gap_wins += usize::from(ga < gu);
        v.note(format!(
            "seed {}: probe align {pa:.4} vs noalign {pu:.4}; gap align {ga:.4} vs noalign {gu:.4}",
            r.seed
        ));
    }
    v.check(probe_wins >= 2, format!("probe strictly higher with alignment in {probe_wins}/3 seeds"));
    v.check(gap_wins >= 2, format!("gap strictly lower with alignment in {gap_wins}/3 seeds"));
    let clap: Vec<f64> = runs.iter().map(|r| r.probes.probe(CLAP_ROW).unwrap().accuracy).collect();
    v.check(
        clap.windows(2).all(|w| w[0] == w[1]),
        format!("frozen audio-embedder probe row identical across seeds: {clap:?}"),
    );
    v
}

// ---------------------------------------------------------------- 8

fn csvs(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, d: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

/// Every stage that writes a CSV, into `dir`.
fn pipeline(cfg: &ExperimentConfig, dir: &Path) {
    let lab = Lab::new(cfg.clone()).unwrap();
    let bench = Benchmark::generate(cfg, &lab.sampler, &lab.frontend).unwrap();
    bench.test_set.write(&dir.join("data"), &lab.sampler).unwrap();
    let run = lab.train(Some(&dir.join("train"))).unwrap();
    lab.evaluate(Estimator::Model(&run.model), &bench, None)
        .unwrap()
        .write_csv(&dir.join("train/eval.csv"))
        .unwrap();
    let report = ablate(cfg, Some(&dir.join("ablate"))).unwrap();
    let cell = |align| &report.cell(FusionMode::Hierarchical, align).unwrap().model;
    let pg = lab.probe_and_gap(cell(true), cell(false), &bench).unwrap();
    pg.write_probe_csv(&dir.join("probe.csv")).unwrap();
    pg.write_gap_csv(&dir.join("gap.csv")).unwrap();
    let a = &cfg.acoustic;
    let map = acoustic_map(&cfg.catalog().unwrap(), 3, a.duration_s, cfg.sampler.sample_rate, &a.yin, &a.hcr).unwrap();
    write_acoustic_csv(&dir.join("acoustic_map.csv"), &map).unwrap();
}

fn reproducibility(runs: &[SeedRun], quick: &ExperimentConfig, root: &Path) -> Verdict {
    let mut v = Verdict::new();
    let mut tiny = ExperimentConfig::desk();
    tiny.separator.base_channels = 4;
    tiny.separator.c_out = 4;
    tiny.separator.c_mid = 4;
    tiny.train.batch = 2;
    tiny.train.epochs = 2;
    tiny.train.steps_per_epoch = 3;
    tiny.train.decay_epoch = 1;
    tiny.eval.test_items = 56;
    tiny.train.seed = 5;
    let (a, b) = (root.join("repro_a"), root.join("repro_b"));
    pipeline(&tiny, &a);
    pipeline(&tiny, &b);
    let (ca, cb) = (csvs(&a), csvs(&b));
    let differing: Vec<String> = ca
        .iter()
        .zip(&cb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    v.check(
        ca.len() == cb.len() && differing.is_empty(),
        format!(
            "full pipeline (test set, train, eval, ablate, probe, gap, acoustic map) twice: {} CSVs, {} differ {:?}",
            ca.len(),
            differing.len(),
            differing
        ),
    );

    // one grid cell at the acceptance scale, retrained from scratch
    let seed = runs[0].seed;
    let mut cfg = quick.cell(FusionMode::Hierarchical, LAMBDA);
    cfg.train.seed = seed;
    let dir = root.join("repro_cell");
    let lab = Lab::new(cfg.clone()).unwrap();
    let run = lab.train(Some(&dir)).unwrap();
    let bench = Benchmark::generate(&cfg, &lab.sampler, &lab.frontend).unwrap();
    lab.evaluate(Estimator::Model(&run.model), &bench, None)
        .unwrap()
        .write_csv(&dir.join("eval.csv"))
        .unwrap();
    let orig = root.join(format!("seed{seed}/hierarchical_align"));
    for f in ["loss.csv", "eval.csv"] {
        let same = std::fs::read(dir.join(f)).unwrap() == std::fs::read(orig.join(f)).unwrap();
        v.check(same, format!("quick-preset hierarchical_align seed {seed} retrained: {f} byte-identical"));
    }
    v
}

fn main() {
    let strict = std::env::var("AVSEP_ACCEPT_STRICT").is_ok_and(|s| s == "1");
    let tmp;
    let root = match std::env::var_os("AVSEP_ACCEPT_DIR") {
        Some(d) => PathBuf::from(d),
        None => {
            tmp = tempfile::tempdir().unwrap();
            tmp.path().to_path_buf()
        }
    };
    std::fs::create_dir_all(&root).unwrap();
    let mut results = Vec::new();
    let minute = |v: Verdict, secs: f64| {
        let mut v = v;
        v.check(secs < 60.0, format!("runtime {secs:.1} s < 60 s"));
        (v, secs)
    };

    let (v, s) = timed(numerical_core);
    let (v, s) = minute(v, s);
    results.push(report(1, "numerical core: gradient checks and conv adjoint", &v, s));
    let (v, s) = timed(dsp);
    let (v, s) = minute(v, s);
    results.push(report(2, "DSP: STFT round trip, log warp, mask identity", &v, s));
    let (v, s) = timed(bss);
    let (v, s) = minute(v, s);
    results.push(report(3, "BSS-eval oracles", &v, s));
    let (v, s) = timed(appendix_metrics);
    let (v, s) = minute(v, s);
    results.push(report(4, "acoustic metric closed forms", &v, s));

    let mut quick = ExperimentConfig::quick();
    quick.separator.lambda = LAMBDA;
    let t0 = Instant::now();
    let runs: Vec<SeedRun> = SEEDS
        .iter()
        .map(|&seed| {
            let r = run_grid(&quick, seed, &root);
            println!("       (grid for seed {seed} finished in {:.1} min)", r.secs / 60.0);
            r
        })
        .collect();
    let grid_secs = t0.elapsed().as_secs_f64();
    let (v, _) = timed(|| separation(&runs));
    results.push(report(5, "separation learning across fusion modes", &v, grid_secs));
    let (v, s) = timed(|| fusion_acoustics(&runs, &quick));
    results.push(report(6, "fusion mode vs acoustic character", &v, s));
    let (v, s) = timed(|| alignment(&runs));
    results.push(report(7, "alignment: probe accuracy and modality gap", &v, s));
    let (v, s) = timed(|| reproducibility(&runs, &quick, &root));
    results.push(report(8, "reproducibility: byte-identical CSVs on re-run", &v, s));

    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if strict && passed < results.len() {
        std::process::exit(1);
    }
}
