//! `avsep`: data generation, training, evaluation and analysis from the
//! shell. Results go to stdout as one path per line; logs go to stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use avsep::dsp::read_wav;
use avsep::metrics::{acoustic_map, acoustic_svg, bss_eval, write_acoustic_csv, DESK_FILTER_LEN};
use avsep::trainlab::{ablate, load_model, Benchmark, Estimator, ExperimentConfig, Lab};
use avsep::Error;
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

const CONFIG_ENV: &str = "AVSEP_CONFIG";

#[derive(Parser, Debug)]
#[command(
    name = "avsep",
    version,
    about = "Audio-visual source separation lab on synthetic instruments",
    after_help = "Config precedence, lowest first: --preset (or the file from --config / $AVSEP_CONFIG), \
                  then each --set in order, then --seed."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the frozen test set as WAVs plus manifest.csv
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Train one separator and write its run directory
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Score a checkpoint or a baseline on the frozen test set
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        what: EvalTarget,
        #[command(flatten)]
        test: TestSetArgs,
    },
    /// Train and score the fusion-mode x alignment grid
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Linear-probe accuracy of pooled bottleneck and frozen audio features
    Probe {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        pair: CheckpointPair,
        #[command(flatten)]
        test: TestSetArgs,
    },
    /// Audio-visual modality gap with and without alignment
    Gap {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        pair: CheckpointPair,
        #[command(flatten)]
        test: TestSetArgs,
    },
    /// Per-class amplitude ratio and harmonic complexity (CSV + SVG)
    AcousticMap {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// SDR/SIR/SAR of one estimate against a set of reference WAVs
    BssEval {
        /// Reference source WAV; repeat once per source
        #[arg(long = "ref", value_name = "WAV", required = true)]
        refs: Vec<PathBuf>,
        /// Estimate WAV
        #[arg(long, value_name = "WAV")]
        est: PathBuf,
        /// Index of the reference the estimate targets
        #[arg(long, default_value_t = 0)]
        target: usize,
        /// Distortion filter length in taps
        #[arg(long, default_value_t = DESK_FILTER_LEN)]
        filter_len: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Print the version
    Version,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Experiment config file (TOML). Falls back to $AVSEP_CONFIG when
    /// neither this nor --preset is given
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration
    #[arg(long, value_name = "NAME", default_value = "desk", value_parser = ExperimentConfig::PRESETS)]
    preset: String,
    /// Override one key, e.g. train.batch=8; repeatable, applied in order
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_kv)]
    sets: Vec<(String, String)>,
    /// Training seed; shorthand for --set train.seed=N
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Run directory; every output of the command goes under it
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct EvalTarget {
    /// Model checkpoint to evaluate
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Score a reference estimator instead of a model
    #[arg(long, value_enum, value_name = "KIND")]
    baseline: Option<Baseline>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Baseline {
    /// The mixture stands in for every source
    Mixture,
    /// Ideal ratio mask
    Irm,
}

#[derive(Args, Debug)]
struct CheckpointPair {
    /// Checkpoint trained with alignment
    #[arg(long, value_name = "PATH")]
    aligned: PathBuf,
    /// Checkpoint trained without alignment
    #[arg(long, value_name = "PATH")]
    unaligned: PathBuf,
}

#[derive(Args, Debug)]
struct TestSetArgs {
    /// Test set written by gen-data; rendered from eval.* when absent
    #[arg(long, value_name = "DIR")]
    test_set: Option<PathBuf>,
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(format!("expected KEY=VALUE, got `{s}`")),
    }
}

/// Failures split by exit code.
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome<T> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let sub = matches.subcommand().map(|(_, m)| m);
    match run(cli.cmd, sub) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command, sub: Option<&ArgMatches>) -> Outcome<Vec<PathBuf>> {
    match cmd {
        Command::GenData { cfg, out } => {
            let cfg = resolve(&cfg, sub)?;
            let dir = prepare(&out.out, &cfg)?;
            let lab = Lab::new(cfg)?;
            let ts = avsep::synthband::TestSet::generate(
                lab.sampler.catalog().len(),
                lab.cfg.sampler.n_sources,
                lab.cfg.eval.test_items,
                lab.cfg.eval.test_seed,
            )?;
            ts.write(&dir, &lab.sampler)?;
            Ok(vec![dir.join("manifest.csv")])
        }
        Command::Train { cfg, out } => {
            let cfg = resolve(&cfg, sub)?;
            avsep::trainlab::train(&cfg, Some(&out.out))?;
            Ok(vec![out.out.join("model.ckpt")])
        }
        Command::Eval { cfg, out, what, test } => {
            let cfg = resolve(&cfg, sub)?;
            let dir = prepare(&out.out, &cfg)?;
            let lab = Lab::new(cfg)?;
            let bench = benchmark(&lab, &test)?;
            let model = what.checkpoint.as_deref().map(|p| load_model(&lab.cfg, p)).transpose()?;
            let est = match (&model, what.baseline) {
                (Some(m), _) => Estimator::Model(m),
                (None, Some(Baseline::Mixture)) => Estimator::Mixture,
                (None, Some(Baseline::Irm)) => Estimator::IdealRatio,
                (None, None) => unreachable!("clap requires one of --checkpoint and --baseline"),
            };
            let table = lab.evaluate(est, &bench, Some(&dir.join("examples")))?;
            let path = dir.join("eval.csv");
            table.write_csv(&path)?;
            log::info!("overall SDR {:.3} dB over {} clips", table.overall.sdr_db, table.overall.n_clips);
            Ok(vec![path])
        }
        Command::Ablate { cfg, out } => {
            let cfg = resolve(&cfg, sub)?;
            let dir = prepare(&out.out, &cfg)?;
            ablate(&cfg, Some(&dir))?;
            Ok(vec![dir.join("ablation.csv")])
        }
        Command::Probe { cfg, out, pair, test } => probe_or_gap(&cfg, sub, &out, &pair, &test, Report::Probe),
        Command::Gap { cfg, out, pair, test } => probe_or_gap(&cfg, sub, &out, &pair, &test, Report::Gap),
        Command::AcousticMap { cfg, out } => {
            let cfg = resolve(&cfg, sub)?;
            let dir = prepare(&out.out, &cfg)?;
            let a = &cfg.acoustic;
            let rows = acoustic_map(
                &cfg.catalog()?,
                a.seeds_per_class as usize,
                a.duration_s,
                cfg.sampler.sample_rate,
                &a.yin,
                &a.hcr,
            )?;
            let csv = dir.join("acoustic_map.csv");
            write_acoustic_csv(&csv, &rows)?;
            let svg = dir.join("acoustic_map.svg");
            write(&svg, &acoustic_svg(&rows))?;
            Ok(vec![csv, svg])
        }
        Command::BssEval {
            refs,
            est,
            target,
            filter_len,
            out,
        } => {
            if target >= refs.len() {
                return Err(Failure::Usage(format!(
                    "--target {target} is out of range for {} --ref file(s)",
                    refs.len()
                )));
            }
            let references = refs.iter().map(|p| read_wav::<f64>(p)).collect::<Result<Vec<_>, _>>()?;
            let estimate = read_wav::<f64>(&est)?;
            let m = bss_eval(&references, &estimate, target, filter_len)?.capped();
            create(&out.out)?;
            let path = out.out.join("bss_eval.csv");
            let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
            w.write_record(["target", "sdr", "sir", "sar"]).map_err(Error::from)?;
            w.write_record([
                target.to_string(),
                format!("{:.6}", m.sdr_db),
                format!("{:.6}", m.sir_db),
                format!("{:.6}", m.sar_db),
            ])
            .map_err(Error::from)?;
            w.flush().map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            Ok(vec![path])
        }
        Command::Version => {
            println!("avsep {}", env!("CARGO_PKG_VERSION"));
            Ok(vec![])
        }
    }
}

#[derive(Clone, Copy)]
enum Report {
    Probe,
    Gap,
}

fn probe_or_gap(
    cfg: &ConfigArgs,
    sub: Option<&ArgMatches>,
    out: &OutArgs,
    pair: &CheckpointPair,
    test: &TestSetArgs,
    which: Report,
) -> Outcome<Vec<PathBuf>> {
    let cfg = resolve(cfg, sub)?;
    let dir = prepare(&out.out, &cfg)?;
    let lab = Lab::new(cfg)?;
    let bench = benchmark(&lab, test)?;
    let aligned = load_model(&lab.cfg, &pair.aligned)?;
    let unaligned = load_model(&lab.cfg, &pair.unaligned)?;
    let report = lab.probe_and_gap(&aligned, &unaligned, &bench)?;
    let path = match which {
        Report::Probe => {
            let p = dir.join("probe.csv");
            report.write_probe_csv(&p)?;
            p
        }
        Report::Gap => {
            let p = dir.join("gap.csv");
            report.write_gap_csv(&p)?;
            p
        }
    };
    Ok(vec![path])
}

/// Build the effective config: file or preset, then `--set`, then `--seed`.
fn resolve(args: &ConfigArgs, sub: Option<&ArgMatches>) -> Outcome<ExperimentConfig> {
    let mut overrides = args.sets.clone();
    if let Some(seed) = args.seed {
        if let Some((k, _)) = overrides.iter().find(|(k, _)| k == "train.seed") {
            return Err(Failure::Usage(format!(
                "the argument '--seed <N>' cannot be used with '--set {k}=...'"
            )));
        }
        overrides.push(("train.seed".into(), seed.to_string()));
    }
    let preset_explicit = sub.and_then(|m| m.value_source("preset")) == Some(ValueSource::CommandLine);
    let file = match &args.config {
        Some(p) => Some(p.clone()),
        None if !preset_explicit => std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from),
        None => None,
    };
    match file {
        Some(path) => {
            if !path.is_file() {
                return Err(Failure::Usage(format!("config file {} does not exist", path.display())));
            }
            Ok(ExperimentConfig::load(&path, &overrides)?)
        }
        None => {
            let base = ExperimentConfig::preset(&args.preset)?;
            Ok(ExperimentConfig::from_toml_with(&base.to_toml(), &overrides)?)
        }
    }
}

/// Create the run directory and snapshot the effective config into it.
fn prepare(dir: &Path, cfg: &ExperimentConfig) -> Outcome<PathBuf> {
    create(dir)?;
    write(&dir.join("config.toml"), &cfg.to_toml())?;
    Ok(dir.to_path_buf())
}

fn benchmark(lab: &Lab, test: &TestSetArgs) -> Outcome<Benchmark> {
    Ok(match &test.test_set {
        Some(d) => Benchmark::load(d, &lab.cfg, &lab.sampler, &lab.frontend)?,
        None => Benchmark::generate(&lab.cfg, &lab.sampler, &lab.frontend)?,
    })
}

fn create(dir: &Path) -> Outcome<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(Error::Io {
        path: dir.to_path_buf(),
        source: e,
    }))
}

fn write(path: &Path, text: &str) -> Outcome<()> {
    std::fs::write(path, text).map_err(|e| Failure::Runtime(Error::Io {
        path: path.to_path_buf(),
        source: e,
    }))
}
