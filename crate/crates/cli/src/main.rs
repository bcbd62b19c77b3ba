use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use codedc::config::{parse_faults, parse_kv, ConfigError, TrainSpec, TRAIN_KEYS};
use codedc::experiments::{
    decoder_bench, log_table, report_lines, threshold_sweep, tolerance_region, tradeoff, write_csv,
    BenchSpec, Table,
};
use codedc_core::decoder::DecodeMode;
use codedc_core::dnn::autoencoder::autoencoder_train;
use codedc_core::dnn::protocol::train;
use codedc_core::Error as CoreError;

const EXIT_CONFIG: u8 = 2;
const EXIT_DECODE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "codedc",
    version,
    about = "Coded matrix products and fault-tolerant DNN training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Root seed; for training it overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Recovery thresholds across block splits.
    #[command(name = "threshold_sweep", alias = "threshold-sweep")]
    ThresholdSweep {
        #[arg(long, default_value_t = 20)]
        k_max: usize,
        #[arg(long, default_value_t = 1000)]
        workers: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Threshold against communication, with the Pareto frontier.
    Tradeoff {
        #[arg(long, default_value_t = 12)]
        k: usize,
        #[arg(long, default_value_t = 240)]
        n1: usize,
        #[arg(long, default_value_t = 12)]
        batch: usize,
        #[arg(long, default_value_t = 1000)]
        workers: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Tolerable errors per strategy as the cluster grows.
    #[command(name = "tolerance_region", alias = "tolerance-region")]
    ToleranceRegion {
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        d1: usize,
        #[arg(long, default_value_t = 1)]
        d2: usize,
        #[arg(long, default_value_t = 8)]
        p_min: usize,
        #[arg(long, default_value_t = 64)]
        p_max: usize,
        #[arg(long, default_value_t = 4)]
        step: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo decoder rates.
    #[command(name = "decoder_bench", alias = "decoder-bench")]
    DecoderBench {
        #[arg(long, default_value_t = 12)]
        workers: usize,
        #[arg(long, default_value_t = 4)]
        q: usize,
        #[arg(long, default_value_t = 8)]
        k_max: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// adversarial or probabilistic
        #[arg(long, default_value = "probabilistic")]
        mode: String,
        /// Record wall-clock decode time (makes output run-dependent).
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Coded training run from a config file.
    Train(TrainArgs),
    /// Coded sparse autoencoder run from a config file.
    Autoencoder(TrainArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: PathBuf,
    /// Fault schedule file.
    #[arg(long)]
    faults: Option<PathBuf>,
    /// Extra `key=value` settings applied over the config file.
    #[arg(long = "set")]
    set: Vec<String>,
    #[command(flatten)]
    common: Common,
}

enum Failure {
    Config(String),
    Decode(String),
    Other(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Unrecoverable(_) => Failure::Decode(e.to_string()),
            CoreError::Io(_) | CoreError::Checkpoint(_) => Failure::Other(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn kv<T: ToString>(pairs: &[(&str, T)]) -> Vec<(String, String)> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn emit(
    out: &Path,
    command: &str,
    spec: &[(String, String)],
    table: &Table,
) -> Result<(), Failure> {
    write_csv(out, command, spec, table)?;
    Ok(())
}

fn run_train(args: &TrainArgs, autoencoder: bool) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Failure::Config(format!("{}: {e}", args.config.display())))?;
    let mut map = parse_kv(&text, TRAIN_KEYS)?;
    for s in &args.set {
        map.extend(parse_kv(s, TRAIN_KEYS)?);
    }
    if let Some(seed) = args.common.seed {
        map.insert("seed".into(), seed.to_string());
    }
    let spec = TrainSpec::from_map(&map, autoencoder)?;
    let explicit = match &args.faults {
        Some(p) => {
            Some(parse_faults(&fs::read_to_string(p).map_err(|e| {
                Failure::Config(format!("{}: {e}", p.display()))
            })?)?)
        }
        None => None,
    };
    let schedule = spec.schedule(explicit);
    let report = if autoencoder {
        autoencoder_train(&spec.config, &schedule)?
    } else {
        train(&spec.config, &schedule)?
    };
    let command = if autoencoder { "autoencoder" } else { "train" };
    emit(
        &args.common.out,
        command,
        &spec.resolved(),
        &log_table(&report),
    )?;
    for line in report_lines(&report) {
        println!("{line}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::ThresholdSweep {
            k_max,
            workers,
            common,
        } => {
            let spec = kv(&[("k_max", k_max), ("workers", workers)]);
            emit(
                &common.out,
                "threshold_sweep",
                &spec,
                &threshold_sweep(k_max, workers),
            )
        }
        Command::Tradeoff {
            k,
            n1,
            batch,
            workers,
            common,
        } => {
            if k == 0 || batch == 0 {
                return Err(Failure::Config("k and batch must be positive".into()));
            }
            let spec = kv(&[("batch", batch), ("k", k), ("n1", n1), ("workers", workers)]);
            emit(
                &common.out,
                "tradeoff",
                &spec,
                &tradeoff(k, n1, batch, workers),
            )
        }
        Command::ToleranceRegion {
            m,
            n,
            d1,
            d2,
            p_min,
            p_max,
            step,
            common,
        } => {
            if m == 0 || n == 0 || d1 == 0 || d2 == 0 {
                return Err(Failure::Config("m, n, d1, d2 must be positive".into()));
            }
            let spec = kv(&[
                ("d1", d1),
                ("d2", d2),
                ("m", m),
                ("n", n),
                ("p_max", p_max),
                ("p_min", p_min),
                ("step", step),
            ]);
            emit(
                &common.out,
                "tolerance_region",
                &spec,
                &tolerance_region(m, n, d1, d2, p_min, p_max, step),
            )
        }
        Command::DecoderBench {
            workers,
            q,
            k_max,
            trials,
            sigma,
            mode,
            timing,
            common,
        } => {
            let mode = DecodeMode::parse(&mode)
                .ok_or_else(|| Failure::Config(format!("unknown mode `{mode}`")))?;
            if !(sigma.is_finite() && sigma > 0.0) || q == 0 || q > workers {
                return Err(Failure::Config(
                    "need sigma > 0 and 0 < q <= workers".into(),
                ));
            }
            let bench = BenchSpec {
                workers,
                q,
                k_max,
                trials,
                sigma,
                mode,
                seed: common.seed.unwrap_or(0),
                timing,
            };
            let mut spec = kv(&[
                ("k_max", k_max),
                ("q", q),
                ("trials", trials),
                ("workers", workers),
            ]);
            spec.extend(kv(&[
                ("mode", mode.name().to_string()),
                ("seed", bench.seed.to_string()),
                ("sigma", sigma.to_string()),
                ("timing", timing.to_string()),
            ]));
            spec.sort();
            emit(&common.out, "decoder_bench", &spec, &decoder_bench(&bench)?)
        }
        Command::Train(args) => run_train(&args, false),
        Command::Autoencoder(args) => run_train(&args, true),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Decode(msg)) => {
            eprintln!("decode failure: {msg}");
            ExitCode::from(EXIT_DECODE)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
