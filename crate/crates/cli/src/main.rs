use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sbrnn_core::baselines::{FfnnConfig, Pam2Config};
use sbrnn_core::estimation::{bits_per_message, ErrorReport};
use sbrnn_core::harness::record::write_csv;
use sbrnn_core::harness::{
    evaluate, grad_check, sweep_distance, sweep_window, train_with, DistanceRow, GradCheckConfig,
    GradPath, Model, RunConfig, SystemKind, GRAD_TOLERANCE,
};
use sbrnn_core::transceiver::{CellKind, TransceiverConfig};
use toml::{Table, Value};

#[derive(Parser)]
#[command(name = "sbrnn", version, about = "Train and evaluate IM/DD autoencoder transceivers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one system and write its checkpoint and run record.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Run record (configuration, summary, loss trace).
        #[arg(long)]
        record: Option<PathBuf>,
        /// Loss trace as `step,loss` CSV.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
        /// Print the loss every this many steps.
        #[arg(long, default_value_t = 500)]
        print_every: usize,
    },
    /// Evaluate a checkpoint on the configured test campaign.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Write the report as a one-row CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate one model per distance and run; CSV to stdout or `--out`.
    SweepDistance {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated distances in km.
        #[arg(long, value_delimiter = ',', required = true)]
        distances: Vec<f64>,
        /// Independent training runs per distance.
        #[arg(long, default_value_t = 3)]
        runs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for per-run checkpoints and records.
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
    },
    /// Evaluate one checkpoint under several inference windows.
    SweepWindow {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated inference windows.
        #[arg(long, value_delimiter = ',', required = true)]
        windows: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients.
    GradCheck {
        #[arg(long, value_enum, default_value_t = PathArg::All)]
        path: PathArg,
        #[arg(long, default_value_t = GRAD_TOLERANCE)]
        tolerance: f64,
        #[arg(long, default_value_t = 11)]
        seed: u64,
    },
    /// Node counts from parameter shapes against the closed-form totals.
    ParamCount {
        /// Restrict to one system.
        #[arg(long)]
        system: Option<String>,
        /// Restrict to one rate point.
        #[arg(long)]
        rate_gbps: Option<u32>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PathArg {
    All,
    Vanilla,
    LstmGru,
    Channel,
}

/// Configuration file plus per-key overrides. Every typed flag mirrors the
/// config key of the same name; `--set section.key=value` reaches the rest.
#[derive(Args, Default)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any key, e.g. `--set channel.enob=5`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Disable every noise source.
    #[arg(long)]
    noiseless: bool,

    #[arg(long, help_heading = "channel")]
    fiber_length_km: Option<f64>,
    #[arg(long, help_heading = "channel")]
    dispersion_ps_nm_km: Option<f64>,
    #[arg(long, help_heading = "channel")]
    attenuation_db_km: Option<f64>,
    #[arg(long, help_heading = "channel")]
    lpf_cutoff_ghz: Option<f64>,
    #[arg(long, help_heading = "channel")]
    enob: Option<f64>,
    #[arg(long, help_heading = "channel")]
    receiver_noise_variance: Option<f64>,

    #[arg(long, help_heading = "train")]
    system: Option<String>,
    #[arg(long, help_heading = "train")]
    rate_gbps: Option<u32>,
    #[arg(long, help_heading = "train")]
    alphabet: Option<usize>,
    #[arg(long, help_heading = "train")]
    batch: Option<usize>,
    #[arg(long, help_heading = "train")]
    window: Option<usize>,
    #[arg(long, help_heading = "train")]
    iterations: Option<usize>,
    #[arg(long, help_heading = "train")]
    reset_period: Option<usize>,
    #[arg(long, help_heading = "train")]
    log_stride: Option<usize>,
    #[arg(long, help_heading = "train")]
    seed: Option<u32>,
    #[arg(long, help_heading = "train")]
    state_carry: Option<String>,
    #[arg(long, help_heading = "train")]
    single_series: Option<bool>,
    #[arg(long, help_heading = "train")]
    learning_rate: Option<f64>,
    /// Checkpoint written by `train`, read by `evaluate` and `sweep-window`.
    #[arg(long, help_heading = "train")]
    checkpoint: Option<PathBuf>,

    #[arg(long, help_heading = "eval")]
    sequences: Option<usize>,
    #[arg(long, help_heading = "eval")]
    sequence_len: Option<usize>,
    #[arg(long, help_heading = "eval")]
    eval_window: Option<usize>,
    #[arg(long, help_heading = "eval")]
    eval_seed: Option<u32>,
    #[arg(long, help_heading = "eval")]
    chunk: Option<usize>,
    #[arg(long, help_heading = "eval")]
    eval_state_carry: Option<String>,

    #[arg(long, help_heading = "pam2")]
    rolloff: Option<f64>,
    #[arg(long, help_heading = "pam2")]
    span: Option<usize>,
    #[arg(long, help_heading = "pam2")]
    layers: Option<usize>,
    #[arg(long, help_heading = "pam2")]
    batch_symbols: Option<usize>,
}

fn float(v: f64) -> Value {
    Value::Float(v)
}

fn int(v: impl Into<i64>) -> Value {
    Value::Integer(v.into())
}

fn size(v: usize) -> Value {
    Value::Integer(v as i64)
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(&'static str, &'static str, Value)> {
        let mut out = Vec::new();
        let mut put = |section, key, v: Option<Value>| {
            if let Some(v) = v {
                out.push((section, key, v));
            }
        };
        if self.noiseless {
            for key in ["dac_noise", "receiver_noise", "adc_noise"] {
                put("channel", key, Some(Value::Boolean(false)));
            }
        }
        put("channel", "fiber_length_km", self.fiber_length_km.map(float));
        put("channel", "dispersion_ps_nm_km", self.dispersion_ps_nm_km.map(float));
        put("channel", "attenuation_db_km", self.attenuation_db_km.map(float));
        put("channel", "lpf_cutoff_ghz", self.lpf_cutoff_ghz.map(float));
        put("channel", "enob", self.enob.map(float));
        put("channel", "receiver_noise_variance", self.receiver_noise_variance.map(float));
        put("train", "system", self.system.clone().map(Value::String));
        put("train", "rate_gbps", self.rate_gbps.map(int));
        put("train", "alphabet", self.alphabet.map(size));
        put("train", "batch", self.batch.map(size));
        put("train", "window", self.window.map(size));
        put("train", "iterations", self.iterations.map(size));
        put("train", "reset_period", self.reset_period.map(size));
        put("train", "log_stride", self.log_stride.map(size));
        put("train", "seed", self.seed.map(int));
        put("train", "state_carry", self.state_carry.clone().map(Value::String));
        put("train", "single_series", self.single_series.map(Value::Boolean));
        put("train", "learning_rate", self.learning_rate.map(float));
        put(
            "train",
            "checkpoint",
            self.checkpoint.as_ref().map(|p| Value::String(p.display().to_string())),
        );
        put("eval", "sequences", self.sequences.map(size));
        put("eval", "sequence_len", self.sequence_len.map(size));
        put("eval", "window", self.eval_window.map(size));
        put("eval", "seed", self.eval_seed.map(int));
        put("eval", "chunk", self.chunk.map(size));
        put("eval", "state_carry", self.eval_state_carry.clone().map(Value::String));
        put("pam2", "rolloff", self.rolloff.map(float));
        put("pam2", "span", self.span.map(size));
        put("pam2", "layers", self.layers.map(size));
        put("pam2", "batch_symbols", self.batch_symbols.map(size));
        out
    }

    fn load(&self) -> Result<RunConfig, String> {
        let mut table: Table = match &self.config {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|e| format!("{}: {e}", path.display()))?
                .parse()
                .map_err(|e| format!("{}: {e}", path.display()))?,
            None => Table::new(),
        };
        let mut set = |section: &str, key: &str, value: Value| -> Result<(), String> {
            let entry = table
                .entry(section.to_string())
                .or_insert_with(|| Value::Table(Table::new()));
            match entry {
                Value::Table(t) => {
                    t.insert(key.to_string(), value);
                    Ok(())
                }
                _ => Err(format!("`{section}` is not a section")),
            }
        };
        for (section, key, value) in self.overrides() {
            set(section, key, value)?;
        }
        for item in &self.set {
            let (path, raw) = item
                .split_once('=')
                .ok_or_else(|| format!("`--set {item}` is not SECTION.KEY=VALUE"))?;
            let (section, key) = path
                .trim()
                .split_once('.')
                .ok_or_else(|| format!("`{path}` is not SECTION.KEY"))?;
            set(section, key, parse_value(raw.trim()))?;
        }
        RunConfig::from_toml(&table.to_string()).map_err(|e| e.to_string())
    }
}

/// A TOML literal, or a bare string when the text is not one.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

enum Failure {
    Usage(String),
    Invariant(String),
}

impl From<sbrnn_core::Error> for Failure {
    fn from(e: sbrnn_core::Error) -> Self {
        match e {
            sbrnn_core::Error::Diverged { .. } | sbrnn_core::Error::NonFinite(_) => {
                Failure::Invariant(e.to_string())
            }
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout()),
    })
}

fn checkpoint_path(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    cfg.eval
        .checkpoint
        .clone()
        .or_else(|| cfg.train.checkpoint.clone())
        .ok_or_else(|| Failure::Usage("no checkpoint given (--checkpoint)".into()))
}

/// Error-rate relations every report must satisfy.
fn check_report(r: &ErrorReport, alphabet: usize) -> Result<(), Failure> {
    let bits = f64::from(bits_per_message(alphabet)?);
    let tol = 1e-12;
    if !(r.ber <= r.bler + tol && r.ber + tol >= r.bler / bits) {
        return Err(Failure::Invariant(format!(
            "BER {} outside [BLER / log2 M, BLER] with BLER {}",
            r.ber, r.bler
        )));
    }
    Ok(())
}

fn print_report(r: &ErrorReport) {
    println!(
        "ber = {:.6e}\nbler = {:.6e}\nbit_errors = {}\nblock_errors = {}\nsequences = {}\nscored_per_sequence = {}",
        r.ber, r.bler, r.bit_errors, r.block_errors, r.sequences, r.evaluated
    );
}

fn scored_alphabet(cfg: &RunConfig) -> usize {
    if cfg.train.system == SystemKind::Pam2Ffnn {
        2
    } else {
        cfg.train.alphabet
    }
}

/// Adopts the system, rate, and alphabet recorded in a checkpoint.
fn align_with(cfg: &mut RunConfig, model: &Model) -> Result<(), Failure> {
    cfg.train.system = model.system();
    if let Some(ae) = model.autoencoder() {
        cfg.train.alphabet = ae.alphabet();
        cfg.train.rate_gbps = match ae.block_len() {
            48 => 42,
            24 => 84,
            n => return Err(Failure::Usage(format!("block length {n} matches no rate point"))),
        };
    }
    if let Model::Sbrnn(m) = model {
        cfg.train.window = m.config().window;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train {
            cfg,
            record,
            loss_csv,
            print_every,
        } => {
            let cfg = cfg.load().map_err(Failure::Usage)?;
            let every = print_every.max(1);
            let trained = train_with(&cfg, &mut |step, loss| {
                if step % every == 0 {
                    eprintln!("step {step:>7}  loss {loss:.6}");
                }
            })?;
            let path = cfg.train.checkpoint.clone().unwrap_or_else(|| "model.ckpt".into());
            trained.model.save(&path)?;
            let trace = &trained.record.loss_trace;
            println!("system = {}", cfg.train.system.name());
            println!("checkpoint = {}", path.display());
            println!("node_count = {}", trained.model.node_count());
            println!("initial_loss = {:.6}", trace.first().copied().unwrap_or(f64::NAN));
            println!("final_loss = {:.6}", trace.last().copied().unwrap_or(f64::NAN));
            println!("wall_clock_s = {:.1}", trained.record.wall_clock_s);
            if let Some(p) = record {
                trained.record.save(&p)?;
            }
            if let Some(p) = loss_csv {
                trained.record.write_loss_csv(File::create(p)?)?;
            }
            if trace.len() * cfg.train.log_stride != cfg.train.iterations {
                return Err(Failure::Invariant("loss trace length does not match iterations".into()));
            }
        }
        Command::Evaluate { cfg, out } => {
            let mut cfg = cfg.load().map_err(Failure::Usage)?;
            let model = Model::load(&checkpoint_path(&cfg)?)?;
            align_with(&mut cfg, &model)?;
            let report = evaluate(&cfg, &model)?;
            print_report(&report);
            if let Some(p) = out {
                let row = DistanceRow::new(
                    cfg.train.system.name(),
                    cfg.channel.fiber_length_km,
                    cfg.train.seed,
                    &report,
                );
                write_csv(&[row], File::create(p)?)?;
            }
            check_report(&report, scored_alphabet(&cfg))?;
        }
        Command::SweepDistance {
            cfg,
            distances,
            runs,
            out,
            checkpoint_dir,
        } => {
            let cfg = cfg.load().map_err(Failure::Usage)?;
            let rows = sweep_distance(&cfg, &distances, runs, checkpoint_dir.as_deref(), &mut |r| {
                eprintln!(
                    "{} {} km seed {}: ber {:.4e} bler {:.4e}",
                    r.system, r.distance_km, r.seed, r.ber, r.bler
                );
            })?;
            write_csv(&rows, output(out.as_deref())?)?;
            for r in &rows {
                check_report(
                    &ErrorReport {
                        bler: r.bler,
                        ber: r.ber,
                        block_errors: r.block_errors,
                        bit_errors: r.bit_errors,
                        evaluated: 0,
                        sequences: r.sequences,
                    },
                    scored_alphabet(&cfg),
                )?;
            }
        }
        Command::SweepWindow { cfg, windows, out } => {
            let mut cfg = cfg.load().map_err(Failure::Usage)?;
            let model = Model::load(&checkpoint_path(&cfg)?)?;
            align_with(&mut cfg, &model)?;
            let rows = sweep_window(&cfg, &model, &windows)?;
            write_csv(&rows, output(out.as_deref())?)?;
        }
        Command::GradCheck {
            path,
            tolerance,
            seed,
        } => {
            let paths: Vec<GradPath> = match path {
                PathArg::All => GradPath::ALL.to_vec(),
                PathArg::Vanilla => vec![GradPath::Vanilla],
                PathArg::LstmGru => vec![GradPath::LstmGru],
                PathArg::Channel => vec![GradPath::Channel],
            };
            let cfg = GradCheckConfig {
                seed,
                ..GradCheckConfig::default()
            };
            let mut failed = Vec::new();
            for p in paths {
                let r = grad_check(p, &cfg)?;
                let ok = r.passes(tolerance);
                println!(
                    "{:<9} {}  max_rel_err = {:.3e}  checked = {}  skipped = {}",
                    p.name(),
                    if ok { "PASS" } else { "FAIL" },
                    r.max_relative_error,
                    r.checked,
                    r.skipped
                );
                if !ok {
                    failed.push(p.name());
                }
            }
            if !failed.is_empty() {
                return Err(Failure::Invariant(format!("gradient check failed: {}", failed.join(", "))));
            }
        }
        Command::ParamCount { system, rate_gbps } => {
            let system = system
                .map(|s| SystemKind::parse(&s))
                .transpose()?;
            let mut mismatches = 0;
            println!("{:<10} {:>5} {:>7} {:>7}", "system", "Gb/s", "shapes", "formula");
            for kind in [SystemKind::Vanilla, SystemKind::LstmGru, SystemKind::Ffnn, SystemKind::Pam2Ffnn] {
                if system.is_some_and(|s| s != kind) {
                    continue;
                }
                for rate in [42, 84] {
                    if rate_gbps.is_some_and(|r| r != rate) {
                        continue;
                    }
                    let mut cfg = RunConfig::default();
                    cfg.train.system = kind;
                    cfg.train.rate_gbps = rate;
                    let shapes = Model::init(&cfg, 0)?.node_count();
                    let n = cfg.block_len()?;
                    let formula = match kind {
                        SystemKind::Vanilla | SystemKind::LstmGru => TransceiverConfig {
                            cell: if kind == SystemKind::Vanilla {
                                CellKind::Vanilla
                            } else {
                                CellKind::LstmGru
                            },
                            ..cfg.transceiver()?
                        }
                        .node_count_formula(),
                        SystemKind::Ffnn => FfnnConfig::node_count_formula(cfg.train.alphabet, n),
                        SystemKind::Pam2Ffnn => Pam2Config::node_count_formula(&cfg.pam2_config()?),
                    };
                    let mark = if shapes == formula { "" } else { "  MISMATCH" };
                    mismatches += usize::from(shapes != formula);
                    println!("{:<10} {:>5} {:>7} {:>7}{mark}", kind.name(), rate, shapes, formula);
                }
            }
            if mismatches > 0 {
                return Err(Failure::Invariant(format!("{mismatches} node counts disagree")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invariant(msg)) => {
            eprintln!("invariant failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
