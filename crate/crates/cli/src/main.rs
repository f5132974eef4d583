//! `noxcast` command-line front end.
//!
//! Every subcommand takes an optional `--config` JSON file; long flags then
//! override individual fields. Exit status: 0 ok, 2 bad configuration or
//! usage, 3 bad data, 4 training diverged, 1 anything else. Failures are
//! also reported as one JSON line on stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use noxcast::eval::{MaseScale, MetricUnits};
use noxcast::pipeline::{self, Command, PipelineError, RunConfig};
use noxcast::Pollutant;

#[derive(Parser, Debug)]
#[command(name = "noxcast", version, about = "Impute, window, train and score half-hourly pollutant forecasts")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Parse the raw CSV onto a regular 30-minute grid.
    Ingest,
    /// Fill missing target readings by stochastic regression.
    Impute,
    /// Train a forecaster and save it with its training log.
    Train,
    /// Score a saved model on the train and test partitions.
    Evaluate,
    /// Train one model per (window, learning rate, hidden) cell.
    Sweep,
    /// Predict the next reading from a recent window.
    Forecast,
    /// Histogram entropy of the observed target readings.
    Entropy,
    /// Ingest, entropy, impute, train and evaluate in one go.
    Report,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Ingest => Command::Ingest,
            Cmd::Impute => Command::Impute,
            Cmd::Train => Command::Train,
            Cmd::Evaluate => Command::Evaluate,
            Cmd::Sweep => Command::Sweep,
            Cmd::Forecast => Command::Forecast,
            Cmd::Entropy => Command::Entropy,
            Cmd::Report => Command::Report,
        }
    }
}

#[derive(Args, Debug)]
struct Overrides {
    /// JSON run configuration; flags below take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Series to model instead of whatever the output directory holds.
    #[arg(long, global = true)]
    series: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// CSV with the most recent readings, for `forecast`.
    #[arg(long, global = true)]
    recent: Option<PathBuf>,
    #[arg(long = "out", global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    target: Option<Pollutant>,
    #[arg(long, global = true, value_delimiter = ',')]
    predictors: Option<Vec<Pollutant>>,
    #[arg(long, global = true)]
    window: Option<usize>,
    #[arg(long, global = true)]
    gap: Option<usize>,
    #[arg(long, global = true)]
    test_fraction: Option<f64>,
    #[arg(long, global = true)]
    hidden: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long = "batch", global = true)]
    batch_size: Option<usize>,
    #[arg(long = "lr", global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    clip_norm: Option<f64>,
    #[arg(long, global = true)]
    no_shuffle: bool,
    #[arg(long, global = true)]
    unit_forget_bias: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Histogram bins for `entropy`.
    #[arg(long, global = true)]
    bins: Option<usize>,
    /// `scaled` or `original`.
    #[arg(long, global = true, value_parser = parse_units)]
    units: Option<MetricUnits>,
    /// `test` or `train`: which segment's naive error scales MASE.
    #[arg(long, global = true, value_parser = parse_mase_scale)]
    mase_scale: Option<MaseScale>,
    /// Sweep windows, as `2..9` (inclusive) or `2,3,5`.
    #[arg(long, global = true, value_parser = parse_windows)]
    windows: Option<WindowList>,
    #[arg(long = "lrs", global = true, value_delimiter = ',')]
    learning_rates: Option<Vec<f64>>,
    #[arg(long = "hidden-sizes", global = true, value_delimiter = ',')]
    hidden_sizes: Option<Vec<usize>>,
    /// Run sweep cells one after another.
    #[arg(long, global = true)]
    sequential: bool,
    /// Record wall-clock seconds in logs and sweep tables.
    #[arg(long, global = true)]
    timings: bool,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Debug, Clone)]
struct WindowList(Vec<usize>);

fn parse_windows(s: &str) -> Result<WindowList, String> {
    let bad = |_| format!("`{s}` is not a window range like 2..9 or a list like 2,3,5");
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(bad)?;
        let hi: usize = hi.trim().trim_start_matches('=').parse().map_err(bad)?;
        if lo > hi {
            return Err(format!("empty window range {s}"));
        }
        return Ok(WindowList((lo..=hi).collect()));
    }
    s.split(',')
        .map(|w| w.trim().parse::<usize>().map_err(bad))
        .collect::<Result<_, _>>()
        .map(WindowList)
}

fn parse_units(s: &str) -> Result<MetricUnits, String> {
    match s {
        "scaled" => Ok(MetricUnits::Scaled),
        "original" => Ok(MetricUnits::Original),
        _ => Err("expected `scaled` or `original`".into()),
    }
}

fn parse_mase_scale(s: &str) -> Result<MaseScale, String> {
    match s {
        "test" => Ok(MaseScale::TestSegment),
        "train" => Ok(MaseScale::TrainSegment),
        _ => Err("expected `test` or `train`".into()),
    }
}

impl Overrides {
    fn apply(self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field { cfg.$field = v; }
            )*};
        }
        macro_rules! set_some {
            ($($field:ident),*) => {$(
                if self.$field.is_some() { cfg.$field = self.$field; }
            )*};
        }
        let paths = [
            (self.input, &mut cfg.input_path),
            (self.series, &mut cfg.series_path),
            (self.model, &mut cfg.model_path),
            (self.recent, &mut cfg.recent_path),
        ];
        for (flag, field) in paths {
            if flag.is_some() {
                *field = flag;
            }
        }
        set!(output_dir, target, predictors, test_fraction, hidden, epochs, batch_size);
        set!(learning_rate, clip_norm, seed, units, mase_scale);
        set_some!(window, gap);
        if let Some(b) = self.bins {
            cfg.entropy_bins = b;
        }
        if let Some(w) = self.windows {
            cfg.sweep.windows = w.0;
        }
        if let Some(l) = self.learning_rates {
            cfg.sweep.learning_rates = l;
        }
        if let Some(h) = self.hidden_sizes {
            cfg.sweep.hidden_sizes = h;
        }
        if self.no_shuffle {
            cfg.shuffle = false;
        }
        if self.unit_forget_bias {
            cfg.unit_forget_bias = true;
        }
        if self.sequential {
            cfg.sweep.parallel = false;
        }
        if self.timings {
            cfg.timings = true;
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = match &cli.overrides.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let dry_run = cli.overrides.dry_run;
    cli.overrides.apply(&mut cfg);
    if dry_run {
        cfg.validate()?;
        print!("{}", cfg.to_json());
        return Ok(());
    }
    let outcome = pipeline::dispatch(cli.command.into(), &cfg)?;
    for a in &outcome.artifacts {
        log::info!("wrote {}", cfg.output_dir.join(a).display());
    }
    println!("{}", outcome.summary);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
