//! End-to-end commands behind the `noxcast` binary.
//!
//! A [`RunConfig`] (JSON, strict keys) names the input file, the modelling
//! choices and an output directory. Each [`Command`] reads what it needs,
//! writes plain CSV/JSON artifacts into the output directory and echoes the
//! effective configuration as `config.json`. Artifact bodies never contain
//! wall-clock data unless `timings` is on, so identical configs and inputs
//! give byte-identical files.

use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{self, DatasetError, DEFAULT_TEST_FRACTION};
use crate::eval::{self, EvalError, EvalOptions, MaseScale, MetricUnits, DEFAULT_ENTROPY_BINS};
use crate::impute::{self, ImputeError};
use crate::ingest::{self, ColumnMap, IngestError, Pollutant, TimeSeries};
use crate::model::{ForecastModel, ModelError};
use crate::nn::LstmParams;
use crate::sweep::{self, SweepError, SweepGrid};
use crate::train::{self, TrainConfig, TrainError};

pub const DEFAULT_WINDOW: usize = 7;
pub const DEFAULT_GAP: usize = 1;

pub const SERIES_FILE: &str = "series.csv";
pub const IMPUTED_FILE: &str = "imputed.csv";
pub const MODEL_FILE: &str = "model.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Ingest,
    Impute,
    Train,
    Evaluate,
    Sweep,
    Forecast,
    Entropy,
    Report,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Ingest,
        Command::Impute,
        Command::Train,
        Command::Evaluate,
        Command::Sweep,
        Command::Forecast,
        Command::Entropy,
        Command::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Impute => "impute",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Sweep => "sweep",
            Command::Forecast => "forecast",
            Command::Entropy => "entropy",
            Command::Report => "report",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| PipelineError::UnknownCommand(s.to_string()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("unknown command `{0}`")]
    UnknownCommand(String),
    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("{stage}: {message}")]
    Data { stage: &'static str, message: String },
    #[error("training diverged in epoch {epoch}; artifacts hold the last finite parameters")]
    Diverged { epoch: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit status: 2 config, 3 data, 4 divergence, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::UnknownCommand(_) | PipelineError::Config { .. } => 2,
            PipelineError::Data { .. } => 3,
            PipelineError::Diverged { .. } => 4,
            PipelineError::Io { .. } => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::UnknownCommand(_) => "unknown_command",
            PipelineError::Config { .. } => "config",
            PipelineError::Data { .. } => "data",
            PipelineError::Diverged { .. } => "diverged",
            PipelineError::Io { .. } => "io",
        }
    }

    /// One-line JSON description for the diagnostics stream.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        PipelineError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

macro_rules! data_error {
    ($($ty:ty => $stage:literal),* $(,)?) => {
        $(impl From<$ty> for PipelineError {
            fn from(e: $ty) -> Self {
                PipelineError::Data { stage: $stage, message: e.to_string() }
            }
        })*
    };
}

data_error! {
    IngestError => "ingest",
    ImputeError => "impute",
    DatasetError => "dataset",
    EvalError => "evaluate",
    ModelError => "model",
    csv::Error => "csv",
}

impl From<TrainError> for PipelineError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(reason) => PipelineError::config("training", reason),
            other => PipelineError::Data {
                stage: "train",
                message: other.to_string(),
            },
        }
    }
}

impl From<SweepError> for PipelineError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::EmptyGrid | SweepError::InvalidGrid(_) => {
                PipelineError::config("sweep", e.to_string())
            }
            SweepError::Train(t) => t.into(),
            other => PipelineError::Data {
                stage: "sweep",
                message: other.to_string(),
            },
        }
    }
}

/// Grid settings for the `sweep` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    pub windows: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub hidden_sizes: Vec<usize>,
    pub parallel: bool,
    /// Learning rate of the by-window slice; defaults to the best cell's.
    pub slice_learning_rate: Option<f64>,
    /// Window of the by-learning-rate slice; defaults to the best cell's.
    pub slice_window: Option<usize>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        let grid = SweepGrid::default();
        Self {
            windows: grid.windows,
            learning_rates: grid.learning_rates,
            hidden_sizes: grid.hidden_sizes,
            parallel: true,
            slice_learning_rate: None,
            slice_window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub input_path: Option<PathBuf>,
    /// Explicit series for downstream stages, overriding the output directory.
    pub series_path: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub recent_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub columns: ColumnMap,
    pub target: Pollutant,
    pub predictors: Vec<Pollutant>,
    /// Unset means the default for training, or the model's own for
    /// evaluation.
    pub window: Option<usize>,
    pub gap: Option<usize>,
    pub test_fraction: f64,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    pub shuffle: bool,
    pub unit_forget_bias: bool,
    pub seed: u64,
    pub entropy_bins: usize,
    pub units: MetricUnits,
    pub mase_scale: MaseScale,
    /// Write wall-clock seconds into logs (breaks byte reproducibility).
    pub timings: bool,
    pub sweep: SweepSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            input_path: None,
            series_path: None,
            model_path: None,
            recent_path: None,
            output_dir: PathBuf::from("out"),
            columns: ColumnMap::default(),
            target: Pollutant::Nox,
            predictors: vec![Pollutant::Sox, Pollutant::Tsp],
            window: None,
            gap: None,
            test_fraction: DEFAULT_TEST_FRACTION,
            hidden: 64,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            clip_norm: t.clip_norm,
            shuffle: t.shuffle,
            unit_forget_bias: t.unit_forget_bias,
            seed: 0,
            entropy_bins: DEFAULT_ENTROPY_BINS,
            units: MetricUnits::Scaled,
            mase_scale: MaseScale::TestSegment,
            timings: false,
            sweep: SweepSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            seed: self.seed,
            shuffle: self.shuffle,
            clip_norm: self.clip_norm,
            unit_forget_bias: self.unit_forget_bias,
        }
    }

    pub fn effective_window(&self) -> usize {
        self.window.unwrap_or(DEFAULT_WINDOW)
    }

    pub fn effective_gap(&self) -> usize {
        self.gap.unwrap_or(DEFAULT_GAP)
    }

    /// Checks every field against its owning module's rules.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if let Some(w) = self.window {
            if !(dataset::MIN_WINDOW..=dataset::MAX_WINDOW).contains(&w) {
                return Err(PipelineError::config(
                    "window",
                    format!("{w} outside [{}, {}]", dataset::MIN_WINDOW, dataset::MAX_WINDOW),
                ));
            }
        }
        if self.gap == Some(0) {
            return Err(PipelineError::config("gap", "must be at least 1"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(PipelineError::config(
                "test_fraction",
                format!("{} must lie strictly between 0 and 1", self.test_fraction),
            ));
        }
        if self.hidden == 0 {
            return Err(PipelineError::config("hidden", "must be positive"));
        }
        if self.predictors.contains(&self.target) {
            return Err(PipelineError::config(
                "predictors",
                format!("target {} cannot be a predictor", self.target),
            ));
        }
        if self.entropy_bins < 2 {
            return Err(PipelineError::config("entropy_bins", "must be at least 2"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(PipelineError::config("learning_rate", "must be positive"));
        }
        self.train_config()
            .validate()
            .map_err(|e| PipelineError::config("training", e.to_string()))?;
        if let Some(w) = self.sweep.windows.iter().find(|w| !(dataset::MIN_WINDOW..=dataset::MAX_WINDOW).contains(*w)) {
            return Err(PipelineError::config("sweep.windows", format!("window {w} out of range")));
        }
        if let Some(lr) = self.sweep.learning_rates.iter().find(|lr| !(**lr > 0.0)) {
            return Err(PipelineError::config("sweep.learning_rates", format!("{lr} must be positive")));
        }
        if self.sweep.hidden_sizes.contains(&0) {
            return Err(PipelineError::config("sweep.hidden_sizes", "must be positive"));
        }
        Ok(())
    }

    fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

/// Files written by one command, relative to the output directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    /// Short human-readable result, printed by the binary.
    pub summary: String,
}

struct Writer<'a> {
    cfg: &'a RunConfig,
    artifacts: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self, PipelineError> {
        fs::create_dir_all(&cfg.output_dir).map_err(|e| PipelineError::io(&cfg.output_dir, e))?;
        Ok(Self {
            cfg,
            artifacts: Vec::new(),
        })
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), PipelineError> {
        let path = self.cfg.out(name);
        fs::write(&path, body).map_err(|e| PipelineError::io(&path, e))?;
        self.artifacts.push(PathBuf::from(name));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), PipelineError> {
        let mut body = serde_json::to_string_pretty(value).expect("artifact serializes");
        body.push('\n');
        self.text(name, &body)
    }

    fn with_file(
        &mut self,
        name: &str,
        write: impl FnOnce(BufWriter<File>) -> Result<(), PipelineError>,
    ) -> Result<(), PipelineError> {
        let path = self.cfg.out(name);
        let file = File::create(&path).map_err(|e| PipelineError::io(&path, e))?;
        write(BufWriter::new(file))?;
        self.artifacts.push(PathBuf::from(name));
        Ok(())
    }

    fn finish(self, summary: String) -> Outcome {
        Outcome {
            artifacts: self.artifacts,
            summary,
        }
    }
}

fn load_series(path: &Path, columns: &ColumnMap) -> Result<TimeSeries, PipelineError> {
    let parsed = ingest::parse_csv(path, columns)?;
    Ok(ingest::regularize(&parsed.records)?)
}

fn require_input(cfg: &RunConfig) -> Result<&Path, PipelineError> {
    cfg.input_path
        .as_deref()
        .ok_or_else(|| PipelineError::config("input_path", "no input CSV given"))
}

/// The series before imputation: explicit `series_path`, else the ingested
/// grid in the output directory, else the raw input.
fn raw_series(cfg: &RunConfig) -> Result<TimeSeries, PipelineError> {
    if let Some(p) = &cfg.series_path {
        return load_series(p, &cfg.columns);
    }
    let ingested = cfg.out(SERIES_FILE);
    if ingested.exists() {
        return load_series(&ingested, &ColumnMap::default());
    }
    load_series(require_input(cfg)?, &cfg.columns)
}

/// The series for modelling: explicit `series_path`, else the imputed grid,
/// else whatever [`raw_series`] finds.
fn modelling_series(cfg: &RunConfig) -> Result<TimeSeries, PipelineError> {
    if cfg.series_path.is_none() {
        let imputed = cfg.out(IMPUTED_FILE);
        if imputed.exists() {
            return load_series(&imputed, &ColumnMap::default());
        }
    }
    raw_series(cfg)
}

fn target_values(cfg: &RunConfig) -> Result<Vec<f64>, PipelineError> {
    Ok(modelling_series(cfg)?.complete_values(cfg.target)?)
}

#[derive(Serialize)]
struct ChannelSummary {
    variable: Pollutant,
    n_present: usize,
    n_missing: usize,
}

#[derive(Serialize)]
struct IngestSummary {
    station: String,
    start: String,
    end: String,
    length: usize,
    invalid_cells: usize,
    channels: Vec<ChannelSummary>,
}

fn run_ingest(cfg: &RunConfig, w: &mut Writer<'_>) -> Result<String, PipelineError> {
    let input = require_input(cfg)?;
    let parsed = ingest::parse_csv(input, &cfg.columns)?;
    let series = ingest::regularize(&parsed.records)?;
    w.with_file(SERIES_FILE, |f| Ok(series.write_csv(f)?))?;
    let summary = IngestSummary {
        station: series.station.clone(),
        start: ingest::format_timestamp(&series.start),
        end: ingest::format_timestamp(&series.timestamp(series.len() - 1)),
        length: series.len(),
        invalid_cells: parsed.invalid_cells,
        channels: Pollutant::ALL
            .into_iter()
            .map(|p| ChannelSummary {
                variable: p,
                n_present: series.n_present(p),
                n_missing: series.n_missing(p),
            })
            .collect(),
    };
    w.json("ingest_summary.json", &summary)?;
    Ok(format!(
        "{} grid points, {} missing {}",
        series.len(),
        series.n_missing(cfg.target),
        cfg.target
    ))
}

#[derive(Serialize)]
struct ImputationArtifact<'a> {
    model: &'a impute::ImputationModel,
    report: &'a impute::ImputationReport,
}

fn run_impute(cfg: &RunConfig, w: &mut Writer<'_>) -> Result<String, PipelineError> {
    let series = raw_series(cfg)?;
    let model = impute::fit_ols(&series, cfg.target, &cfg.predictors)?.with_seed(cfg.seed);
    let (filled, report) = impute::impute_series(&series, &model)?;
    w.with_file(IMPUTED_FILE, |f| Ok(filled.write_csv(f)?))?;
    w.json(
        "imputation_report.json",
        &ImputationArtifact {
            model: &model,
            report: &report,
        },
    )?;
    w.with_file("imputation_histogram.csv", |f| Ok(report.write_histogram_csv(f)?))?;
    Ok(format!(
        "imputed {} values ({} by regression, {} by interpolation); variance {:.6} -> {:.6}",
        report.n_imputed, report.n_regression, report.n_fallback, report.var_before, report.var_after
    ))
}

fn run_train(cfg: &RunConfig, w: &mut Writer<'_>) -> Result<String, PipelineError> {
    let values = target_values(cfg)?;
    let (window, gap) = (cfg.effective_window(), cfg.effective_gap());
    let ds = dataset::build_dataset(&values, window, gap, cfg.test_fraction)?;
    let tcfg = cfg.train_config();
    let init = LstmParams::init(cfg.hidden, 1, cfg.seed, tcfg.unit_forget_bias);
    let outcome = train::train(init, &ds, &tcfg)?;
    let model = ForecastModel {
        target: cfg.target,
        params: outcome.params,
        window,
        gap,
        scaler: ds.scaler,
        seed: cfg.seed,
        training: tcfg,
    };
    w.text(MODEL_FILE, &model.to_json())?;
    w.with_file("train_log.csv", |f| Ok(outcome.log.write_csv(f, cfg.timings)?))?;
    w.with_file("dataset.csv", |f| Ok(ds.write_csv(f)?))?;
    if let Some(epoch) = outcome.log.diverged_at {
        return Err(PipelineError::Diverged { epoch });
    }
    Ok(format!(
        "trained {} epochs on {} samples; final loss {:.6}",
        outcome.log.epochs.len(),
        ds.train_count,
        outcome.log.final_loss().unwrap_or(f64::NAN)
    ))
}

fn load_model(cfg: &RunConfig) -> Result<ForecastModel, PipelineError> {
    let path = cfg.model_path.clone().unwrap_or_else(|| cfg.out(MODEL_FILE));
    if !path.exists() {
        return Err(PipelineError::config(
            "model_path",
            format!("{} does not exist", path.display()),
        ));
    }
    Ok(ForecastModel::load(&path)?)
}

/// Rejects explicit window/gap settings that contradict the model.
fn check_model_matches(cfg: &RunConfig, model: &ForecastModel) -> Result<(), PipelineError> {
    if let Some(w) = cfg.window {
        if w != model.window {
            return Err(PipelineError::config(
                "window",
                format!("config window {w} differs from model window {}", model.window),
            ));
        }
    }
    if let Some(g) = cfg.gap {
        if g != model.gap {
            return Err(PipelineError::config(
                "gap",
                format!("config gap {g} differs from model gap {}", model.gap),
            ));
        }
    }
    if cfg.target != model.target {
        return Err(PipelineError::config(
            "target",
            format!("config target {} differs from model target {}", cfg.target, model.target),
        ));
    }
    Ok(())
}

fn evaluate_model(
    cfg: &RunConfig,
    model: &ForecastModel,
    values: &[f64],
) -> Result<eval::EvalReport, PipelineError> {
    let ds = dataset::split_chronological(
        dataset::make_windows(values, model.window, model.gap, model.scaler)?,
        cfg.test_fraction,
    )?;
    Ok(eval::evaluate(
        model,
        &ds,
        EvalOptions {
            units: cfg.units,
            mase_scale: cfg.mase_scale,
        },
    )?)
}

fn run_evaluate(cfg: &RunConfig, w: &mut Writer<'_>) -> Result<String, PipelineError> {
    let model = load_model(cfg)?;
    check_model_matches(cfg, &model)?;
    let values = target_values(cfg)?;
    let report = evaluate_model(cfg, &model, &values)?;
    w.json("metrics.json", &report)?;
    w.with_file("predictions.csv", |f| Ok(report.write_predictions_csv(f)?))?;
    Ok(format!(
        "accuracy {:.2}%, MASE {:.4}, RMSE train {:.4} / test {:.4} ({:?})",
        100.0 * report.accuracy,
        report.mase_test,
        report.rmse_train,
        report.rmse_test,
        report.overfit_verdict
    ))
}

#[derive(Serialize)]
struct SweepSummary {
    best: Option<sweep::CellId>,
    rows: usize,
    diverged: usize,
    slice_learning_rate: Option<f64>,
    slice_window: Option<usize>,
    slice_hidden: Option<usize>,
}

fn run_sweep(cfg: &RunConfig, w: &mut Writer<'_>) -> Result<String, PipelineError> {
    let values = target_values(cfg)?;
    let grid = SweepGrid {
        windows: cfg.sweep.windows.clone(),
        learning_rates: cfg.sweep.learning_rates.clone(),
        hidden_sizes: cfg.sweep.hidden_sizes.clone(),
        gap: cfg.effective_gap(),
        test_fraction: cfg.test_fraction,
        base: cfg.train_config(),
        target: cfg.target,
        parallel: cfg.sweep.parallel,
    };
    let result = sweep::run_grid(&values, &grid)?;
    w.with_file("sweep.csv", |f| Ok(sweep::write_rows_csv(&result.rows, f, cfg.timings)?))?;

    let best_row = result.best.and_then(|c| result.row(c));
    let slice_hidden = best_row.map(|r| r.hidden).or(cfg.sweep.hidden_sizes.first().copied());
    let slice_lr = cfg.sweep.slice_learning_rate.or(best_row.map(|r| r.learning_rate));
    let slice_window = cfg.sweep.slice_window.or(best_row.map(|r| r.window));
    if let (Some(lr), Some(h)) = (slice_lr, slice_hidden) {
        let rows = result.window_slice(lr, h);
        w.with_file("sweep_by_window.csv", |f| Ok(sweep::write_rows_csv(rows, f, cfg.timings)?))?;
    }
    if let (Some(win), Some(h)) = (slice_window, slice_hidden) {
        let rows = result.learning_rate_slice(win, h);
        w.with_file("sweep_by_lr.csv", |f| Ok(sweep::write_rows_csv(rows, f, cfg.timings)?))?;
    }
    let diverged = result.rows.iter().filter(|r| r.diverged).count();
    w.json(
        "sweep_best.json",
        &SweepSummary {
            best: result.best,
            rows: result.rows.len(),
            diverged,
            slice_learning_rate: slice_lr,
            slice_window,
            slice_hidden,
        },
    )?;
    match best_row {
        Some(r) => Ok(format!(
            "{} cells; best window {} lr {} hidden {} (accuracy {:.2}%)",
            result.rows.len(),
            r.window,
            r.learning_rate,
            r.hidden,
            100.0 * r.accuracy
        )),
        None => Err(PipelineError::Data {
            stage: "sweep",
            message: SweepError::AllDiverged.to_string(),
        }),
    }
}

/// Reads a forecast window: the column named after the target if present,
/// otherwise the only column.
fn read_recent(path: &Path, target: Pollutant) -> Result<Vec<f64>, PipelineError> {
    let file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    let col = match headers.iter().position(|h| h.trim() == target.name()) {
        Some(c) => c,
        None if headers.len() == 1 => 0,
        None => {
            return Err(PipelineError::config(
                "recent_path",
                format!("no `{}` column and more than one column", target.name()),
            ))
        }
    };
    let mut values = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let cell = row.get(col).unwrap_or("").trim();
        let v: f64 = cell.parse().map_err(|_| PipelineError::Data {
            stage: "forecast",
            message: format!("row {}: `{cell}` is not a number", i + 2),
        })?;
        values.push(v);
    }
    Ok(values)
}

#[derive(Serialize)]
struct ForecastArtifact {
    target: Pollutant,
    window: usize,
    gap: usize,
    recent: Vec<f64>,
    forecast: f64,
}

fn run_forecast(cfg: &RunConfig, w: &mut Writer<'_>) -> Result<String, PipelineError> {
    let model = load_model(cfg)?;
    check_model_matches(cfg, &model)?;
    let path = cfg
        .recent_path
        .as_deref()
        .ok_or_else(|| PipelineError::config("recent_path", "no recent-window CSV given"))?;
    let recent = read_recent(path, model.target)?;
    let forecast = model.forecast(&recent)?;
    w.json(
        "forecast.json",
        &ForecastArtifact {
            target: model.target,
            window: model.window,
            gap: model.gap,
            recent,
            forecast,
        },
    )?;
    Ok(format!("{forecast}"))
}

fn run_entropy(cfg: &RunConfig, w: &mut Writer<'_>) -> Result<String, PipelineError> {
    let values = raw_series(cfg)?.present_values(cfg.target);
    let report = eval::shannon_entropy(&values, cfg.entropy_bins)?;
    w.json("entropy.json", &report)?;
    Ok(format!(
        "{:.4} bits over {} bins ({} observations)",
        report.bits, report.bin_count, report.n_samples
    ))
}

#[derive(Serialize)]
struct Report {
    stages: Vec<StageSummary>,
}

#[derive(Serialize)]
struct StageSummary {
    command: Command,
    summary: String,
    artifacts: Vec<PathBuf>,
}

type Stage = fn(&RunConfig, &mut Writer<'_>) -> Result<String, PipelineError>;

fn run_report(cfg: &RunConfig, w: &mut Writer<'_>) -> Result<String, PipelineError> {
    let mut stages = Vec::new();
    let mut stage_cfg = cfg.clone();
    // later stages pick up earlier artifacts from the output directory
    stage_cfg.series_path = None;
    stage_cfg.model_path = None;
    let run: [(Command, Stage); 5] = [
        (Command::Ingest, run_ingest),
        (Command::Entropy, run_entropy),
        (Command::Impute, run_impute),
        (Command::Train, run_train),
        (Command::Evaluate, run_evaluate),
    ];
    for (command, f) in run {
        let mut sub = Writer::new(&stage_cfg)?;
        let summary = f(&stage_cfg, &mut sub)?;
        w.artifacts.extend(sub.artifacts.iter().cloned());
        stages.push(StageSummary {
            command,
            summary,
            artifacts: sub.artifacts,
        });
    }
    w.json("report.json", &Report { stages })?;
    Ok(format!("{} stages complete", run.len()))
}

/// Runs one command and writes its artifacts plus `config.json`.
pub fn dispatch(command: Command, cfg: &RunConfig) -> Result<Outcome, PipelineError> {
    cfg.validate()?;
    let mut w = Writer::new(cfg)?;
    w.text("config.json", &cfg.to_json())?;
    let summary = match command {
        Command::Ingest => run_ingest(cfg, &mut w),
        Command::Impute => run_impute(cfg, &mut w),
        Command::Train => run_train(cfg, &mut w),
        Command::Evaluate => run_evaluate(cfg, &mut w),
        Command::Sweep => run_sweep(cfg, &mut w),
        Command::Forecast => run_forecast(cfg, &mut w),
        Command::Entropy => run_entropy(cfg, &mut w),
        Command::Report => run_report(cfg, &mut w),
    }?;
    Ok(w.finish(summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_json(r#"{"windw": 7}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("windw"));
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = RunConfig::from_json(r#"{"window": 5, "target": "SOx", "predictors": ["NOx"]}"#).unwrap();
        assert_eq!(cfg.effective_window(), 5);
        assert_eq!(cfg.target, Pollutant::Sox);
        assert_eq!(cfg.epochs, 100);
        assert_eq!(cfg.batch_size, 64);
        cfg.validate().unwrap();
    }

    #[test]
    fn config_round_trips() {
        let cfg = RunConfig {
            window: Some(4),
            seed: 99,
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn validation_names_field() {
        let bad = [
            (RunConfig { window: Some(1), ..Default::default() }, "window"),
            (RunConfig { gap: Some(0), ..Default::default() }, "gap"),
            (RunConfig { test_fraction: 1.0, ..Default::default() }, "test_fraction"),
            (RunConfig { predictors: vec![Pollutant::Nox], ..Default::default() }, "predictors"),
            (RunConfig { learning_rate: 0.0, ..Default::default() }, "learning_rate"),
            (RunConfig { beta1: 1.5, ..Default::default() }, "training"),
        ];
        for (cfg, field) in bad {
            match cfg.validate() {
                Err(PipelineError::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected config error for {field}, got {other:?}"),
            }
        }
    }

    #[test]
    fn command_names() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
        let err = "plot".parse::<Command>().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_json().contains("unknown_command"));
    }
}
