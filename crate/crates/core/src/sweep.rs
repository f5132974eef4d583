//! Grid search over window length, learning rate and hidden size.
//!
//! Every cell rebuilds its windows, trains a fresh model from a seed derived
//! from the base seed and the cell's coordinates, and scores it on the test
//! partition. Cells are independent, so they run in parallel; rows come back
//! sorted by `(window, learning_rate, hidden)` whatever the completion order.
//! The best cell is the one with the highest test accuracy.

use std::cmp::Ordering;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{build_dataset, DatasetError, DEFAULT_TEST_FRACTION};
use crate::eval::{evaluate, EvalError, EvalOptions};
use crate::ingest::Pollutant;
use crate::model::ForecastModel;
use crate::nn::LstmParams;
use crate::rng::derive_seed;
use crate::train::{train, TrainConfig, TrainError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SweepError {
    #[error("sweep grid has no cells")]
    EmptyGrid,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("every cell diverged")]
    AllDiverged,
    #[error("cell (window {window}, lr {learning_rate}, hidden {hidden}): {source}")]
    Dataset {
        window: usize,
        learning_rate: f64,
        hidden: usize,
        #[source]
        source: DatasetError,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub windows: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub hidden_sizes: Vec<usize>,
    pub gap: usize,
    pub test_fraction: f64,
    /// Shared settings; `learning_rate` is replaced per cell and `seed` is the
    /// base from which cell seeds are derived.
    pub base: TrainConfig,
    pub target: Pollutant,
    pub parallel: bool,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            windows: (2..=9).collect(),
            learning_rates: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            hidden_sizes: vec![64],
            gap: 1,
            test_fraction: DEFAULT_TEST_FRACTION,
            base: TrainConfig::default(),
            target: Pollutant::Nox,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellId {
    pub window: usize,
    pub learning_rate: f64,
    pub hidden: usize,
}

impl CellId {
    pub fn seed(&self, base: u64) -> u64 {
        derive_seed(
            base,
            &[self.window as u64, self.learning_rate.to_bits(), self.hidden as u64],
        )
    }

    /// Grid order: window, then learning rate, then hidden size, ascending.
    fn grid_order(&self, other: &Self) -> Ordering {
        self.window
            .cmp(&other.window)
            .then(self.learning_rate.total_cmp(&other.learning_rate))
            .then(self.hidden.cmp(&other.hidden))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub window: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub accuracy: f64,
    pub rmse_test: f64,
    pub rmse_train: f64,
    pub mase_test: f64,
    pub diverged: bool,
    pub seed: u64,
    pub seconds: f64,
}

impl SweepRow {
    pub fn cell(&self) -> CellId {
        CellId {
            window: self.window,
            learning_rate: self.learning_rate,
            hidden: self.hidden,
        }
    }

    fn selectable(&self) -> bool {
        !self.diverged && self.accuracy.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub best: Option<CellId>,
}

impl SweepGrid {
    pub fn cells(&self) -> Vec<CellId> {
        let mut cells = Vec::new();
        for &window in &self.windows {
            for &learning_rate in &self.learning_rates {
                for &hidden in &self.hidden_sizes {
                    cells.push(CellId {
                        window,
                        learning_rate,
                        hidden,
                    });
                }
            }
        }
        cells.sort_by(|a, b| a.grid_order(b));
        cells
    }

    fn validate(&self) -> Result<(), SweepError> {
        if self.windows.is_empty() || self.learning_rates.is_empty() || self.hidden_sizes.is_empty() {
            return Err(SweepError::EmptyGrid);
        }
        if let Some(lr) = self.learning_rates.iter().find(|lr| !(**lr > 0.0 && lr.is_finite())) {
            return Err(SweepError::InvalidGrid(format!("learning rate {lr} must be positive")));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(SweepError::InvalidGrid("hidden size 0".into()));
        }
        self.base.validate()?;
        Ok(())
    }
}

/// Orders rows best-first: higher accuracy, then smaller window, larger
/// learning rate, smaller hidden size.
fn preference(a: &SweepRow, b: &SweepRow) -> Ordering {
    b.accuracy
        .total_cmp(&a.accuracy)
        .then(a.window.cmp(&b.window))
        .then(b.learning_rate.total_cmp(&a.learning_rate))
        .then(a.hidden.cmp(&b.hidden))
}

pub fn select_best(rows: &[SweepRow]) -> Result<CellId, SweepError> {
    rows.iter()
        .filter(|r| r.selectable())
        .min_by(|a, b| preference(a, b))
        .map(SweepRow::cell)
        .ok_or(SweepError::AllDiverged)
}

fn run_cell(values: &[f64], grid: &SweepGrid, cell: CellId) -> Result<SweepRow, SweepError> {
    let started = Instant::now();
    let ds = build_dataset(values, cell.window, grid.gap, grid.test_fraction).map_err(|source| {
        SweepError::Dataset {
            window: cell.window,
            learning_rate: cell.learning_rate,
            hidden: cell.hidden,
            source,
        }
    })?;
    let seed = cell.seed(grid.base.seed);
    let cfg = TrainConfig {
        learning_rate: cell.learning_rate,
        seed,
        ..grid.base.clone()
    };
    let init = LstmParams::init(cell.hidden, 1, seed, cfg.unit_forget_bias);
    let outcome = train(init, &ds, &cfg)?;
    let model = ForecastModel {
        target: grid.target,
        params: outcome.params,
        window: cell.window,
        gap: grid.gap,
        scaler: ds.scaler,
        seed,
        training: cfg,
    };
    let report = evaluate(&model, &ds, EvalOptions::default())?;
    Ok(SweepRow {
        window: cell.window,
        learning_rate: cell.learning_rate,
        hidden: cell.hidden,
        accuracy: report.accuracy,
        rmse_test: report.rmse_test,
        rmse_train: report.rmse_train,
        mase_test: report.mase_test,
        diverged: outcome.log.diverged(),
        seed,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Trains and scores every cell of `grid` on a complete series.
pub fn run_grid(values: &[f64], grid: &SweepGrid) -> Result<SweepResult, SweepError> {
    grid.validate()?;
    let cells = grid.cells();
    let rows: Result<Vec<SweepRow>, SweepError> = if grid.parallel {
        cells.par_iter().map(|&c| run_cell(values, grid, c)).collect()
    } else {
        cells.iter().map(|&c| run_cell(values, grid, c)).collect()
    };
    let mut rows = rows?;
    rows.sort_by(|a, b| a.cell().grid_order(&b.cell()));
    let best = select_best(&rows).ok();
    Ok(SweepResult { rows, best })
}

impl SweepResult {
    /// Rows at a fixed learning rate and hidden size, ordered by window.
    pub fn window_slice(&self, learning_rate: f64, hidden: usize) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.learning_rate == learning_rate && r.hidden == hidden)
            .collect()
    }

    /// Rows at a fixed window and hidden size, ordered by learning rate.
    pub fn learning_rate_slice(&self, window: usize, hidden: usize) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.window == window && r.hidden == hidden)
            .collect()
    }

    pub fn row(&self, cell: CellId) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.cell() == cell)
    }
}

/// Writes one CSV row per cell. Without `with_timing` the seconds column is
/// empty so repeated sweeps produce identical files.
pub fn write_rows_csv<'a, W: Write>(
    rows: impl IntoIterator<Item = &'a SweepRow>,
    writer: W,
    with_timing: bool,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "window",
        "learning_rate",
        "hidden",
        "accuracy",
        "rmse_test",
        "rmse_train",
        "mase_test",
        "diverged",
        "seed",
        "seconds",
    ])?;
    for r in rows {
        w.write_record([
            r.window.to_string(),
            r.learning_rate.to_string(),
            r.hidden.to_string(),
            r.accuracy.to_string(),
            r.rmse_test.to_string(),
            r.rmse_train.to_string(),
            r.mase_test.to_string(),
            r.diverged.to_string(),
            r.seed.to_string(),
            if with_timing { r.seconds.to_string() } else { String::new() },
        ])?;
    }
    w.flush()?;
    Ok(())
}
