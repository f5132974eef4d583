//! Half-hourly pollutant forecasting with a from-scratch LSTM.
//!
//! The pipeline runs in stages, one module each:
//!
//! 1. [`ingest`] parses station CSV files onto a regular 30-minute grid.
//! 2. [`impute`] fills gaps in the target channel by stochastic regression.
//! 3. [`dataset`] scales the series and cuts sliding windows, split
//!    chronologically into train and test.
//! 4. [`nn`] is the LSTM cell, forward pass and backpropagation through time.
//! 5. [`train`] runs mini-batch Adam.
//! 6. [`eval`] scores forecasts (RMSE, MASE, R² accuracy) and estimates
//!    histogram entropy.
//! 7. [`sweep`] grid-searches window and learning rate.
//!
//! [`pipeline`] strings the stages together behind a JSON configuration and
//! is what the `noxcast` binary calls.
//!
//! ```
//! use noxcast::{dataset, nn, synthetic, train};
//!
//! let values = synthetic::sine(300, 48.0, 1.0, 1.0);
//! let ds = dataset::build_dataset(&values, 4, 1, 0.3).unwrap();
//! let cfg = train::TrainConfig { epochs: 5, learning_rate: 1e-2, ..Default::default() };
//! let init = nn::LstmParams::init(8, 1, cfg.seed, false);
//! let outcome = train::train(init, &ds, &cfg).unwrap();
//! assert_eq!(outcome.log.epochs.len(), 5);
//! ```

pub mod dataset;
pub mod eval;
pub mod impute;
pub mod ingest;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod sweep;
pub mod synthetic;
pub mod train;

pub use dataset::{Scaler, WindowedDataset};
pub use eval::{EvalReport, EntropyReport, OverfitVerdict};
pub use impute::{ImputationModel, ImputationReport};
pub use ingest::{Pollutant, RawRecord, TimeSeries};
pub use model::ForecastModel;
pub use nn::{LstmParams, LstmState, Sample, StepCache};
pub use pipeline::{Command, RunConfig};
pub use sweep::{SweepGrid, SweepResult};
pub use train::{TrainConfig, TrainLog};

// The guide's code blocks are compiled and run as doc-tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/ingest.md")]
    mod ingest {}
    #[doc = include_str!("../../../book/src/imputation.md")]
    mod imputation {}
    #[doc = include_str!("../../../book/src/windows.md")]
    mod windows {}
    #[doc = include_str!("../../../book/src/lstm.md")]
    mod lstm {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/sweep.md")]
    mod sweep {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
