//! Forecast metrics, the naive baseline and the entropy diagnostic.
//!
//! * RMSE: `sqrt(mean((y - y_hat)^2))`.
//! * MASE: model MAE divided by the MAE of the one-step naive forecast
//!   `y_hat[t] = y[t-1]`. Below 1 means the model beats persistence.
//! * Accuracy: the coefficient of determination `1 - MSE / var(y)`, with the
//!   population variance. It is negative for predictors worse than the mean.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::WindowedDataset;
use crate::model::ForecastModel;
use crate::nn::NnError;
use crate::stats;

pub const DEFAULT_ENTROPY_BINS: usize = 1024;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("length mismatch: {actual} actual vs {predicted} predicted")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("series is constant, so the naive-forecast scale is zero and MASE is undefined")]
    ConstantSeries,
    #[error("actual values have zero variance")]
    ZeroVariance,
    #[error("entropy needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("model and dataset disagree: {0}")]
    Mismatch(String),
    #[error("partition `{0}` has no samples")]
    EmptyPartition(&'static str),
    #[error(transparent)]
    Nn(#[from] NnError),
}

fn check_pair(actual: &[f64], predicted: &[f64]) -> Result<(), EvalError> {
    if actual.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(())
}

fn mean_abs_error(actual: &[f64], predicted: &[f64]) -> f64 {
    actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).sum::<f64>() / actual.len() as f64
}

fn mean_squared_error(actual: &[f64], predicted: &[f64]) -> f64 {
    actual.iter().zip(predicted).map(|(a, p)| (a - p) * (a - p)).sum::<f64>() / actual.len() as f64
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64, EvalError> {
    check_pair(actual, predicted)?;
    Ok(mean_squared_error(actual, predicted).sqrt())
}

/// Mean absolute one-step change of `series`, i.e. the naive forecast's MAE.
pub fn naive_mae(series: &[f64]) -> Result<f64, EvalError> {
    if series.len() < 2 {
        return Err(EvalError::TooShort {
            needed: 2,
            got: series.len(),
        });
    }
    let scale = series.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (series.len() - 1) as f64;
    if scale == 0.0 {
        return Err(EvalError::ConstantSeries);
    }
    Ok(scale)
}

/// MASE with the naive scale taken from the evaluated segment itself.
pub fn mase(actual: &[f64], predicted: &[f64]) -> Result<f64, EvalError> {
    check_pair(actual, predicted)?;
    let scale = naive_mae(actual)?;
    Ok(mean_abs_error(actual, predicted) / scale)
}

/// MASE against a caller-supplied naive scale (for example the training
/// segment's [`naive_mae`]).
pub fn mase_with_scale(actual: &[f64], predicted: &[f64], scale: f64) -> Result<f64, EvalError> {
    check_pair(actual, predicted)?;
    if scale == 0.0 {
        return Err(EvalError::ConstantSeries);
    }
    Ok(mean_abs_error(actual, predicted) / scale)
}

/// `1 - MSE / var(actual)`.
pub fn r2_accuracy(actual: &[f64], predicted: &[f64]) -> Result<f64, EvalError> {
    check_pair(actual, predicted)?;
    if actual.len() < 2 {
        return Err(EvalError::TooShort {
            needed: 2,
            got: actual.len(),
        });
    }
    let var = stats::variance(actual);
    if var == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    Ok(1.0 - mean_squared_error(actual, predicted) / var)
}

/// Persistence forecast: element `t` of the result predicts `actual[t + 1]`
/// with `actual[t]`, so it lines up with `&actual[1..]`.
pub fn naive_forecast(actual: &[f64]) -> Result<Vec<f64>, EvalError> {
    if actual.len() < 2 {
        return Err(EvalError::TooShort {
            needed: 2,
            got: actual.len(),
        });
    }
    Ok(actual[..actual.len() - 1].to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub bits: f64,
    pub bin_count: usize,
    pub n_samples: usize,
}

/// Plug-in Shannon entropy (base 2) of an equal-width histogram over
/// `[min, max]`. A constant series has 0 bits.
pub fn shannon_entropy(values: &[f64], bin_count: usize) -> Result<EntropyReport, EvalError> {
    if bin_count < 2 {
        return Err(EvalError::TooFewBins(bin_count));
    }
    if values.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite(i));
    }
    let (lo, hi) = stats::min_max(values).expect("non-empty");
    let n = values.len() as f64;
    let bits = if hi > lo {
        stats::histogram(values, lo, hi, bin_count)
            .into_iter()
            .filter(|&c| c > 0)
            .map(|c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum()
    } else {
        0.0
    };
    Ok(EntropyReport {
        bits,
        bin_count,
        n_samples: values.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OverfitVerdict {
    NotOverfit,
    PossiblyOverfit,
}

impl OverfitVerdict {
    /// Not overfit when the training error is at least the test error.
    pub fn from_rmse(train: f64, test: f64) -> Self {
        if train >= test {
            OverfitVerdict::NotOverfit
        } else {
            OverfitVerdict::PossiblyOverfit
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricUnits {
    #[default]
    Scaled,
    Original,
}

/// Which segment supplies the naive MAE in the MASE denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaseScale {
    /// Naive one-step errors over the test targets themselves.
    #[default]
    TestSegment,
    /// Naive one-step errors over the training targets.
    TrainSegment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalOptions {
    pub units: MetricUnits,
    pub mase_scale: MaseScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub t_index: usize,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub units: MetricUnits,
    pub rmse_train: f64,
    pub rmse_test: f64,
    pub mase_test: f64,
    /// Coefficient of determination on the test partition.
    pub accuracy: f64,
    pub overfit_verdict: OverfitVerdict,
    /// `rmse_train - rmse_test`.
    pub rmse_gap: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Every train and test sample, in original units.
    #[serde(skip)]
    pub predictions: Vec<Prediction>,
}

impl EvalReport {
    /// Writes `t_index,actual,predicted` for the test partition, in original
    /// units.
    pub fn write_predictions_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t_index", "actual", "predicted"])?;
        for p in &self.predictions[self.n_train..] {
            w.write_record([p.t_index.to_string(), p.actual.to_string(), p.predicted.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Naive MAE over the targets in `range`, each compared with the observation
/// one grid step earlier.
fn segment_naive_mae(ds: &WindowedDataset, range: std::ops::Range<usize>, series: &[f64]) -> Result<f64, EvalError> {
    if range.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = range.len() as f64;
    let total: f64 = range
        .map(|k| {
            let t = ds.target_index(k);
            (series[t] - series[t - 1]).abs()
        })
        .sum();
    if total == 0.0 {
        return Err(EvalError::ConstantSeries);
    }
    Ok(total / n)
}

/// Runs the model over every train and test sample and scores both
/// partitions.
///
/// The MASE denominator pairs each target with the observation immediately
/// before it in the series, so a model that repeats the last observation
/// (with gap 1) scores exactly 1.
pub fn evaluate(
    model: &ForecastModel,
    ds: &WindowedDataset,
    opts: EvalOptions,
) -> Result<EvalReport, EvalError> {
    if model.window != ds.window || model.gap != ds.gap {
        return Err(EvalError::Mismatch(format!(
            "model window/gap {}/{} vs dataset {}/{}",
            model.window, model.gap, ds.window, ds.gap
        )));
    }
    if model.scaler != ds.scaler {
        return Err(EvalError::Mismatch("scalers differ".into()));
    }
    if ds.train_count == 0 {
        return Err(EvalError::EmptyPartition("train"));
    }
    if ds.test_count < 2 {
        return Err(EvalError::EmptyPartition("test"));
    }

    let scaler = ds.scaler;
    let convert = |z: f64| match opts.units {
        MetricUnits::Scaled => z,
        MetricUnits::Original => scaler.inverse_transform(z),
    };
    let total = ds.train_count + ds.test_count;
    let mut actual = Vec::with_capacity(total);
    let mut predicted = Vec::with_capacity(total);
    let mut predictions = Vec::with_capacity(total);
    for k in 0..total {
        let s = ds.sample(k);
        let p = model.predict_scaled(s.inputs)?;
        actual.push(convert(s.target));
        predicted.push(convert(p));
        predictions.push(Prediction {
            t_index: ds.target_index(k),
            actual: scaler.inverse_transform(s.target),
            predicted: scaler.inverse_transform(p),
        });
    }
    let series: Vec<f64> = ds.scaled.iter().map(|&z| convert(z)).collect();

    let (tr_a, te_a) = actual.split_at(ds.train_count);
    let (tr_p, te_p) = predicted.split_at(ds.train_count);
    let rmse_train = rmse(tr_a, tr_p)?;
    let rmse_test = rmse(te_a, te_p)?;
    let scale = match opts.mase_scale {
        MaseScale::TestSegment => segment_naive_mae(ds, ds.test_range(), &series)?,
        MaseScale::TrainSegment => segment_naive_mae(ds, ds.train_range(), &series)?,
    };
    let mase_test = mase_with_scale(te_a, te_p, scale)?;
    let accuracy = r2_accuracy(te_a, te_p)?;

    Ok(EvalReport {
        units: opts.units,
        rmse_train,
        rmse_test,
        mase_test,
        accuracy,
        overfit_verdict: OverfitVerdict::from_rmse(rmse_train, rmse_test),
        rmse_gap: rmse_train - rmse_test,
        n_train: ds.train_count,
        n_test: ds.test_count,
        predictions,
    })
}
