//! Min-max scaling, sliding windows and the chronological train/test split.
//!
//! Sample `k` of a dataset with window `w` and gap `g` uses the scaled
//! observations `y[k..k+w]` as inputs and `y[k+w+g-1]` as its target, so a
//! gap of 1 predicts the reading right after the window.

use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::nn::Sample;

pub const MIN_WINDOW: usize = 2;
pub const MAX_WINDOW: usize = 64;
pub const DEFAULT_TEST_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("values in the fit range are all equal to {0}; cannot scale")]
    DegenerateRange(f64),
    #[error("fit range {0:?} is empty or out of bounds")]
    BadFitRange(Range<usize>),
    #[error("series of length {len} is too short for window {window} and gap {gap} (need {needed})")]
    SeriesTooShort {
        len: usize,
        window: usize,
        gap: usize,
        needed: usize,
    },
    #[error("window {0} outside [{MIN_WINDOW}, {MAX_WINDOW}]")]
    InvalidWindow(usize),
    #[error("gap must be at least 1")]
    InvalidGap,
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    InvalidTestFraction(f64),
}

/// Affine map of `[min, max]` onto `[0, 1]`. Values outside the fitted range
/// map outside `[0, 1]`; nothing is clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: f64,
    pub max: f64,
}

impl Scaler {
    pub fn transform(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn inverse_transform(&self, z: f64) -> f64 {
        z * (self.max - self.min) + self.min
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

/// Fits a scaler on `values[fit_range]` only.
pub fn fit_scaler(values: &[f64], fit_range: Range<usize>) -> Result<Scaler, DatasetError> {
    if fit_range.is_empty() || fit_range.end > values.len() {
        return Err(DatasetError::BadFitRange(fit_range));
    }
    let slice = &values[fit_range];
    let (min, max) = slice
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if max <= min {
        return Err(DatasetError::DegenerateRange(min));
    }
    Ok(Scaler { min, max })
}

/// `(train, test)` counts for `n` items with the last `floor(test_fraction * n)`
/// held out.
pub fn split_counts(n: usize, test_fraction: f64) -> Result<(usize, usize), DatasetError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatasetError::InvalidTestFraction(test_fraction));
    }
    // nudge so products like 0.3 * 10 that land a hair under an integer still floor to it
    let test = ((test_fraction * n as f64) + 1e-9).floor() as usize;
    let test = test.min(n);
    Ok((n - test, test))
}

pub fn sample_count(len: usize, window: usize, gap: usize) -> usize {
    (len + 1).saturating_sub(window + gap)
}

fn check_shape(len: usize, window: usize, gap: usize) -> Result<(), DatasetError> {
    if !(MIN_WINDOW..=MAX_WINDOW).contains(&window) {
        return Err(DatasetError::InvalidWindow(window));
    }
    if gap < 1 {
        return Err(DatasetError::InvalidGap);
    }
    let needed = window + gap + 1;
    if len < needed {
        return Err(DatasetError::SeriesTooShort {
            len,
            window,
            gap,
            needed,
        });
    }
    Ok(())
}

/// Supervised samples cut from one scaled series.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub window: usize,
    pub gap: usize,
    pub scaler: Scaler,
    /// The whole series after scaling.
    pub scaled: Vec<f64>,
    inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub train_count: usize,
    pub test_count: usize,
}

/// Cuts every window from `values`. All samples start out in the training
/// partition; see [`split_chronological`].
pub fn make_windows(
    values: &[f64],
    window: usize,
    gap: usize,
    scaler: Scaler,
) -> Result<WindowedDataset, DatasetError> {
    check_shape(values.len(), window, gap)?;
    let scaled: Vec<f64> = values.iter().map(|&v| scaler.transform(v)).collect();
    let n = sample_count(values.len(), window, gap);
    let mut inputs = Vec::with_capacity(n * window);
    let mut targets = Vec::with_capacity(n);
    for k in 0..n {
        inputs.extend_from_slice(&scaled[k..k + window]);
        targets.push(scaled[k + window + gap - 1]);
    }
    Ok(WindowedDataset {
        window,
        gap,
        scaler,
        scaled,
        inputs,
        targets,
        train_count: n,
        test_count: 0,
    })
}

/// Holds out the last `floor(test_fraction * n)` samples for testing.
pub fn split_chronological(
    mut ds: WindowedDataset,
    test_fraction: f64,
) -> Result<WindowedDataset, DatasetError> {
    let (train, test) = split_counts(ds.len(), test_fraction)?;
    ds.train_count = train;
    ds.test_count = test;
    Ok(ds)
}

/// Scales, windows and splits `values`, fitting the scaler on the
/// observations up to and including the last training target.
pub fn build_dataset(
    values: &[f64],
    window: usize,
    gap: usize,
    test_fraction: f64,
) -> Result<WindowedDataset, DatasetError> {
    check_shape(values.len(), window, gap)?;
    let (train, _) = split_counts(sample_count(values.len(), window, gap), test_fraction)?;
    let scaler = fit_scaler(values, 0..train_observations(train, window, gap))?;
    split_chronological(make_windows(values, window, gap, scaler)?, test_fraction)
}

/// Number of leading observations touched by the first `train` samples.
pub fn train_observations(train: usize, window: usize, gap: usize) -> usize {
    if train == 0 {
        0
    } else {
        train + window + gap - 1
    }
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn inputs(&self, k: usize) -> &[f64] {
        &self.inputs[k * self.window..(k + 1) * self.window]
    }

    /// Index into the series of sample `k`'s target.
    pub fn target_index(&self, k: usize) -> usize {
        k + self.window + self.gap - 1
    }

    pub fn sample(&self, k: usize) -> Sample<'_> {
        Sample {
            inputs: self.inputs(k),
            target: self.targets[k],
        }
    }

    pub fn train_range(&self) -> Range<usize> {
        0..self.train_count
    }

    pub fn test_range(&self) -> Range<usize> {
        self.train_count..self.train_count + self.test_count
    }

    pub fn train_samples(&self) -> Vec<Sample<'_>> {
        self.train_range().map(|k| self.sample(k)).collect()
    }

    pub fn test_samples(&self) -> Vec<Sample<'_>> {
        self.test_range().map(|k| self.sample(k)).collect()
    }

    /// Writes `t_index,input_0..input_{w-1},target,partition` in scaled units.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t_index".to_string()];
        header.extend((0..self.window).map(|i| format!("input_{i}")));
        header.push("target".into());
        header.push("partition".into());
        w.write_record(&header)?;
        for k in 0..self.train_count + self.test_count {
            let mut row = vec![self.target_index(k).to_string()];
            row.extend(self.inputs(k).iter().map(|v| v.to_string()));
            row.push(self.targets[k].to_string());
            row.push(if k < self.train_count { "train" } else { "test" }.into());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
