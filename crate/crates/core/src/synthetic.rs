//! Deterministic synthetic series used by the test suites, the guide and the
//! packaged fixtures.

use chrono::NaiveDateTime;

use crate::ingest::{parse_timestamp, Pollutant, TimeSeries};
use crate::rng::{seeded, NormalSampler};

/// `offset + amplitude * sin(2 pi k / period)` for `k in 0..n`.
pub fn sine(n: usize, period: f64, amplitude: f64, offset: f64) -> Vec<f64> {
    (0..n)
        .map(|k| offset + amplitude * (std::f64::consts::TAU * k as f64 / period).sin())
        .collect()
}

/// `y[t] = coefficient * y[t - lag] + noise`, started from noise and with a
/// burn-in of `10 * lag` steps discarded.
pub fn lagged_autoregression(n: usize, lag: usize, coefficient: f64, noise_sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    let mut normal = NormalSampler::new();
    let burn = 10 * lag.max(1);
    let mut y = Vec::with_capacity(n + burn);
    for t in 0..n + burn {
        let prev = if t >= lag { y[t - lag] } else { 0.0 };
        y.push(coefficient * prev + normal.sample(&mut rng, 0.0, noise_sd));
    }
    y.split_off(burn)
}

/// `n` draws of a bivariate normal `(x, y)` with the given means, standard
/// deviations and correlation.
pub fn correlated_pair(
    n: usize,
    means: (f64, f64),
    sds: (f64, f64),
    correlation: f64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let mut rng = seeded(seed);
    let mut normal = NormalSampler::new();
    let tail = (1.0 - correlation * correlation).sqrt();
    (0..n)
        .map(|_| {
            let a = normal.standard(&mut rng);
            let b = normal.standard(&mut rng);
            (
                means.0 + sds.0 * a,
                means.1 + sds.1 * (correlation * a + tail * b),
            )
        })
        .unzip()
}

/// Default start of synthetic grids.
pub fn epoch() -> NaiveDateTime {
    parse_timestamp("2021-10-01 00:00").expect("valid literal")
}

/// A station series whose `target` channel holds `values` and whose other
/// channels are missing.
pub fn series_of(target: Pollutant, values: &[f64]) -> TimeSeries {
    let mut s = TimeSeries::from_values(epoch(), target, values);
    s.station = "synthetic".into();
    s
}

/// A noiseless three-channel station: NOx is `1 + sin`, SOx and TSP are
/// phase-shifted copies on their own scales. Every reading is present.
pub fn sine_station(n: usize, period: f64) -> TimeSeries {
    let wave = |shift: f64, scale: f64, offset: f64| -> Vec<Option<f64>> {
        (0..n)
            .map(|k| {
                let phase = std::f64::consts::TAU * (k as f64 / period + shift);
                Some(offset + scale * phase.sin())
            })
            .collect()
    };
    TimeSeries::new(
        "synthetic",
        epoch(),
        wave(0.25, 10.0, 40.0),
        wave(0.05, 0.4, 0.6),
        wave(0.0, 1.0, 1.0),
    )
}

/// [`sine_station`] with every `every`-th NOx reading removed, starting at
/// index `every - 1`.
pub fn gappy_sine_station(n: usize, period: f64, every: usize) -> TimeSeries {
    let mut s = sine_station(n, period);
    for v in s.values_mut(Pollutant::Nox).iter_mut().skip(every - 1).step_by(every) {
        *v = None;
    }
    s
}
