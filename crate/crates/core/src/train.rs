//! Mini-batch training with Adam.
//!
//! Every epoch optionally reshuffles the training samples with a seeded RNG,
//! walks them in batches (keeping a short final batch), clips the batch
//! gradient to a global L2 norm and applies one Adam update per batch.
//! Training is bit-reproducible for a given seed, config and dataset.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::WindowedDataset;
use crate::nn::{loss_and_gradients, LstmParams, NnError, Sample};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("parameter and gradient shapes differ ({params} vs {grads})")]
    ShapeMismatch { params: usize, grads: usize },
    #[error("no training samples")]
    EmptyTrainingSet,
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub clip_norm: f64,
    /// Start the forget-gate biases at 1 instead of 0.
    pub unit_forget_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            shuffle: true,
            clip_norm: 5.0,
            unit_forget_bias: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::InvalidConfig(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be finite and non-negative", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} {b} must lie in (0, 1)"));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon {} must be positive", self.epsilon));
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip_norm {} must be positive", self.clip_norm));
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len()
    {
        return Err(TrainError::ShapeMismatch {
            params: params.len(),
            grads: grads.len(),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for k in 0..params.len() {
        let g = grads[k];
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[k] / c1;
        let v_hat = state.v[k] / c2;
        params[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Rescales `grads` so its L2 norm is at most `max_norm`. Returns the norm
/// before clipping.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean squared error over the epoch's batches, before each update.
    pub loss: f64,
    pub rmse: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch (1-based) in which a non-finite loss or update halted training.
    pub diverged_at: Option<usize>,
}

impl TrainLog {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }

    /// Writes `epoch,loss,rmse,seconds`. With `with_timing` false the seconds
    /// column is left empty so the file is reproducible byte for byte.
    pub fn write_csv<W: Write>(&self, writer: W, with_timing: bool) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "loss", "rmse", "seconds"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.loss.to_string(),
                e.rmse.to_string(),
                if with_timing { e.seconds.to_string() } else { String::new() },
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: LstmParams,
    pub log: TrainLog,
}

/// Trains on the dataset's training partition.
pub fn train(
    params: LstmParams,
    ds: &WindowedDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    train_on_samples(params, &ds.train_samples(), cfg)
}

/// Trains on an explicit sample list. On a non-finite loss or update the
/// epoch is flagged in the log and the last finite parameters are returned.
pub fn train_on_samples(
    mut params: LstmParams,
    samples: &[Sample<'_>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut log = TrainLog::default();
    let mut adam = AdamState::new(params.len());
    let mut rng = seeded(derive_seed(cfg.seed, &[0x5348_5546])); // "SHUF"
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut batch: Vec<Sample<'_>> = Vec::with_capacity(cfg.batch_size);

    'epochs: for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut sse = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&k| samples[k]));
            let (loss, mut grads) = match loss_and_gradients(&params, &batch) {
                Ok(r) => r,
                Err(NnError::NonFiniteLoss) => {
                    log.diverged_at = Some(epoch);
                    break 'epochs;
                }
                Err(e) => return Err(e.into()),
            };
            if !grads.is_finite() {
                log.diverged_at = Some(epoch);
                break 'epochs;
            }
            sse += loss * batch.len() as f64;
            clip_global_norm(grads.as_mut_slice(), cfg.clip_norm);

            let backup = params.clone();
            adam_step(params.as_mut_slice(), grads.as_slice(), &mut adam, cfg)?;
            if !params.is_finite() {
                params = backup;
                log.diverged_at = Some(epoch);
                break 'epochs;
            }
        }
        let loss = sse / samples.len() as f64;
        log.epochs.push(EpochLog {
            epoch,
            loss,
            rmse: loss.sqrt(),
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutcome { params, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{batch_loss, predict};

    #[test]
    fn zero_gradient_leaves_params() {
        let cfg = TrainConfig::default();
        let mut theta = vec![1.5, -2.0];
        let mut st = AdamState::new(2);
        adam_step(&mut theta, &[0.0, 0.0], &mut st, &cfg).unwrap();
        assert_eq!(theta, vec![1.5, -2.0]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = TrainConfig {
            learning_rate: 0.001,
            ..TrainConfig::default()
        };
        let mut theta = vec![0.0];
        let mut st = AdamState::new(1);
        adam_step(&mut theta, &[2.0], &mut st, &cfg).unwrap();
        let m_hat = st.m[0] / (1.0 - 0.9);
        let v_hat = st.v[0] / (1.0 - 0.999);
        assert!((m_hat - 2.0).abs() < 1e-12);
        assert!((v_hat - 4.0).abs() < 1e-12);
        assert!((theta[0] + 0.001 * 2.0 / (2.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn first_step_magnitude_below_learning_rate() {
        let cfg = TrainConfig {
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        for g in [1e-9, 1e-3, 0.5, 7.0, -300.0, 1e6] {
            let mut theta = vec![0.0];
            let mut st = AdamState::new(1);
            adam_step(&mut theta, &[g], &mut st, &cfg).unwrap();
            assert!(theta[0].abs() < cfg.learning_rate, "g={g} step={}", theta[0]);
        }
    }

    #[test]
    fn adam_shape_mismatch() {
        let cfg = TrainConfig::default();
        let mut st = AdamState::new(2);
        assert!(matches!(
            adam_step(&mut [0.0, 0.0], &[1.0], &mut st, &cfg),
            Err(TrainError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn clipping() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut small = vec![0.3, 0.4];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.3, 0.4]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for cfg in [
            TrainConfig { beta1: 1.0, ..Default::default() },
            TrainConfig { beta2: 0.0, ..Default::default() },
            TrainConfig { epsilon: 0.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { learning_rate: -1e-3, ..Default::default() },
            TrainConfig { clip_norm: 0.0, ..Default::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(TrainError::InvalidConfig(_))));
        }
    }

    fn toy_samples() -> Vec<(Vec<f64>, f64)> {
        (0..10)
            .map(|k| {
                let x = k as f64 / 10.0;
                (vec![x, x + 0.05, x + 0.1], x + 0.15)
            })
            .collect()
    }

    #[test]
    fn zero_epochs_is_identity() {
        let data = toy_samples();
        let samples: Vec<Sample> = data.iter().map(|(i, t)| Sample { inputs: i, target: *t }).collect();
        let params = LstmParams::init(4, 1, 1, false);
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let out = train_on_samples(params.clone(), &samples, &cfg).unwrap();
        assert_eq!(out.params, params);
        assert!(out.log.epochs.is_empty());
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let data = toy_samples();
        let samples: Vec<Sample> = data.iter().map(|(i, t)| Sample { inputs: i, target: *t }).collect();
        let params = LstmParams::init(4, 1, 1, false);
        let cfg = TrainConfig { epochs: 3, learning_rate: 0.0, batch_size: 3, ..Default::default() };
        let out = train_on_samples(params.clone(), &samples, &cfg).unwrap();
        assert_eq!(out.params, params);
        assert_eq!(out.log.epochs.len(), 3);
    }

    #[test]
    fn memorizes_constant_sample() {
        let inputs = [0.2, 0.4, 0.6];
        let samples = [Sample { inputs: &inputs, target: 0.5 }];
        let params = LstmParams::init(4, 1, 9, false);
        let cfg = TrainConfig { epochs: 200, learning_rate: 1e-2, ..Default::default() };
        let out = train_on_samples(params, &samples, &cfg).unwrap();
        let loss = batch_loss(&out.params, &samples).unwrap();
        assert!(loss < 1e-4, "loss {loss}");
        assert!((predict(&out.params, &inputs).unwrap() - 0.5).abs() < 1e-2);
    }

    #[test]
    fn empty_samples_rejected() {
        let params = LstmParams::init(2, 1, 0, false);
        assert_eq!(
            train_on_samples(params, &[], &TrainConfig::default()),
            Err(TrainError::EmptyTrainingSet)
        );
    }

    #[test]
    fn divergence_halts_with_finite_params() {
        let inputs = [1.0, 1.0];
        let samples = [Sample { inputs: &inputs, target: f64::MAX }];
        let params = LstmParams::init(2, 1, 0, false);
        let cfg = TrainConfig { epochs: 5, ..Default::default() };
        let out = train_on_samples(params.clone(), &samples, &cfg).unwrap();
        assert_eq!(out.log.diverged_at, Some(1));
        assert!(out.log.epochs.is_empty());
        assert_eq!(out.params, params);
    }

    #[test]
    fn log_csv_without_timing_is_stable() {
        let log = TrainLog {
            epochs: vec![EpochLog { epoch: 1, loss: 0.25, rmse: 0.5, seconds: 0.123 }],
            diverged_at: None,
        };
        let mut a = Vec::new();
        log.write_csv(&mut a, false).unwrap();
        assert_eq!(String::from_utf8(a).unwrap(), "epoch,loss,rmse,seconds\n1,0.25,0.5,\n");
        let mut b = Vec::new();
        log.write_csv(&mut b, true).unwrap();
        assert!(String::from_utf8(b).unwrap().contains("0.123"));
    }
}
