//! Stochastic regression imputation.
//!
//! A missing target reading is replaced by its ordinary-least-squares
//! prediction from the concurrent readings of the other channels, plus a
//! normal residual draw with the fitted residual standard deviation. The
//! residual draw keeps the imputed channel's spread close to the observed
//! one, which plain regression imputation would shrink.
//!
//! When a predictor is also missing at that timestamp the prediction falls
//! back to linear interpolation between the nearest observed target
//! readings (nearest-value extension at the ends), with the same residual
//! draw. Imputed values are clamped at zero.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ingest::{Pollutant, TimeSeries};
use crate::rng::{seeded, NormalSampler};
use crate::stats;

pub const DEFAULT_HISTOGRAM_BINS: usize = 50;

/// Relative pivot threshold below which the centered design is rank deficient.
const SINGULAR_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ImputeError {
    #[error("OLS needs at least {needed} complete rows, found {found}")]
    InsufficientCompleteRows { needed: usize, found: usize },
    #[error("design matrix is singular; drop a linearly dependent predictor ({0})")]
    SingularDesign(String),
    #[error("target {0} cannot also be a predictor")]
    TargetIsPredictor(Pollutant),
    #[error("imputation model is not usable: {0}")]
    UnfittedModel(String),
    #[error("target {0} has no observed values to interpolate from")]
    NoObservedTarget(Pollutant),
}

/// Fitted OLS regression of one channel on others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationModel {
    pub target: Pollutant,
    pub predictors: Vec<Pollutant>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub residual_sigma: f64,
    pub n_complete: usize,
    pub seed: u64,
}

impl ImputationModel {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }

    fn validate(&self) -> Result<(), ImputeError> {
        if self.coefficients.len() != self.predictors.len() {
            return Err(ImputeError::UnfittedModel(format!(
                "{} coefficients for {} predictors",
                self.coefficients.len(),
                self.predictors.len()
            )));
        }
        if self.predictors.contains(&self.target) {
            return Err(ImputeError::TargetIsPredictor(self.target));
        }
        let finite = self.coefficients.iter().all(|c| c.is_finite()) && self.intercept.is_finite();
        if !finite || !(self.residual_sigma >= 0.0 && self.residual_sigma.is_finite()) {
            return Err(ImputeError::UnfittedModel("non-finite parameters".into()));
        }
        Ok(())
    }
}

/// Fits `target ~ intercept + predictors` by least squares on the rows where
/// every involved channel is observed.
///
/// Predictors are centered before solving the normal equations, so the
/// intercept is recovered as `mean(y) - b . mean(x)`.
pub fn fit_ols(
    series: &TimeSeries,
    target: Pollutant,
    predictors: &[Pollutant],
) -> Result<ImputationModel, ImputeError> {
    if predictors.contains(&target) {
        return Err(ImputeError::TargetIsPredictor(target));
    }
    let p = predictors.len();
    let y_all = series.values(target);
    let x_all: Vec<&[Option<f64>]> = predictors.iter().map(|&q| series.values(q)).collect();

    let mut ys = Vec::new();
    let mut xs: Vec<Vec<f64>> = vec![Vec::new(); p];
    for k in 0..series.len() {
        let Some(y) = y_all[k] else { continue };
        let row: Option<Vec<f64>> = x_all.iter().map(|col| col[k]).collect();
        if let Some(row) = row {
            ys.push(y);
            for (col, v) in xs.iter_mut().zip(row) {
                col.push(v);
            }
        }
    }
    let n = ys.len();
    if n < p + 2 {
        return Err(ImputeError::InsufficientCompleteRows {
            needed: p + 2,
            found: n,
        });
    }

    let y_mean = stats::mean(&ys);
    let x_means: Vec<f64> = xs.iter().map(|c| stats::mean(c)).collect();
    let centered: Vec<Vec<f64>> = xs
        .iter()
        .zip(&x_means)
        .map(|(c, m)| c.iter().map(|v| v - m).collect())
        .collect();
    let yc: Vec<f64> = ys.iter().map(|v| v - y_mean).collect();

    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let mut gram = vec![vec![0.0; p]; p];
    let mut rhs = vec![0.0; p];
    for i in 0..p {
        for j in 0..p {
            gram[i][j] = dot(&centered[i], &centered[j]);
        }
        rhs[i] = dot(&centered[i], &yc);
    }
    for (i, &q) in predictors.iter().enumerate() {
        if gram[i][i] <= 0.0 {
            return Err(ImputeError::SingularDesign(format!("{q} is constant")));
        }
    }
    let coefficients = solve_normal_equations(gram, rhs, predictors)?;

    let intercept = y_mean - dot(&coefficients, &x_means);
    let ssr: f64 = (0..n)
        .map(|k| {
            let fitted = intercept + (0..p).map(|j| coefficients[j] * xs[j][k]).sum::<f64>();
            (ys[k] - fitted).powi(2)
        })
        .sum();
    let residual_sigma = (ssr / (n - p - 1) as f64).sqrt();

    Ok(ImputationModel {
        target,
        predictors: predictors.to_vec(),
        coefficients,
        intercept,
        residual_sigma,
        n_complete: n,
        seed: 0,
    })
}

/// Solves the centered normal equations after rescaling to a correlation
/// matrix, so the singularity threshold is independent of units.
fn solve_normal_equations(
    gram: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    predictors: &[Pollutant],
) -> Result<Vec<f64>, ImputeError> {
    let p = rhs.len();
    let scale: Vec<f64> = (0..p).map(|i| gram[i][i].sqrt()).collect();
    let mut a: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| gram[i][j] / (scale[i] * scale[j])).collect())
        .collect();
    let mut b: Vec<f64> = (0..p).map(|i| rhs[i] / scale[i]).collect();

    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < SINGULAR_TOLERANCE {
            let names: Vec<&str> = predictors.iter().map(|q| q.name()).collect();
            return Err(ImputeError::SingularDesign(format!(
                "predictors {} are linearly dependent",
                names.join(", ")
            )));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..p {
            let f = a[row][col] / a[col][col];
            for k in col..p {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut z = vec![0.0; p];
    for row in (0..p).rev() {
        let tail: f64 = (row + 1..p).map(|k| a[row][k] * z[k]).sum();
        z[row] = (b[row] - tail) / a[row][row];
    }
    Ok(z.iter().zip(&scale).map(|(v, s)| v / s).collect())
}

/// Before/after summary of one imputation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImputationReport {
    pub target: Pollutant,
    pub seed: u64,
    pub n_imputed: usize,
    pub n_regression: usize,
    pub n_fallback: usize,
    pub n_clamped: usize,
    pub mean_before: f64,
    pub mean_after: f64,
    pub var_before: f64,
    pub var_after: f64,
    #[serde(skip)]
    pub bin_edges: Vec<f64>,
    #[serde(skip)]
    pub histogram_before: Vec<usize>,
    #[serde(skip)]
    pub histogram_after: Vec<usize>,
}

impl ImputationReport {
    /// Writes `bin_lo,bin_hi,count_before,count_after`, one row per bin.
    pub fn write_histogram_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin_lo", "bin_hi", "count_before", "count_after"])?;
        for i in 0..self.histogram_before.len() {
            w.write_record([
                self.bin_edges[i].to_string(),
                self.bin_edges[i + 1].to_string(),
                self.histogram_before[i].to_string(),
                self.histogram_after[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn interpolate(observed: &[Option<f64>], k: usize) -> Option<f64> {
    let prev = (0..k).rev().find_map(|i| observed[i].map(|v| (i, v)));
    let next = (k + 1..observed.len()).find_map(|i| observed[i].map(|v| (i, v)));
    match (prev, next) {
        (Some((a, ya)), Some((b, yb))) => Some(ya + (yb - ya) * (k - a) as f64 / (b - a) as f64),
        (Some((_, v)), None) | (None, Some((_, v))) => Some(v),
        (None, None) => None,
    }
}

/// Fills every missing target reading. Observed readings are copied
/// untouched, and other channels are left as they are.
///
/// One normal deviate is drawn per imputed entry, in time order, from the
/// model's seed.
pub fn impute_series(
    series: &TimeSeries,
    model: &ImputationModel,
) -> Result<(TimeSeries, ImputationReport), ImputeError> {
    model.validate()?;
    let target = model.target;
    let observed = series.values(target).to_vec();
    let before = series.present_values(target);
    let missing = observed.iter().filter(|v| v.is_none()).count();
    if missing > 0 && before.is_empty() {
        return Err(ImputeError::NoObservedTarget(target));
    }

    let mut out = series.clone();
    let mut rng = seeded(model.seed);
    let mut normal = NormalSampler::new();
    let (mut n_regression, mut n_fallback, mut n_clamped) = (0, 0, 0);
    let mut x = vec![0.0; model.predictors.len()];
    {
        let filled = out.values_mut(target);
        for k in 0..observed.len() {
            if observed[k].is_some() {
                continue;
            }
            let complete = model.predictors.iter().enumerate().all(|(j, &q)| {
                match series.values(q)[k] {
                    Some(v) => {
                        x[j] = v;
                        true
                    }
                    None => false,
                }
            });
            let centre = if complete {
                n_regression += 1;
                model.predict(&x)
            } else {
                n_fallback += 1;
                interpolate(&observed, k).ok_or(ImputeError::NoObservedTarget(target))?
            };
            let mut value = normal.sample(&mut rng, centre, model.residual_sigma);
            if value < 0.0 {
                value = 0.0;
                n_clamped += 1;
            }
            filled[k] = Some(value);
        }
    }

    let after = out.present_values(target);
    let (lo, hi) = stats::min_max(&after).unwrap_or((0.0, 0.0));
    let bins = DEFAULT_HISTOGRAM_BINS;
    let (mean_before, var_before) = if before.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (stats::mean(&before), stats::variance(&before))
    };
    let report = ImputationReport {
        target,
        seed: model.seed,
        n_imputed: n_regression + n_fallback,
        n_regression,
        n_fallback,
        n_clamped,
        mean_before,
        mean_after: stats::mean(&after),
        var_before,
        var_after: stats::variance(&after),
        bin_edges: stats::bin_edges(lo, hi, bins),
        histogram_before: stats::histogram(&before, lo, hi, bins),
        histogram_after: stats::histogram(&after, lo, hi, bins),
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_timestamp;
    use chrono::NaiveDateTime;

    fn start() -> NaiveDateTime {
        parse_timestamp("2022-01-01 00:00").unwrap()
    }

    fn series(sox: Vec<Option<f64>>, nox: Vec<Option<f64>>) -> TimeSeries {
        let n = sox.len();
        TimeSeries::new("S", start(), vec![None; n], sox, nox)
    }

    #[test]
    fn exact_linear_relation() {
        let x: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let s = series(
            x.iter().map(|&v| Some(v)).collect(),
            x.iter().map(|&v| Some(2.0 * v)).collect(),
        );
        let m = fit_ols(&s, Pollutant::Nox, &[Pollutant::Sox]).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-10);
        assert!(m.intercept.abs() < 1e-10);
        assert!(m.residual_sigma < 1e-10);
        assert_eq!(m.n_complete, 10);
    }

    #[test]
    fn constant_predictor_is_singular() {
        let s = series(vec![Some(3.0); 10], (0..10).map(|v| Some(v as f64)).collect());
        assert!(matches!(
            fit_ols(&s, Pollutant::Nox, &[Pollutant::Sox]),
            Err(ImputeError::SingularDesign(_))
        ));
    }

    #[test]
    fn collinear_predictors_are_singular() {
        let n = 12;
        let tsp: Vec<Option<f64>> = (0..n).map(|v| Some(v as f64)).collect();
        let sox: Vec<Option<f64>> = (0..n).map(|v| Some(3.0 * v as f64 + 1.0)).collect();
        let nox: Vec<Option<f64>> = (0..n).map(|v| Some((v * v) as f64)).collect();
        let s = TimeSeries::new("S", start(), tsp, sox, nox);
        assert!(matches!(
            fit_ols(&s, Pollutant::Nox, &[Pollutant::Tsp, Pollutant::Sox]),
            Err(ImputeError::SingularDesign(_))
        ));
    }

    #[test]
    fn too_few_complete_rows() {
        let s = series(
            vec![Some(1.0), None, Some(2.0), Some(4.0)],
            vec![Some(1.0), Some(2.0), None, Some(3.0)],
        );
        assert_eq!(
            fit_ols(&s, Pollutant::Nox, &[Pollutant::Sox]),
            Err(ImputeError::InsufficientCompleteRows { needed: 3, found: 2 })
        );
    }

    #[test]
    fn target_cannot_predict_itself() {
        let s = series(vec![Some(1.0); 4], vec![Some(1.0); 4]);
        assert!(matches!(
            fit_ols(&s, Pollutant::Nox, &[Pollutant::Nox]),
            Err(ImputeError::TargetIsPredictor(_))
        ));
    }

    #[test]
    fn nothing_missing_is_identity() {
        let x: Vec<f64> = (0..20).map(|v| (v as f64).sin() + 2.0).collect();
        let s = series(
            x.iter().map(|&v| Some(v)).collect(),
            x.iter().map(|&v| Some(v * 1.5 + 0.3 * (v * 7.0).cos())).collect(),
        );
        let m = fit_ols(&s, Pollutant::Nox, &[Pollutant::Sox]).unwrap();
        let (out, report) = impute_series(&s, &m).unwrap();
        assert_eq!(out, s);
        assert_eq!(report.n_imputed, 0);
    }

    #[test]
    fn zero_sigma_is_deterministic_regression() {
        let m = ImputationModel {
            target: Pollutant::Nox,
            predictors: vec![Pollutant::Sox],
            coefficients: vec![2.0],
            intercept: 0.0,
            residual_sigma: 0.0,
            n_complete: 10,
            seed: 5,
        };
        let sox: Vec<Option<f64>> = (0..6).map(|v| Some(v as f64 + 0.5)).collect();
        let nox = vec![Some(1.0), None, Some(5.0), None, None, Some(11.0)];
        let (out, report) = impute_series(&series(sox.clone(), nox), &m).unwrap();
        for k in [1, 3, 4] {
            assert_eq!(out.values(Pollutant::Nox)[k], Some(2.0 * sox[k].unwrap()));
        }
        assert_eq!(report.n_regression, 3);
        assert_eq!(report.n_fallback, 0);
    }

    #[test]
    fn fallback_interpolates_and_extends() {
        let m = ImputationModel {
            target: Pollutant::Nox,
            predictors: vec![Pollutant::Sox],
            coefficients: vec![1.0],
            intercept: 0.0,
            residual_sigma: 0.0,
            n_complete: 10,
            seed: 1,
        };
        let sox = vec![None; 6];
        let nox = vec![None, Some(2.0), None, None, Some(8.0), None];
        let (out, report) = impute_series(&series(sox, nox), &m).unwrap();
        assert_eq!(
            out.values(Pollutant::Nox),
            &[Some(2.0), Some(2.0), Some(4.0), Some(6.0), Some(8.0), Some(8.0)]
        );
        assert_eq!(report.n_fallback, 4);
        assert_eq!(report.n_imputed, 4);
    }

    #[test]
    fn negatives_clamped_and_counted() {
        let m = ImputationModel {
            target: Pollutant::Nox,
            predictors: vec![Pollutant::Sox],
            coefficients: vec![-1.0],
            intercept: 0.0,
            residual_sigma: 0.0,
            n_complete: 10,
            seed: 1,
        };
        let (out, report) =
            impute_series(&series(vec![Some(3.0), Some(1.0)], vec![Some(1.0), None]), &m).unwrap();
        assert_eq!(out.values(Pollutant::Nox)[1], Some(0.0));
        assert_eq!(report.n_clamped, 1);
    }

    #[test]
    fn malformed_model_rejected() {
        let m = ImputationModel {
            target: Pollutant::Nox,
            predictors: vec![Pollutant::Sox, Pollutant::Tsp],
            coefficients: vec![1.0],
            intercept: 0.0,
            residual_sigma: 1.0,
            n_complete: 10,
            seed: 1,
        };
        let s = series(vec![Some(1.0); 3], vec![Some(1.0), None, Some(1.0)]);
        assert!(matches!(impute_series(&s, &m), Err(ImputeError::UnfittedModel(_))));
    }

    #[test]
    fn all_target_missing_cannot_fall_back() {
        let m = ImputationModel {
            target: Pollutant::Nox,
            predictors: vec![Pollutant::Sox],
            coefficients: vec![1.0],
            intercept: 0.0,
            residual_sigma: 1.0,
            n_complete: 10,
            seed: 1,
        };
        let s = series(vec![None; 3], vec![None; 3]);
        assert_eq!(
            impute_series(&s, &m),
            Err(ImputeError::NoObservedTarget(Pollutant::Nox))
        );
    }

    #[test]
    fn histogram_csv_shape() {
        let x: Vec<f64> = (0..40).map(|v| v as f64).collect();
        let mut nox: Vec<Option<f64>> = x.iter().map(|&v| Some(2.0 * v + 1.0 + (v * 3.1).sin())).collect();
        nox[10] = None;
        let s = series(x.iter().map(|&v| Some(v)).collect(), nox);
        let m = fit_ols(&s, Pollutant::Nox, &[Pollutant::Sox]).unwrap();
        let (_, report) = impute_series(&s, &m).unwrap();
        let mut buf = Vec::new();
        report.write_histogram_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), DEFAULT_HISTOGRAM_BINS + 1);
        assert_eq!(report.histogram_before.iter().sum::<usize>(), 39);
        assert_eq!(report.histogram_after.iter().sum::<usize>(), 40);
    }
}
