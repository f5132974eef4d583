use noxcast::impute::{fit_ols, impute_series};
use noxcast::ingest::{Pollutant, TimeSeries};
use noxcast::rng::{seeded, NormalSampler};
use noxcast::{stats, synthetic};
use proptest::prelude::*;
use rand::Rng;

fn linear_fixture(n: usize, seed: u64) -> TimeSeries {
    let mut rng = seeded(seed);
    let mut normal = NormalSampler::new();
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0 + normal.sample(&mut rng, 0.0, 0.5)).collect();
    TimeSeries::new(
        "lin",
        synthetic::epoch(),
        vec![None; n],
        x.into_iter().map(Some).collect(),
        y.into_iter().map(Some).collect(),
    )
}

#[test]
fn recovers_slope_and_noise_level() {
    let series = linear_fixture(10_000, 17);
    let m = fit_ols(&series, Pollutant::Nox, &[Pollutant::Sox]).unwrap();
    // standard error of the slope is about 0.5 / (sqrt(n) * sd(x)) = 0.0017
    assert!((2.97..=3.03).contains(&m.coefficients[0]), "slope {}", m.coefficients[0]);
    assert!((0.48..=0.52).contains(&m.residual_sigma), "sigma {}", m.residual_sigma);
    assert!((m.intercept - 1.0).abs() < 0.05);
    assert_eq!(m.n_complete, 10_000);
}

fn with_mcar_gaps(series: &TimeSeries, fraction: f64, seed: u64) -> TimeSeries {
    let mut out = series.clone();
    let mut rng = seeded(seed);
    for v in out.values_mut(Pollutant::Nox) {
        if rng.gen_bool(fraction) {
            *v = None;
        }
    }
    out
}

#[test]
fn mcar_variance_is_preserved() {
    let n = 5000;
    let (x, y) = synthetic::correlated_pair(n, (50.0, 30.0), (8.0, 4.0), 0.7, 3);
    let complete = TimeSeries::new(
        "pair",
        synthetic::epoch(),
        vec![None; n],
        x.into_iter().map(Some).collect(),
        y.iter().copied().map(Some).collect(),
    );
    let gappy = with_mcar_gaps(&complete, 0.25, 4);
    let model = fit_ols(&gappy, Pollutant::Nox, &[Pollutant::Sox]).unwrap().with_seed(5);
    let (filled, report) = impute_series(&gappy, &model).unwrap();
    assert_eq!(report.n_imputed, gappy.n_missing(Pollutant::Nox));
    assert_eq!(report.n_fallback, 0);
    let ratio = stats::variance(&filled.complete_values(Pollutant::Nox).unwrap()) / stats::variance(&y);
    assert!((ratio - 1.0).abs() < 0.15, "ratio {ratio}");
    assert!((report.var_after / report.var_before - 1.0).abs() < 0.15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn observed_values_untouched_and_reruns_identical(seed in 0u64..1000, frac in 0.05f64..0.6) {
        let series = with_mcar_gaps(&linear_fixture(300, seed), frac, seed + 1);
        prop_assume!(series.n_present(Pollutant::Nox) >= 10);
        let model = fit_ols(&series, Pollutant::Nox, &[Pollutant::Sox]).unwrap().with_seed(seed);
        let (a, ra) = impute_series(&series, &model).unwrap();
        let (b, rb) = impute_series(&series, &model).unwrap();
        prop_assert_eq!(&ra, &rb);
        for ((o, x), y) in series.values(Pollutant::Nox).iter().zip(a.values(Pollutant::Nox)).zip(b.values(Pollutant::Nox)) {
            prop_assert!(x.is_some());
            prop_assert_eq!(x.map(f64::to_bits), y.map(f64::to_bits));
            match o {
                Some(v) => prop_assert_eq!(x.map(f64::to_bits), Some(v.to_bits())),
                None => prop_assert!(x.unwrap() >= 0.0),
            }
        }
        // other channels pass through
        prop_assert_eq!(a.values(Pollutant::Sox), series.values(Pollutant::Sox));
    }
}
