use noxcast::nn::{self, LstmParams, Sample};
use noxcast::rng::seeded;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn backprop_matches_finite_differences(
        seed in 0u64..10_000,
        hidden in 1usize..6,
        input_dim in 1usize..3,
        steps in 1usize..8,
        batch in 1usize..5,
        forget_bias: bool,
    ) {
        let params = LstmParams::init(hidden, input_dim, seed, forget_bias);
        let mut rng = seeded(seed.wrapping_add(1));
        let data: Vec<(Vec<f64>, f64)> = (0..batch)
            .map(|_| {
                let x = (0..steps * input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (x, rng.gen_range(-1.0..1.0))
            })
            .collect();
        let samples: Vec<Sample<'_>> = data.iter().map(|(x, y)| Sample { inputs: x, target: *y }).collect();
        let (_, grads) = nn::loss_and_gradients(&params, &samples).unwrap();
        for k in 0..params.len() {
            let a = grads.as_slice()[k];
            let n = nn::numeric_gradient(&params, &samples, k, 1e-5).unwrap();
            let diff = (a - n).abs();
            prop_assert!(
                diff <= 1e-7 || diff <= 1e-4 * a.abs().max(n.abs()),
                "{}: analytic {} numeric {}", params.coordinate_name(k), a, n
            );
        }
    }
}
