use grpo_ground::env::{generate_dataset, generate_task, oracle_solve, EnvSpec};
use grpo_ground::trainer::{random_policy_baseline, run_experiment, StageMode, TrainConfig};
use grpo_ground::{acc_at_threshold, iou};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Acc@0.5 of a uniform-random bin policy on the default spec, measured with
/// 100k samples (tasks seed 0, sampler seed 0).
const RANDOM_BASELINE: f64 = 0.00753;
const RANDOM_BASELINE_CI95: f64 = 0.00054;

fn spec_strategy() -> impl Strategy<Value = EnvSpec> {
    (
        2usize..=5,
        0usize..=3,
        0.0f64..0.95,
        0.0f64..0.3,
        0.05f64..0.5,
    )
        .prop_map(|(lo, extra, sim, sigma, side)| EnvSpec {
            n_objects_min: lo,
            n_objects_max: lo + extra,
            distractor_similarity: sim,
            feature_noise_sigma: sigma,
            min_box_side: side,
            ..EnvSpec::default()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn features_finite_and_bounded(spec in spec_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = generate_task(&mut rng, &spec).unwrap();
        prop_assert_eq!(t.features.len(), spec.feature_dim());
        prop_assert!(t.features.iter().all(|x| x.is_finite() && (-2.0..=2.0).contains(x)));
    }

    #[test]
    fn oracle_recovers_ground_truth(spec in spec_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = generate_task(&mut rng, &spec).unwrap();
        let b = oracle_solve(&t, &spec);
        prop_assert_eq!(b, t.gt_box);
        prop_assert_eq!(acc_at_threshold(&[(b, t.gt_box)], 0.5).unwrap(), 1.0);
    }

    #[test]
    fn gt_box_is_valid(spec in spec_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = generate_task(&mut rng, &spec).unwrap();
        prop_assert!(!t.gt_box.is_degenerate() && t.gt_box.in_unit_square());
        prop_assert!(t.gt_box.area() >= spec.min_box_area);
        prop_assert!(t.n_objects >= spec.n_objects_min && t.n_objects <= spec.n_objects_max);
        prop_assert!((iou(&t.gt_box, &t.gt_box) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn random_baseline_matches_pinned_value() {
    let spec = EnvSpec::default();
    let tasks = generate_dataset(0, 100_000, &spec).unwrap();
    let (p, ci) = random_policy_baseline(&tasks, spec.g, 100_000, 0, 0.5);
    assert!(
        (p - RANDOM_BASELINE).abs() <= RANDOM_BASELINE_CI95,
        "baseline {p} ± {ci}"
    );
}

#[test]
fn sft_accuracy_falls_with_distractor_similarity() {
    let levels = [0.1, 0.5, 0.9];
    let mut means = [0.0; 3];
    for seed in 0..5 {
        for (i, sim) in levels.iter().enumerate() {
            let mut c = TrainConfig {
                seed,
                stage_mode: StageMode::SftOnly,
                ..TrainConfig::default()
            };
            c.env.distractor_similarity = *sim;
            means[i] += run_experiment(&c, None)
                .unwrap()
                .report
                .final_eval
                .acc_at_tau
                / 5.0;
        }
    }
    assert!(
        means[0] >= means[1] && means[1] >= means[2],
        "mean acc by similarity {levels:?}: {means:?}"
    );
}
