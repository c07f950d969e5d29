mod common;

use common::rl::{gradient_error, instance, near_kink, unbiasedness_components};
use common::rng;
use priorcal::codegen::{build_sensors, planted_dem, repetition_dem, PlantedSpec, RepCodeSpec};
use priorcal::model::build_parametrization;
use priorcal::rlopt::{
    advantages, compute_rewards, importance_ratios, losses, sample_policy, step, train, AdamState,
    Baseline, EpochBatch, Hyperparams, Policy, QuadraticEnv, RewardEnv, SensorEnv, TrainConfig,
};
use priorcal::sampler::sample_code;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut r = rng(77);
    let hp = Hyperparams { entropy_coeff: 0.01, ..Hyperparams::repetition() };
    let mut trials = 0;
    while trials < 50 {
        let inst = instance(&mut r, 5, 2, 8, 0.05);
        if near_kink(&inst, 0.15, 1e-2) {
            continue;
        }
        let err = gradient_error(&inst, &hp);
        assert!(err < 1e-6, "trial {trials}: relative error {err}");
        trials += 1;
    }
}

#[test]
fn unclipped_estimator_is_unbiased() {
    for c in unbiasedness_components(10_000) {
        assert!((c.mean - c.fd).abs() <= 3.0 * c.se, "{c:?}");
    }
}

#[test]
fn quadratic_toy_converges() {
    let optimum = vec![-2.6, -3.4, -2.9, -3.2, -2.75, -3.3];
    let s: Vec<Vec<bool>> = (0..3).map(|k| (0..6).map(|j| j % 3 == k || j % 3 == (k + 1) % 3).collect()).collect();
    let mut env = QuadraticEnv::new(optimum.clone(), s).unwrap();
    let cfg = TrainConfig { hp: Hyperparams { epochs: 200, ..Hyperparams::repetition() }, seed: 8, reference: Some(optimum.clone()) };
    let out = train(&mut env, &[-3.0; 6], &cfg).unwrap();
    for (m, o) in out.policy.mu.iter().zip(&optimum) {
        assert!((m - o).abs() < 0.05, "mu {m} vs optimum {o}");
    }
    assert_eq!(out.history.len(), 200);
    assert!(out.history.last().unwrap().cos_to_reference.unwrap() > out.history[0].cos_to_reference.unwrap());
}

#[test]
fn entropy_bonus_keeps_sigma_larger() {
    let s = vec![vec![true; 4]];
    let run = |entropy_coeff: f64| {
        let mut env = QuadraticEnv::new(vec![-3.0; 4], s.clone()).unwrap();
        let hp = Hyperparams { epochs: 30, entropy_coeff, ..Hyperparams::repetition() };
        train(&mut env, &[-3.0; 4], &TrainConfig { hp, seed: 3, reference: None }).unwrap().policy.mean_sigma()
    };
    assert!(run(1.0) > run(0.0));
}

#[test]
fn sampling_statistics() {
    let policy = Policy { mu: vec![-3.0, -1.5], log_sigma: vec![0.3f64.ln(), 0.1f64.ln()] };
    let b = 10_000;
    let c = sample_policy(&policy, b, 5).unwrap();
    assert_eq!(c, sample_policy(&policy, b, 5).unwrap());
    let sigma = policy.sigma();
    for j in 0..2 {
        let mean = c.iter().map(|row| row[j]).sum::<f64>() / b as f64;
        assert!((mean - policy.mu[j]).abs() < 4.0 * sigma[j] / (b as f64).sqrt());
    }
    let tight = Policy::new(vec![-3.0, -2.0], 1e-9).unwrap();
    for row in sample_policy(&tight, 10, 1).unwrap() {
        assert!((row[0] + 3.0).abs() < 1e-5 && (row[1] + 2.0).abs() < 1e-5);
    }
    assert!(sample_policy(&policy, 1, 0).is_err());
}

#[test]
fn advantage_examples() {
    let rewards = vec![vec![1.0, 2.0], vec![3.0, 6.0]];
    let zero = advantages(&rewards, &Baseline { b: vec![0.0, 0.0] });
    assert_eq!(zero, rewards);
    let centred = advantages(&rewards, &Baseline { b: vec![2.0, 4.0] });
    for a in 0..2 {
        assert_eq!(centred[0][a] + centred[1][a], 0.0);
    }
}

#[test]
fn baseline_converges_on_constant_rewards() {
    let policy = Policy::new(vec![-3.0; 2], 0.3).unwrap();
    let candidates = sample_policy(&policy, 8, 1).unwrap();
    let batch = EpochBatch { candidates, collection: policy.clone(), rewards: vec![vec![2.5, 1.5]; 8] };
    let s = vec![vec![true, false], vec![false, true]];
    let hp = Hyperparams::repetition();
    let (mut pol, mut base) = (policy, Baseline { b: vec![2.0, 2.0] });
    let mut adam = AdamState::new(2, 2);
    for _ in 0..5_000 {
        let g = losses(&pol, &base, &batch, &s, &hp).unwrap().grads;
        step(&mut pol, &mut base, &mut adam, &g, &hp).unwrap();
    }
    for row in advantages(&batch.rewards, &base) {
        assert!(row.iter().all(|a| a.abs() < 1e-2), "{row:?}");
    }
}

#[test]
fn identical_candidates_give_identical_rewards() {
    let spec = RepCodeSpec::new(7, 3).unwrap();
    let template = repetition_dem(spec).unwrap();
    let p = build_parametrization(&[&template.dem]).unwrap();
    let device = planted_dem(
        spec,
        &vec![-2.0; p.num_params()],
        PlantedSpec { spread_sigma: 0.2, n_outliers: 0, outlier_factor: 1.0, seed: 4 },
    )
    .unwrap();
    let suite = build_sensors(&template, 5, 2).unwrap();
    let shots = sample_code(&device, 4_000, 1).unwrap();
    let mut env = SensorEnv::new(&suite, &shots, 3_500, 2).unwrap();
    env.begin_epoch(0).unwrap();
    let theta = suite.uninformative_prior().unwrap();
    let rewards = compute_rewards(&env, &[theta.clone(), theta]).unwrap();
    assert_eq!(rewards[0], rewards[1]);
    assert!(rewards.iter().flatten().all(|r| r.is_finite()));
}

#[test]
fn planted_truth_outscores_the_structural_prior() {
    let spec = RepCodeSpec::new(9, 9).unwrap();
    let template = repetition_dem(spec).unwrap();
    let p = build_parametrization(&[&template.dem]).unwrap();
    let base: Vec<f64> = priorcal::codegen::uninformative_prior(&p, &[&template]).unwrap().iter().map(|t| t + 1.0).collect();
    let device =
        planted_dem(spec, &base, PlantedSpec { spread_sigma: 0.3, n_outliers: 0, outlier_factor: 1.0, seed: 21 }).unwrap();
    let suite = build_sensors(&template, 5, 2).unwrap();
    let truth_suite = suite.with_target(&device).unwrap();
    // class value of the truth: mean log10 over every sensor member
    let param = &suite.parametrization;
    let mut sum = vec![0.0; param.num_params()];
    let mut count = vec![0usize; param.num_params()];
    for (a, sensor) in truth_suite.sensors.iter().enumerate() {
        for (&j, e) in param.binding(a).params().iter().zip(sensor.dem.hyperedges()) {
            sum[j] += e.probability.log10();
            count[j] += 1;
        }
    }
    let truth: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    let shots = sample_code(&device, 30_000, 8).unwrap();
    let mut env = SensorEnv::new(&suite, &shots, 30_000, 1).unwrap();
    env.begin_epoch(0).unwrap();
    let rewards = compute_rewards(&env, &[truth, suite.uninformative_prior().unwrap()]).unwrap();
    let wins = (0..env.num_agents()).filter(|&a| rewards[0][a] >= rewards[1][a]).count();
    assert!(wins as f64 >= 0.9 * env.num_agents() as f64, "{rewards:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unused_parameters_get_zero_gradient(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut inst = instance(&mut r, 6, 3, 8, 0.05);
        let idle = r.random_range(0..6);
        for row in &mut inst.s {
            row[idle] = false;
        }
        let rep = losses(&inst.policy, &inst.baseline, &inst.batch, &inst.s, &Hyperparams::repetition()).unwrap();
        prop_assert_eq!(rep.grads.mu[idle], 0.0);
        prop_assert_eq!(rep.grads.log_sigma[idle], 0.0);
    }

    #[test]
    fn ratios_ignore_out_of_support_components(seed in any::<u64>(), bump in -3.0f64..3.0) {
        let mut r = rng(seed);
        let mut inst = instance(&mut r, 5, 2, 6, 0.1);
        inst.s[0][2] = false;
        let before = importance_ratios(&inst.policy, &inst.batch, &inst.s).unwrap();
        for c in &mut inst.batch.candidates {
            c[2] += bump;
        }
        let after = importance_ratios(&inst.policy, &inst.batch, &inst.s).unwrap();
        for (b, a) in before.iter().zip(&after) {
            prop_assert_eq!(b[0], a[0]);
        }
    }

    #[test]
    fn full_support_ratio_is_the_product(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut inst = instance(&mut r, 4, 1, 5, 0.1);
        inst.s = vec![vec![true; 4]];
        let chi = importance_ratios(&inst.policy, &inst.batch, &inst.s).unwrap();
        let dens = |x: f64, m: f64, ls: f64| {
            let s = ls.exp();
            (-(x - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
        };
        for (row, c) in chi.iter().zip(&inst.batch.candidates) {
            let prod: f64 = (0..4)
                .map(|j| {
                    dens(c[j], inst.policy.mu[j], inst.policy.log_sigma[j])
                        / dens(c[j], inst.batch.collection.mu[j], inst.batch.collection.log_sigma[j])
                })
                .product();
            prop_assert!((row[0] - prod).abs() <= 1e-10 * prod);
        }
    }

    #[test]
    fn equal_policies_give_unit_ratios(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut inst = instance(&mut r, 5, 3, 6, 0.0);
        inst.policy = inst.batch.collection.clone();
        for chi in importance_ratios(&inst.policy, &inst.batch, &inst.s).unwrap().iter().flatten() {
            prop_assert_eq!(*chi, 1.0);
        }
    }
}
