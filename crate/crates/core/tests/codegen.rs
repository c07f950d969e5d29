mod common;

use common::{random_graph, rng};
use priorcal::codegen::{
    build_sensors, check_coverage, planted_dem, repetition_dem, restrict_to_window, PlantedSpec, RepCodeSpec, SensorWindow,
};
use priorcal::model::{build_parametrization, instantiate, merge_prob, Dem};
use priorcal::sampler::{sample_code, sample_shots, subsample_sensor_shots};
use proptest::prelude::*;

fn classes(d: usize, r: usize) -> Vec<String> {
    let code = repetition_dem(RepCodeSpec::new(d, r).unwrap()).unwrap();
    let p = build_parametrization(&[&code.dem]).unwrap();
    p.classes().iter().map(|k| k.to_string()).collect()
}

#[test]
fn class_set_is_independent_of_duration() {
    for d in [3, 5, 9] {
        let reference = classes(d, 3);
        assert_eq!(reference.len(), 9 * (d - 1));
        for r in [4, 7, 12] {
            assert_eq!(classes(d, r), reference, "d={d} r={r}");
        }
    }
}

#[test]
fn coverage_of_distance_nine() {
    let target = repetition_dem(RepCodeSpec::new(9, 4).unwrap()).unwrap();
    let three = build_sensors(&target, 5, 2).unwrap();
    assert_eq!(three.num_agents(), 3);
    assert!(check_coverage(&three.parametrization, &target.dem).unwrap().is_empty());
    let single = restrict_to_window(&target, SensorWindow { start: 3, d_s: 3 }).unwrap();
    let p = build_parametrization(&[&single.dem]).unwrap();
    assert!(!check_coverage(&p, &target.dem).unwrap().is_empty());
}

#[test]
fn subsampled_sensor_shots_match_direct_sampling() {
    let spec = RepCodeSpec::new(9, 4).unwrap();
    let template = repetition_dem(spec).unwrap();
    let p = build_parametrization(&[&template.dem]).unwrap();
    let device = planted_dem(
        spec,
        &vec![-1.7; p.num_params()],
        PlantedSpec { spread_sigma: 0.3, n_outliers: 3, outlier_factor: 5.0, seed: 9 },
    )
    .unwrap();
    let sensor = restrict_to_window(&device, SensorWindow { start: 2, d_s: 5 }).unwrap();
    let n = 200_000;
    let cut = subsample_sensor_shots(&sample_code(&device, n, 1).unwrap(), &sensor).unwrap();
    let direct = sample_shots(&sensor.dem, n, 2).unwrap();
    let rate = |c: usize| c as f64 / n as f64;
    let close = |a: f64, b: f64| {
        let se = (a.max(b).max(1e-4) * (1.0 - a.min(b)) * 2.0 / n as f64).sqrt();
        (a - b).abs() < 5.0 * se
    };
    for j in 0..sensor.dem.num_detectors() {
        let (a, b) = (rate(cut.detectors.col_count(j)), rate(direct.detectors.col_count(j)));
        assert!(close(a, b), "detector {j}: {a} vs {b}");
    }
    let (a, b) = (rate(cut.observables.col_count(0)), rate(direct.observables.col_count(0)));
    assert!(close(a, b), "observable: {a} vs {b}");
}

#[test]
fn suite_binding_reproduces_a_stationary_device() {
    let spec = RepCodeSpec::new(9, 5).unwrap();
    let template = repetition_dem(spec).unwrap();
    let suite = build_sensors(&template, 5, 2).unwrap();
    let chain = build_parametrization(&[&template.dem]).unwrap();
    let base: Vec<f64> = (0..chain.num_params()).map(|j| -3.5 + 0.02 * j as f64).collect();
    let device = planted_dem(spec, &base, PlantedSpec { spread_sigma: 0.0, n_outliers: 0, outlier_factor: 1.0, seed: 0 }).unwrap();
    // sensor-only classes never bind to a target edge, so their value is arbitrary
    let theta: Vec<f64> = suite
        .parametrization
        .classes()
        .iter()
        .map(|k| chain.classes().iter().position(|c| c == k).map_or(-1.0, |j| base[j]))
        .collect();
    let inst = instantiate(&template.dem, &suite.target_binding().unwrap(), &theta).unwrap();
    assert_eq!(inst.hyperedges().len(), device.dem.hyperedges().len());
    for (a, b) in inst.hyperedges().iter().zip(device.dem.hyperedges()) {
        assert_eq!(a.detectors, b.detectors);
        assert!((a.probability - b.probability).abs() <= 1e-12 * b.probability, "{:?}", b.detectors);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edge_count_formula(d in 1usize..11, r in 1usize..26) {
        let d = 2 * d + 1;
        let code = repetition_dem(RepCodeSpec::new(d, r).unwrap()).unwrap();
        prop_assert_eq!(code.dem.hyperedges().len(), 3 * r * (d - 1) + d);
        prop_assert_eq!(code.dem.num_detectors(), (r + 1) * (d - 1));
    }

    #[test]
    fn merge_prob_is_a_commutative_monoid(a in 0.0f64..0.5, b in 0.0f64..0.5, c in 0.0f64..0.5) {
        let ab = merge_prob(a, b).unwrap();
        prop_assert!((ab - merge_prob(b, a).unwrap()).abs() < 1e-15);
        prop_assert!((0.0..=0.5).contains(&ab) && ab >= a.max(b) - 1e-15);
        let left = merge_prob(ab, c).unwrap();
        let right = merge_prob(a, merge_prob(b, c).unwrap()).unwrap();
        prop_assert!((left - right).abs() < 1e-14);
        prop_assert!((merge_prob(a, 0.0).unwrap() - a).abs() < 1e-15);
    }

    #[test]
    fn model_text_round_trips(seed in any::<u64>()) {
        let dem = random_graph(&mut rng(seed), 10, 16);
        prop_assert_eq!(Dem::parse(&dem.to_text()).unwrap(), dem);
    }

    #[test]
    fn sensor_windows_keep_each_detector_once(d in 2usize..7, r in 1usize..6, start_frac in 0.0f64..1.0) {
        let d = 2 * d + 1;
        let target = repetition_dem(RepCodeSpec::new(d, r).unwrap()).unwrap();
        let d_s = 5;
        let start = ((d - d_s) as f64 * start_frac).round() as usize;
        let sensor = restrict_to_window(&target, SensorWindow { start, d_s }).unwrap();
        prop_assert_eq!(sensor.dem.num_detectors(), (r + 1) * (d_s - 1));
        let mut seen = sensor.full_detectors.clone();
        seen.dedup();
        prop_assert_eq!(seen.len(), sensor.full_detectors.len());
        prop_assert!(sensor.dem.is_graphlike());
    }
}
