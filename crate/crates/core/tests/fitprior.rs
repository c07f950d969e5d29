mod common;

use common::{analytic_stats, rng};
use priorcal::codegen::{build_sensors, planted_dem, repetition_dem, PlantedSpec, RepCodeSpec};
use priorcal::fitprior::{detector_stats, fit_agents, fit_pairwise, FallbackReason, FLOOR_BOUNDARY, FLOOR_BULK};
use priorcal::model::{build_parametrization, Dem, Detector, Hyperedge, MeasCoord};
use priorcal::sampler::{sample_code, subsample_sensor_shots, ShotSet};
use proptest::prelude::*;
use rand::Rng;

fn planted(d: usize, r: usize, spread: f64, seed: u64) -> priorcal::codegen::RepCode {
    let spec = RepCodeSpec::new(d, r).unwrap();
    let p = build_parametrization(&[&repetition_dem(spec).unwrap().dem]).unwrap();
    planted_dem(
        spec,
        &vec![-3.0; p.num_params()],
        PlantedSpec { spread_sigma: spread, n_outliers: 0, outlier_factor: 1.0, seed },
    )
    .unwrap()
}

#[test]
fn analytic_statistics_are_a_fixed_point() {
    let device = planted(5, 5, 0.3, 11);
    let fit = fit_pairwise(&analytic_stats(&device.dem), &device.dem).unwrap();
    for (k, e) in device.dem.hyperedges().iter().enumerate() {
        let floor = if e.degree() == 1 { FLOOR_BOUNDARY } else { FLOOR_BULK };
        let expect = e.probability.max(floor);
        assert!(
            (fit.probabilities[k] - expect).abs() <= 1e-9 * expect,
            "edge {k}: {} vs {expect}",
            fit.probabilities[k]
        );
    }
}

#[test]
fn sampled_bulk_edges_within_tolerance() {
    let device = planted(5, 5, 0.3, 12);
    let shots = sample_code(&device, 100_000, 99).unwrap();
    let fit = fit_pairwise(&detector_stats(&shots, &device.dem).unwrap(), &device.dem).unwrap();
    let mut checked = 0;
    for (k, e) in device.dem.hyperedges().iter().enumerate() {
        if e.degree() == 2 && e.probability >= 1e-3 {
            let rel = (fit.probabilities[k] - e.probability).abs() / e.probability;
            assert!(rel <= 0.25, "edge {k} p={} fit={}", e.probability, fit.probabilities[k]);
            checked += 1;
        }
    }
    assert!(checked > 10);
}

#[test]
fn fit_agents_recovers_stationary_classes() {
    // no spread: every member of a class shares one probability
    let device = planted(9, 5, 0.0, 1);
    let template = repetition_dem(device.spec).unwrap();
    let suite = build_sensors(&template, 5, 2).unwrap().with_target(&device).unwrap();
    let shots = sample_code(&device, 200_000, 5).unwrap();
    let sensor_shots: Vec<ShotSet> = suite.sensors.iter().map(|s| subsample_sensor_shots(&shots, s).unwrap()).collect();
    let agents: Vec<(&Dem, &ShotSet)> = suite.sensors.iter().map(|s| &s.dem).zip(&sensor_shots).collect();
    let default = suite.uninformative_prior().unwrap();
    let (theta, fits) = fit_agents(&suite.parametrization, &agents, &default).unwrap();
    assert_eq!(fits.len(), 3);
    // bulk classes of the planted chain sit at 10^-3
    let bulk: Vec<f64> = suite
        .parametrization
        .classes()
        .iter()
        .zip(&theta)
        .filter(|(k, _)| k.degree() == 2)
        .map(|(_, t)| *t)
        .collect();
    for t in bulk {
        assert!((t + 3.0).abs() < 0.1, "class at {t}");
    }
}

#[test]
fn negative_covariance_takes_the_floor() {
    let dets: Vec<Detector> = (0..2).map(|i| Detector::new(i, vec![MeasCoord::new(i as i32, 0, 1)]).unwrap()).collect();
    let dem = Dem::new(dets, vec![Hyperedge::new(vec![0, 1], 0, 0.01), Hyperedge::new(vec![0], 1, 0.02)], 1).unwrap();
    let mut s = analytic_stats(&dem);
    let m = s.mean.clone();
    s.pair_mean.insert((0, 1), m[0] * m[1] * 0.5);
    let fit = fit_pairwise(&s, &dem).unwrap();
    assert_eq!(fit.probabilities[0], FLOOR_BULK);
    assert!(fit.fallbacks.contains(&(0, FallbackReason::NonPositive)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn outputs_respect_floors(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(2..7usize);
        let dets: Vec<Detector> = (0..n).map(|i| Detector::new(i, vec![MeasCoord::new(i as i32, 0, 1)]).unwrap()).collect();
        let mut edges = vec![Hyperedge::new(vec![0], 1, 0.01), Hyperedge::new(vec![n - 1], 0, 0.01)];
        for i in 1..n {
            edges.push(Hyperedge::new(vec![i - 1, i], 0, 0.02));
        }
        let dem = Dem::new(dets, edges, 1).unwrap();
        let mut s = analytic_stats(&dem);
        // arbitrary, possibly unphysical statistics
        for m in &mut s.mean {
            *m = r.random_range(0.0..0.6);
        }
        for v in s.pair_mean.values_mut() {
            *v = r.random_range(0.0..0.3);
        }
        let fit = fit_pairwise(&s, &dem).unwrap();
        for (e, p) in dem.hyperedges().iter().zip(&fit.probabilities) {
            let floor = if e.degree() == 1 { FLOOR_BOUNDARY } else { FLOOR_BULK };
            prop_assert!(p.is_finite() && *p >= floor);
        }
    }

    #[test]
    fn analytic_fixed_point_on_random_chains(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(2..8usize);
        let dets: Vec<Detector> = (0..n).map(|i| Detector::new(i, vec![MeasCoord::new(i as i32, 0, 1)]).unwrap()).collect();
        let mut edges = vec![Hyperedge::new(vec![0], 1, r.random_range(0.011..0.2)), Hyperedge::new(vec![n - 1], 0, r.random_range(0.011..0.2))];
        for i in 1..n {
            edges.push(Hyperedge::new(vec![i - 1, i], 0, r.random_range(1e-4..0.2)));
        }
        let dem = Dem::new(dets, edges, 1).unwrap();
        let fit = fit_pairwise(&analytic_stats(&dem), &dem).unwrap();
        for (e, p) in dem.hyperedges().iter().zip(&fit.probabilities) {
            prop_assert!((p - e.probability).abs() <= 1e-9 * e.probability);
        }
    }
}
