mod common;

use common::{brute_force, random_graph, rng};
use priorcal::decode::{
    decode_shots, edge_weight, mwpm_decode, Decoder, MatchingGraph, MatchingProblem,
    SyndromeHistogram,
};
use priorcal::model::{Dem, Detector, Hyperedge, MeasCoord};
use priorcal::sampler::sample_shots;
use proptest::prelude::*;
use rand::Rng;

fn bits(mask: usize, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask >> i & 1 == 1).collect()
}

#[test]
fn matches_exhaustive_search_on_random_graphs() {
    let mut r = rng(2024);
    let mut checked_obs = 0;
    for _ in 0..200 {
        let dem = random_graph(&mut r, 12, 20);
        let n = dem.num_detectors();
        let oracle = brute_force(&dem, edge_weight);
        let graph = MatchingGraph::new(&dem).unwrap();
        let decoder = Decoder::new(&dem).unwrap();
        for _ in 0..10 {
            let mask = r.random_range(0..1usize << n);
            let syn = bits(mask, n);
            let got = mwpm_decode(&graph, &syn);
            if oracle.best[mask].is_infinite() {
                assert!(got.is_err(), "unreachable syndrome decoded");
                continue;
            }
            let got = got.unwrap();
            let best = oracle.best[mask];
            assert!((got.cost - best).abs() <= 1e-9 * best.abs().max(1.0), "cost {} vs {best}", got.cost);
            let fired: Vec<usize> = (0..n).filter(|&i| syn[i]).collect();
            let table = decoder.decode_fired(&fired).unwrap();
            assert!((table.cost - best).abs() <= 1e-9 * best.abs().max(1.0));
            if oracle.unique[mask] {
                assert_eq!(got.observables, oracle.obs[mask]);
                assert_eq!(table.observables, oracle.obs[mask]);
                checked_obs += 1;
            }
        }
    }
    assert!(checked_obs > 500, "only {checked_obs} unique optima");
}

fn chain(p: &[f64]) -> Dem {
    // boundary - D0 - D1 - ... - boundary, observable on the left boundary edge
    let n = p.len() - 1;
    let dets = (0..n).map(|i| Detector::new(i, vec![MeasCoord::new(2 * i as i32 + 1, 0, 1)]).unwrap()).collect();
    let mut edges = vec![Hyperedge::new(vec![0], 1, p[0])];
    for i in 1..n {
        edges.push(Hyperedge::new(vec![i - 1, i], 0, p[i]));
    }
    edges.push(Hyperedge::new(vec![n - 1], 0, p[n]));
    Dem::new(dets, edges, 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decoding_never_beats_the_drawn_error(seed in any::<u64>(), n in 2usize..9) {
        let mut r = rng(seed);
        let p: Vec<f64> = (0..=n).map(|_| 10f64.powf(r.random_range(-3.0..-0.6))).collect();
        let dem = chain(&p);
        let graph = MatchingGraph::new(&dem).unwrap();
        // draw an error subset and compare its weight with the decoder's
        let picks: Vec<bool> = (0..dem.hyperedges().len()).map(|_| r.random_bool(0.3)).collect();
        let mut syn = vec![false; n];
        let mut w = 0.0;
        for (e, &on) in dem.hyperedges().iter().zip(&picks) {
            if on {
                w += edge_weight(e.probability);
                for &d in &e.detectors {
                    syn[d] = !syn[d];
                }
            }
        }
        let got = mwpm_decode(&graph, &syn).unwrap();
        prop_assert!(got.cost <= w + 1e-9);
    }

    #[test]
    fn histogram_decoding_equals_per_shot(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dem = random_graph(&mut r, 8, 12);
        let Ok(decoder) = Decoder::new(&dem) else { return Ok(()) };
        let shots = sample_shots(&dem, 300, seed).unwrap();
        let direct = decode_shots(&decoder, &shots);
        let hist = SyndromeHistogram::from_shots(&shots).evaluate(&decoder);
        match (direct, hist) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.estimate, b),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn matching_solvers_agree(seed in any::<u64>(), k in 0usize..11) {
        let mut r = rng(seed);
        let mut prob = MatchingProblem::with_size(k);
        for i in 0..k {
            prob.boundary_cost[i] = r.random_range(0.5..12.0);
            prob.boundary_obs[i] = u64::from(r.random_bool(0.5));
            for j in i + 1..k {
                prob.pair_cost[i * k + j] = r.random_range(0.5..12.0);
                prob.pair_obs[i * k + j] = u64::from(r.random_bool(0.5));
            }
        }
        let a = prob.solve().unwrap();
        let b = prob.solve_dp();
        prop_assert!((a.cost - b.cost).abs() < 1e-9);
    }
}
