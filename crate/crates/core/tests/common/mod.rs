//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod rl;

use std::collections::BTreeMap;

use priorcal::fitprior::DetectorStats;
use priorcal::model::{Dem, Detector, Hyperedge, MeasCoord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact detector statistics of a model with independent hyperedges.
///
/// Uses `E[(−1)^x] = Π (1 − 2p)` over the mechanisms that flip `x`, so
/// `⟨x_i⟩ = (1 − c_i)/2` and `⟨x_i x_j⟩ = (1 − c_i − c_j + c_ij)/4`, where
/// `c_ij` runs over mechanisms flipping exactly one of the two detectors.
pub fn analytic_stats(dem: &Dem) -> DetectorStats {
    let n = dem.num_detectors();
    let flips = |pred: &dyn Fn(&Hyperedge) -> bool| -> f64 {
        dem.hyperedges().iter().filter(|e| pred(e)).map(|e| 1.0 - 2.0 * e.probability).product()
    };
    let c: Vec<f64> = (0..n).map(|i| flips(&|e: &Hyperedge| e.detectors.contains(&i))).collect();
    let mean = c.iter().map(|ci| (1.0 - ci) / 2.0).collect();
    let mut pair_mean = BTreeMap::new();
    for e in dem.hyperedges() {
        for (ai, &a) in e.detectors.iter().enumerate() {
            for &b in &e.detectors[ai + 1..] {
                let (i, j) = (a.min(b), a.max(b));
                let cij = flips(&|h: &Hyperedge| h.detectors.contains(&i) != h.detectors.contains(&j));
                pair_mean.insert((i, j), (1.0 - c[i] - c[j] + cij) / 4.0);
            }
        }
    }
    DetectorStats { n_shots: usize::MAX, mean, pair_mean }
}

/// Exhaustive minimum over edge subsets, for every syndrome at once.
pub struct BruteForce {
    /// Best weight per syndrome bit mask; infinite when unreachable.
    pub best: Vec<f64>,
    /// Observable mask of one optimal subset.
    pub obs: Vec<u64>,
    /// Whether every optimal subset shares one observable mask.
    pub obs_unique: Vec<bool>,
    /// Whether the optimal subset is unique.
    pub unique: Vec<bool>,
}

/// Enumerates all `2^m` subsets of a graph-like model with ≤ 16 detectors.
pub fn brute_force(dem: &Dem, weight: impl Fn(f64) -> f64) -> BruteForce {
    let n = dem.num_detectors();
    assert!(n <= 16 && dem.hyperedges().len() <= 24);
    let masks: Vec<u32> = dem.hyperedges().iter().map(|e| e.detectors.iter().fold(0u32, |m, &d| m | 1 << d)).collect();
    let ws: Vec<f64> = dem.hyperedges().iter().map(|e| weight(e.probability)).collect();
    let obs: Vec<u64> = dem.hyperedges().iter().map(|e| e.observables).collect();
    let m = masks.len();
    let size = 1usize << n;
    let mut out = BruteForce {
        best: vec![f64::INFINITY; size],
        obs: vec![0; size],
        obs_unique: vec![true; size],
        unique: vec![true; size],
    };
    let tol = 1e-9;
    // Gray-code walk: consecutive subsets differ in one edge
    let (mut syn, mut w, mut o, mut in_set) = (0u32, 0.0f64, 0u64, vec![false; m]);
    for i in 0u64..(1u64 << m) {
        if i > 0 {
            let k = i.trailing_zeros() as usize;
            in_set[k] = !in_set[k];
            syn ^= masks[k];
            o ^= obs[k];
            w += if in_set[k] { ws[k] } else { -ws[k] };
        }
        let s = syn as usize;
        let b = out.best[s];
        let scale = if b.is_finite() { b.abs().max(1.0) } else { 1.0 };
        if w < b - tol * scale {
            out.best[s] = w;
            out.obs[s] = o;
            out.obs_unique[s] = true;
            out.unique[s] = true;
        } else if (w - b).abs() <= tol * scale {
            out.unique[s] = false;
            if o != out.obs[s] {
                out.obs_unique[s] = false;
            }
        }
    }
    out
}

/// Random graph-like model: no parallel edges, probabilities log-uniform in
/// `[1e−4, 0.3]`, one observable on a random subset of edges.
pub fn random_graph(rng: &mut ChaCha8Rng, max_dets: usize, max_edges: usize) -> Dem {
    let n = rng.random_range(2..=max_dets);
    let mut candidates: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for i in 0..n {
        for j in i + 1..n {
            candidates.push(vec![i, j]);
        }
    }
    let m = rng.random_range(1..=max_edges.min(candidates.len()));
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let k = rng.random_range(0..candidates.len());
        let dets = candidates.swap_remove(k);
        let p = 10f64.powf(rng.random_range(-4.0..0.3f64.log10()));
        edges.push(Hyperedge::new(dets, u64::from(rng.random_bool(0.4)), p));
    }
    let dets = (0..n).map(|i| Detector::new(i, vec![MeasCoord::new(i as i32, 0, 1)]).unwrap()).collect();
    Dem::new(dets, edges, 1).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
