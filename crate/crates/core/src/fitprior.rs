//! Edge probabilities from two-point detector correlations.
//!
//! For a graph-like model, an edge between detectors `i` and `j` is the only
//! mechanism flipping both, and
//!
//! ```text
//! p_ij = 1/2 − 1/2 · sqrt(1 − 4(⟨x_i x_j⟩ − ⟨x_i⟩⟨x_j⟩) / (1 − 2⟨x_i⟩ − 2⟨x_j⟩ + 4⟨x_i x_j⟩))
//! ```
//!
//! inverts the exact statistics. Boundary edges then absorb whatever part of
//! `⟨x_i⟩` the fitted bulk edges at `i` do not explain.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::model::{Binding, Dem, Parametrization};
use crate::sampler::ShotSet;
use crate::{Error, Result};

/// Floor for fitted boundary (degree-1) edges.
pub const FLOOR_BOUNDARY: f64 = 1e-2;
/// Floor for fitted bulk (degree-2) edges.
pub const FLOOR_BULK: f64 = 1e-5;

/// Empirical first and second moments of detector bits.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorStats {
    pub n_shots: usize,
    pub mean: Vec<f64>,
    /// `⟨x_i x_j⟩` for `i < j` joined by an edge of the template.
    pub pair_mean: BTreeMap<(usize, usize), f64>,
}

impl DetectorStats {
    pub fn pair(&self, i: usize, j: usize) -> Option<f64> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.pair_mean.get(&key).copied()
    }
}

fn bulk_pairs(template: &Dem) -> Result<Vec<(usize, usize)>> {
    if !template.is_graphlike() {
        return Err(Error::Model("correlation fitting needs a graph-like template".into()));
    }
    let mut pairs: Vec<(usize, usize)> = template
        .hyperedges()
        .iter()
        .filter(|e| e.degree() == 2)
        .map(|e| (e.detectors[0], e.detectors[1]))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    Ok(pairs)
}

/// Exact empirical moments over all shots, with pairs restricted to the
/// template's degree-2 edges.
pub fn detector_stats(shots: &ShotSet, template: &Dem) -> Result<DetectorStats> {
    let n_det = template.num_detectors();
    if shots.num_detectors() != n_det {
        return Err(Error::Dimension(format!(
            "shots have {} detectors, template {}",
            shots.num_detectors(),
            n_det
        )));
    }
    let n = shots.n_shots();
    if n == 0 {
        return Err(Error::Data("no shots to compute statistics from".into()));
    }
    let pairs = bulk_pairs(template)?;
    // partners[i] lists (j, pair index) for j > i
    let mut partners: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_det];
    for (k, &(i, j)) in pairs.iter().enumerate() {
        partners[i].push((j, k));
    }
    const BLOCK: usize = 4096;
    let (single, double) = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut single = vec![0u64; n_det];
            let mut double = vec![0u64; pairs.len()];
            for shot in b * BLOCK..((b + 1) * BLOCK).min(n) {
                for i in shots.detectors.row_ones(shot) {
                    single[i] += 1;
                    for &(j, k) in &partners[i] {
                        if shots.detectors.get(shot, j) {
                            double[k] += 1;
                        }
                    }
                }
            }
            (single, double)
        })
        .reduce(
            || (vec![0u64; n_det], vec![0u64; pairs.len()]),
            |(mut a, mut b), (c, d)| {
                a.iter_mut().zip(c).for_each(|(x, y)| *x += y);
                b.iter_mut().zip(d).for_each(|(x, y)| *x += y);
                (a, b)
            },
        );
    let nf = n as f64;
    Ok(DetectorStats {
        n_shots: n,
        mean: single.into_iter().map(|c| c as f64 / nf).collect(),
        pair_mean: pairs.into_iter().zip(double).map(|(p, c)| (p, c as f64 / nf)).collect(),
    })
}

/// Why an edge took its floor value instead of the closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FallbackReason {
    /// `1 − 2⟨x_i⟩ − 2⟨x_j⟩ + 4⟨x_i x_j⟩ ≤ 0`.
    Denominator,
    /// Zero or negative covariance, or a boundary residual with no room left.
    NonPositive,
    /// Undefined intermediate (e.g. a bulk edge product reaching zero).
    Undefined,
    /// Finite closed-form value below the floor.
    BelowFloor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseFit {
    /// Fitted probability per hyperedge of the template, floors applied.
    pub probabilities: Vec<f64>,
    /// Edges that were floored, with the reason.
    pub fallbacks: Vec<(usize, FallbackReason)>,
}

/// Fits every hyperedge of a graph-like template from `stats`.
///
/// Bulk edges come first; boundary edges are then solved from the residual
/// single-detector marginals. Values are floored at [`FLOOR_BULK`] and
/// [`FLOOR_BOUNDARY`].
pub fn fit_pairwise(stats: &DetectorStats, template: &Dem) -> Result<PairwiseFit> {
    if stats.mean.len() != template.num_detectors() {
        return Err(Error::Dimension("statistics and template disagree on detectors".into()));
    }
    bulk_pairs(template)?;
    let edges = template.hyperedges();
    let mut probs = vec![f64::NAN; edges.len()];
    let mut fallbacks = Vec::new();
    for (k, e) in edges.iter().enumerate() {
        if e.degree() != 2 {
            continue;
        }
        let (i, j) = (e.detectors[0], e.detectors[1]);
        let xij = stats
            .pair(i, j)
            .ok_or_else(|| Error::Dimension(format!("statistics lack the pair D{i} D{j}")))?;
        let (xi, xj) = (stats.mean[i], stats.mean[j]);
        let cov = xij - xi * xj;
        let den = 1.0 - 2.0 * xi - 2.0 * xj + 4.0 * xij;
        let p = if den <= 0.0 {
            Err(FallbackReason::Denominator)
        } else if cov <= 0.0 {
            Err(FallbackReason::NonPositive)
        } else {
            let arg = (1.0 - 4.0 * cov / den).max(0.0);
            let p = 0.5 - 0.5 * arg.sqrt();
            if p.is_finite() {
                Ok(p)
            } else {
                Err(FallbackReason::Undefined)
            }
        };
        probs[k] = settle(k, p, FLOOR_BULK, &mut fallbacks);
    }
    // boundary edges per detector, in detector order
    let mut boundary: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, e) in edges.iter().enumerate() {
        if e.degree() == 1 {
            boundary.entry(e.detectors[0]).or_default().push(k);
        }
    }
    for (&i, ks) in &boundary {
        let mut q = 1.0;
        for (k, e) in edges.iter().enumerate() {
            if e.degree() == 2 && e.detectors.contains(&i) {
                q *= 1.0 - 2.0 * probs[k];
            }
        }
        let residual = if q <= 0.0 || !q.is_finite() {
            Err(FallbackReason::Undefined)
        } else {
            let r = 0.5 * (1.0 - (1.0 - 2.0 * stats.mean[i]) / q);
            if r > 0.0 && r < 0.5 {
                Ok(r)
            } else {
                Err(FallbackReason::NonPositive)
            }
        };
        // several boundary edges on one detector share the residual equally
        let m = ks.len() as f64;
        let share = residual.map(|r| 0.5 * (1.0 - (1.0 - 2.0 * r).powf(1.0 / m)));
        for &k in ks {
            probs[k] = settle(k, share, FLOOR_BOUNDARY, &mut fallbacks);
        }
    }
    debug_assert!(probs.iter().all(|p| p.is_finite()));
    Ok(PairwiseFit { probabilities: probs, fallbacks })
}

fn settle(
    k: usize,
    p: std::result::Result<f64, FallbackReason>,
    floor: f64,
    fallbacks: &mut Vec<(usize, FallbackReason)>,
) -> f64 {
    match p {
        Ok(p) if p >= floor => p,
        Ok(_) => {
            fallbacks.push((k, FallbackReason::BelowFloor));
            floor
        }
        Err(r) => {
            fallbacks.push((k, r));
            floor
        }
    }
}

/// Class parameters as the mean `log10` of all fitted members.
///
/// `fits[a]` pairs agent `a`'s binding with its edge fit. Classes no agent
/// touches keep `default` (typically the structural prior).
pub fn aggregate_classes(param: &Parametrization, fits: &[(&Binding, &PairwiseFit)], default: &[f64]) -> Result<Vec<f64>> {
    let n = param.num_params();
    if default.len() != n {
        return Err(Error::Dimension(format!("default has {} entries, expected {n}", default.len())));
    }
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for (binding, fit) in fits {
        if binding.params().len() != fit.probabilities.len() || binding.num_params() != n {
            return Err(Error::Dimension("binding and fit do not belong together".into()));
        }
        for (&j, &p) in binding.params().iter().zip(&fit.probabilities) {
            sum[j] += p.log10();
            count[j] += 1;
        }
    }
    Ok((0..n).map(|j| if count[j] > 0 { sum[j] / count[j] as f64 } else { default[j] }).collect())
}

/// Method (ii) over several agents: statistics and fit per agent, then
/// class aggregation.
pub fn fit_agents(
    param: &Parametrization,
    agents: &[(&Dem, &ShotSet)],
    default: &[f64],
) -> Result<(Vec<f64>, Vec<PairwiseFit>)> {
    if agents.len() != param.num_agents() {
        return Err(Error::Dimension(format!(
            "{} agents supplied, parametrization has {}",
            agents.len(),
            param.num_agents()
        )));
    }
    let fits: Vec<PairwiseFit> = agents
        .iter()
        .map(|(dem, shots)| fit_pairwise(&detector_stats(shots, dem)?, dem))
        .collect::<Result<_>>()?;
    let pairs: Vec<(&Binding, &PairwiseFit)> = fits.iter().enumerate().map(|(a, f)| (param.binding(a), f)).collect();
    let theta = aggregate_classes(param, &pairs, default)?;
    Ok((theta, fits))
}
