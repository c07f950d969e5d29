use std::collections::HashMap;

use crate::{Error, Result};

/// A single measurement location in the circuit.
///
/// Ordering is lexicographic on `(t, x, y)` so sorted coordinate sets read in
/// time order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MeasCoord {
    pub t: u32,
    pub x: i32,
    pub y: i32,
}

impl MeasCoord {
    pub fn new(x: i32, y: i32, t: u32) -> Self {
        MeasCoord { t, x, y }
    }
}

/// A detector: a parity of measurements identified by their coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Detector {
    pub id: usize,
    /// Sorted, duplicate-free. May be empty for coordinate-free models.
    pub coords: Vec<MeasCoord>,
}

impl Detector {
    pub fn new(id: usize, mut coords: Vec<MeasCoord>) -> Result<Self> {
        coords.sort();
        let before = coords.len();
        coords.dedup();
        if coords.len() != before {
            return Err(Error::Model(format!("detector D{id} has duplicate coordinates")));
        }
        Ok(Detector { id, coords })
    }

    pub fn min_t(&self) -> Option<u32> {
        self.coords.iter().map(|c| c.t).min()
    }
}

/// An error mechanism: flips `detectors` and the observables in `observables`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperedge {
    /// Sorted, duplicate-free detector ids.
    pub detectors: Vec<usize>,
    /// Bitmask of flipped logical observables.
    pub observables: u64,
    pub probability: f64,
}

impl Hyperedge {
    pub fn new(mut detectors: Vec<usize>, observables: u64, probability: f64) -> Self {
        detectors.sort_unstable();
        Hyperedge { detectors, observables, probability }
    }

    pub fn degree(&self) -> usize {
        self.detectors.len()
    }
}

/// XOR-combination of two independent error channels.
///
/// Returns `½(1 − (1−2p1)(1−2p2))`; both inputs must lie in `[0, 0.5]`.
pub fn merge_prob(p1: f64, p2: f64) -> Result<f64> {
    for p in [p1, p2] {
        if !(0.0..=0.5).contains(&p) {
            return Err(Error::InvalidArgument(format!("probability {p} outside [0, 0.5]")));
        }
    }
    Ok(xor_prob(p1, p2))
}

#[inline]
pub(crate) fn xor_prob(p1: f64, p2: f64) -> f64 {
    0.5 * (1.0 - (1.0 - 2.0 * p1) * (1.0 - 2.0 * p2))
}

/// Detector error model: detectors plus a set of probabilistic hyperedges.
#[derive(Debug, Clone, PartialEq)]
pub struct Dem {
    detectors: Vec<Detector>,
    hyperedges: Vec<Hyperedge>,
    num_observables: usize,
}

impl Dem {
    /// Validates the model and merges hyperedges with identical
    /// `(detectors, observables)` using [`merge_prob`]. Merged entries keep the
    /// position of their first occurrence.
    pub fn new(
        detectors: Vec<Detector>,
        hyperedges: Vec<Hyperedge>,
        num_observables: usize,
    ) -> Result<Self> {
        if num_observables > 64 {
            return Err(Error::Model("at most 64 observables are supported".into()));
        }
        for (i, det) in detectors.iter().enumerate() {
            if det.id != i {
                return Err(Error::Model(format!(
                    "detector ids must be dense: found D{} at position {i}",
                    det.id
                )));
            }
        }
        let n = detectors.len();
        let mut merged: Vec<Hyperedge> = Vec::with_capacity(hyperedges.len());
        let mut seen: HashMap<(Vec<usize>, u64), usize> = HashMap::new();
        for mut e in hyperedges {
            e.detectors.sort_unstable();
            if e.detectors.is_empty() {
                return Err(Error::Model("hyperedge without detectors".into()));
            }
            if e.detectors.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Model(format!("hyperedge {:?} repeats a detector", e.detectors)));
            }
            if let Some(&bad) = e.detectors.iter().find(|&&d| d >= n) {
                return Err(Error::Model(format!("hyperedge references unknown detector D{bad}")));
            }
            if num_observables < 64 && e.observables >> num_observables != 0 {
                return Err(Error::Model(format!(
                    "hyperedge {:?} flips an undeclared observable",
                    e.detectors
                )));
            }
            if !(0.0..=0.5).contains(&e.probability) {
                return Err(Error::Model(format!(
                    "hyperedge {:?} has probability {} outside [0, 0.5]",
                    e.detectors, e.probability
                )));
            }
            let key = (e.detectors.clone(), e.observables);
            match seen.get(&key) {
                Some(&idx) => {
                    merged[idx].probability = xor_prob(merged[idx].probability, e.probability);
                }
                None => {
                    seen.insert(key, merged.len());
                    merged.push(e);
                }
            }
        }
        Ok(Dem { detectors, hyperedges: merged, num_observables })
    }

    pub fn detectors(&self) -> &[Detector] {
        &self.detectors
    }

    pub fn hyperedges(&self) -> &[Hyperedge] {
        &self.hyperedges
    }

    pub fn num_detectors(&self) -> usize {
        self.detectors.len()
    }

    pub fn num_observables(&self) -> usize {
        self.num_observables
    }

    pub fn max_degree(&self) -> usize {
        self.hyperedges.iter().map(Hyperedge::degree).max().unwrap_or(0)
    }

    pub fn is_graphlike(&self) -> bool {
        self.max_degree() <= 2
    }

    /// Whether every detector carries at least one coordinate.
    pub fn has_coordinates(&self) -> bool {
        self.detectors.iter().all(|d| !d.coords.is_empty())
    }

    /// Largest time coordinate in the model; the time-end boundary.
    pub fn t_max(&self) -> u32 {
        self.detectors
            .iter()
            .flat_map(|d| d.coords.iter().map(|c| c.t))
            .max()
            .unwrap_or(0)
    }

    /// Same structure with probabilities replaced. Lengths must match.
    pub fn with_probabilities(&self, probs: &[f64]) -> Result<Dem> {
        if probs.len() != self.hyperedges.len() {
            return Err(Error::Dimension(format!(
                "{} probabilities for {} hyperedges",
                probs.len(),
                self.hyperedges.len()
            )));
        }
        let mut out = self.clone();
        for (e, &p) in out.hyperedges.iter_mut().zip(probs) {
            if !(0.0..=0.5).contains(&p) {
                return Err(Error::Model(format!("probability {p} outside [0, 0.5]")));
            }
            e.probability = p;
        }
        Ok(out)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.hyperedges.iter().map(|e| e.probability).collect()
    }
}
