//! Minimum-weight perfect matching decoding and logical error rates.

mod blossom;
mod graph;
mod ler;
mod matching;

use std::cell::RefCell;
use std::collections::BTreeMap;

use rayon::prelude::*;

pub use blossom::max_weight_matching;
pub use graph::{decompose_hyperedges, edge_weight, GraphEdge, MatchingGraph, PathTable, ShortestPaths};
pub use ler::{fit_ler_exponential, wilson, ExponentialFit, LerEstimate, LerPoint};
pub use matching::{MatchingProblem, MatchingResult};

use crate::model::Dem;
use crate::sampler::ShotSet;
use crate::{Error, Result};

/// One-off decode: shortest paths are searched from each fired detector only.
pub fn mwpm_decode(graph: &MatchingGraph, syndrome: &[bool]) -> Result<MatchingResult> {
    if syndrome.len() != graph.num_detectors() {
        return Err(Error::Dimension(format!(
            "syndrome has {} bits, graph has {} detectors",
            syndrome.len(),
            graph.num_detectors()
        )));
    }
    let fired: Vec<usize> = (0..syndrome.len()).filter(|&i| syndrome[i]).collect();
    let paths: Vec<ShortestPaths> = fired.iter().map(|&f| graph.shortest_paths(f)).collect();
    let k = fired.len();
    let mut prob = MatchingProblem::with_size(k);
    let b = graph.boundary();
    for i in 0..k {
        prob.boundary_cost[i] = paths[i].dist[b];
        prob.boundary_obs[i] = paths[i].obs[b];
        for j in i + 1..k {
            // fired is ascending, so row i is the search rooted at the smaller id
            prob.pair_cost[i * k + j] = paths[i].dist[fired[j]];
            prob.pair_obs[i * k + j] = paths[i].obs[fired[j]];
        }
    }
    prob.solve()
}

/// Decoder with precomputed all-pairs paths, for many syndromes on one model.
#[derive(Debug, Clone)]
pub struct Decoder {
    graph: MatchingGraph,
    table: PathTable,
}

impl Decoder {
    /// Decomposes hyperedges if needed, then builds the graph and path table.
    pub fn new(dem: &Dem) -> Result<Self> {
        let graphlike = decompose_hyperedges(dem)?;
        Ok(Decoder::from_graph(MatchingGraph::new(&graphlike)?))
    }

    pub fn from_graph(graph: MatchingGraph) -> Self {
        let table = PathTable::new(&graph);
        Decoder { graph, table }
    }

    pub fn graph(&self) -> &MatchingGraph {
        &self.graph
    }

    pub fn num_detectors(&self) -> usize {
        self.graph.num_detectors()
    }

    /// `fired` must be ascending and duplicate-free.
    pub fn decode_fired(&self, fired: &[usize]) -> Result<MatchingResult> {
        thread_local! {
            static PROBLEM: RefCell<MatchingProblem> = RefCell::new(MatchingProblem::with_size(0));
        }
        PROBLEM.with(|cell| {
            let prob = &mut *cell.borrow_mut();
            let k = fired.len();
            prob.reset(k);
            for i in 0..k {
                let (c, o) = self.table.boundary(fired[i]);
                prob.boundary_cost[i] = c;
                prob.boundary_obs[i] = o;
                for j in i + 1..k {
                    let (c, o) = self.table.path(fired[i], fired[j]);
                    prob.pair_cost[i * k + j] = c;
                    prob.pair_obs[i * k + j] = o;
                }
            }
            prob.solve()
        })
    }

    pub fn decode_syndrome(&self, syndrome: &[bool]) -> Result<u64> {
        if syndrome.len() != self.num_detectors() {
            return Err(Error::Dimension("syndrome length does not match the decoder".into()));
        }
        let fired: Vec<usize> = (0..syndrome.len()).filter(|&i| syndrome[i]).collect();
        Ok(self.decode_fired(&fired)?.observables)
    }
}

/// Per-shot failure flags and their aggregate.
#[derive(Debug, Clone)]
pub struct ShotDecode {
    pub failures: Vec<bool>,
    pub estimate: LerEstimate,
}

fn check_dims(decoder: &Decoder, shots: &ShotSet) -> Result<()> {
    if shots.num_detectors() != decoder.num_detectors()
        || shots.num_observables() != decoder.graph().num_observables()
    {
        return Err(Error::Dimension(format!(
            "shots have {} detectors and {} observables, decoder {} and {}",
            shots.num_detectors(),
            shots.num_observables(),
            decoder.num_detectors(),
            decoder.graph().num_observables()
        )));
    }
    Ok(())
}

/// Decodes every shot; a failure is any observable predicted wrongly.
pub fn decode_shots(decoder: &Decoder, shots: &ShotSet) -> Result<ShotDecode> {
    check_dims(decoder, shots)?;
    let failures: Vec<bool> = (0..shots.n_shots())
        .into_par_iter()
        .map(|i| {
            let fired = shots.detectors.row_ones(i);
            Ok(decoder.decode_fired(&fired)?.observables != shots.observable_mask(i))
        })
        .collect::<Result<_>>()?;
    let n_fail = failures.iter().filter(|&&f| f).count();
    let estimate = LerEstimate::new(n_fail, shots.n_shots())?;
    Ok(ShotDecode { failures, estimate })
}

/// Distinct syndromes of a shot set, each with the count of every observed
/// observable mask. Decoding the histogram is equivalent to decoding all
/// shots but costs one matching per distinct syndrome.
#[derive(Debug, Clone)]
pub struct SyndromeHistogram {
    num_detectors: usize,
    num_observables: usize,
    n_shots: usize,
    entries: Vec<(Vec<usize>, Vec<(u64, usize)>)>,
}

impl SyndromeHistogram {
    pub fn from_shots(shots: &ShotSet) -> Self {
        Self::from_rows(shots, 0..shots.n_shots())
    }

    /// Histogram of the listed shots.
    pub fn from_rows(shots: &ShotSet, rows: impl IntoIterator<Item = usize>) -> Self {
        let mut map: BTreeMap<Vec<usize>, BTreeMap<u64, usize>> = BTreeMap::new();
        let mut n = 0;
        for i in rows {
            *map.entry(shots.detectors.row_ones(i)).or_default().entry(shots.observable_mask(i)).or_default() += 1;
            n += 1;
        }
        SyndromeHistogram {
            num_detectors: shots.num_detectors(),
            num_observables: shots.num_observables(),
            n_shots: n,
            entries: map.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(),
        }
    }

    pub fn n_shots(&self) -> usize {
        self.n_shots
    }

    pub fn num_distinct(&self) -> usize {
        self.entries.len()
    }

    pub fn evaluate(&self, decoder: &Decoder) -> Result<LerEstimate> {
        if self.num_detectors != decoder.num_detectors() || self.num_observables != decoder.graph().num_observables() {
            return Err(Error::Dimension("histogram does not match the decoder".into()));
        }
        let mut failures = 0;
        for (fired, outcomes) in &self.entries {
            let predicted = decoder.decode_fired(fired)?.observables;
            failures += outcomes.iter().filter(|(o, _)| *o != predicted).map(|(_, c)| c).sum::<usize>();
        }
        LerEstimate::new(failures, self.n_shots)
    }
}
