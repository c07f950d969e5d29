use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use crate::model::{merge_prob, Dem, Hyperedge, P_MAX, P_MIN};
use crate::{Error, Result};

/// Rewrites every hyperedge of degree ≥ 3 into existing edges of degree ≤ 2.
///
/// A decomposition is a partition of the detector set into components that
/// already exist as low-degree hyperedges and whose observable masks XOR to
/// the hyperedge's mask. The one with fewest components wins, ties going to
/// the lexicographically smallest component list. The hyperedge's
/// probability is merged into each component.
pub fn decompose_hyperedges(dem: &Dem) -> Result<Dem> {
    if dem.is_graphlike() {
        return Ok(dem.clone());
    }
    let edges = dem.hyperedges();
    let mut low: BTreeMap<&[usize], Vec<(u64, usize)>> = BTreeMap::new();
    for (i, e) in edges.iter().enumerate() {
        if e.degree() <= 2 {
            low.entry(e.detectors.as_slice()).or_default().push((e.observables, i));
        }
    }
    let mut probs: Vec<f64> = edges.iter().map(|e| e.probability).collect();
    for e in edges.iter().filter(|e| e.degree() > 2) {
        let mut best: Option<Vec<(Vec<usize>, u64, usize)>> = None;
        let mut current = Vec::new();
        search(&e.detectors, e.observables, &low, &mut current, &mut best);
        let parts = best.ok_or_else(|| {
            Error::Model(format!("hyperedge {:?} has no decomposition into existing edges", e.detectors))
        })?;
        for (_, _, idx) in parts {
            probs[idx] = merge_prob(probs[idx], e.probability)?;
        }
    }
    let detectors = dem.detectors().to_vec();
    let out: Vec<Hyperedge> = edges
        .iter()
        .zip(&probs)
        .filter(|(e, _)| e.degree() <= 2)
        .map(|(e, &p)| Hyperedge { probability: p, ..e.clone() })
        .collect();
    Dem::new(detectors, out, dem.num_observables())
}

type Parts = Vec<(Vec<usize>, u64, usize)>;

fn search(
    remaining: &[usize],
    obs: u64,
    low: &BTreeMap<&[usize], Vec<(u64, usize)>>,
    current: &mut Parts,
    best: &mut Option<Parts>,
) {
    if let Some(b) = best {
        if current.len() > b.len() || (current.len() == b.len() && !remaining.is_empty()) {
            return;
        }
    }
    let Some((&a, rest)) = remaining.split_first() else {
        if obs == 0 {
            let mut sorted = current.clone();
            sorted.sort();
            let better = match best {
                None => true,
                Some(b) => sorted.len() < b.len() || (sorted.len() == b.len() && sorted < *b),
            };
            if better {
                *best = Some(sorted);
            }
        }
        return;
    };
    let mut options: Vec<(Vec<usize>, Vec<usize>)> = vec![(vec![a], rest.to_vec())];
    for (k, &b) in rest.iter().enumerate() {
        let mut r = rest.to_vec();
        r.remove(k);
        options.push((vec![a, b], r));
    }
    for (comp, left) in options {
        if let Some(cands) = low.get(comp.as_slice()) {
            for &(m, idx) in cands {
                current.push((comp.clone(), m, idx));
                search(&left, obs ^ m, low, current, best);
                current.pop();
            }
        }
    }
}

/// Weight of an edge firing with probability `p`, after clamping.
pub fn edge_weight(p: f64) -> f64 {
    let p = p.clamp(P_MIN, P_MAX);
    ((1.0 - p) / p).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    pub u: usize,
    /// Equal to the boundary node for boundary edges.
    pub v: usize,
    pub probability: f64,
    pub weight: f64,
    pub observables: u64,
}

/// Detectors `0..D` plus the boundary node `D`.
#[derive(Debug, Clone)]
pub struct MatchingGraph {
    num_detectors: usize,
    num_observables: usize,
    edges: Vec<GraphEdge>,
    adj_start: Vec<usize>,
    adj: Vec<(usize, usize)>,
}

impl MatchingGraph {
    /// Builds the graph of a model of degree ≤ 2. Parallel edges merge into one
    /// carrying the observable mask of the likeliest member.
    pub fn new(dem: &Dem) -> Result<Self> {
        if !dem.is_graphlike() {
            return Err(Error::Model("matching graph needs hyperedges of degree at most 2".into()));
        }
        let boundary = dem.num_detectors();
        let mut groups: Vec<((usize, usize), f64, f64, u64)> = Vec::new();
        let mut slot: HashMap<(usize, usize), usize> = HashMap::new();
        for e in dem.hyperedges() {
            let key = match e.detectors.as_slice() {
                [a] => (*a, boundary),
                [a, b] => (*a, *b),
                _ => continue,
            };
            match slot.get(&key) {
                Some(&i) => {
                    let g = &mut groups[i];
                    g.1 = merge_prob(g.1, e.probability)?;
                    if e.probability > g.2 {
                        g.2 = e.probability;
                        g.3 = e.observables;
                    }
                }
                None => {
                    slot.insert(key, groups.len());
                    groups.push((key, e.probability, e.probability, e.observables));
                }
            }
        }
        let edges: Vec<GraphEdge> = groups
            .into_iter()
            .map(|((u, v), p, _, obs)| GraphEdge {
                u,
                v,
                probability: p,
                weight: edge_weight(p),
                observables: obs,
            })
            .collect();
        let n = boundary + 1;
        let mut deg = vec![0usize; n];
        for e in &edges {
            deg[e.u] += 1;
            deg[e.v] += 1;
        }
        let mut adj_start = vec![0; n + 1];
        for i in 0..n {
            adj_start[i + 1] = adj_start[i] + deg[i];
        }
        let mut fill = adj_start.clone();
        let mut adj = vec![(0, 0); adj_start[n]];
        for (k, e) in edges.iter().enumerate() {
            adj[fill[e.u]] = (e.v, k);
            fill[e.u] += 1;
            adj[fill[e.v]] = (e.u, k);
            fill[e.v] += 1;
        }
        Ok(MatchingGraph { num_detectors: boundary, num_observables: dem.num_observables(), edges, adj_start, adj })
    }

    pub fn num_detectors(&self) -> usize {
        self.num_detectors
    }

    pub fn num_observables(&self) -> usize {
        self.num_observables
    }

    pub fn boundary(&self) -> usize {
        self.num_detectors
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    fn neighbors(&self, u: usize) -> &[(usize, usize)] {
        &self.adj[self.adj_start[u]..self.adj_start[u + 1]]
    }

    /// Shortest paths from `source`. The boundary is a sink: paths may end
    /// there but never pass through it. Ties keep the first path found.
    pub fn shortest_paths(&self, source: usize) -> ShortestPaths {
        let n = self.num_detectors + 1;
        let mut dist = vec![f64::INFINITY; n];
        let mut obs = vec![0u64; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Entry(0.0, source));
        while let Some(Entry(d, u)) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            if u == self.boundary() && u != source {
                continue;
            }
            for &(v, k) in self.neighbors(u) {
                let nd = d + self.edges[k].weight;
                if nd < dist[v] {
                    dist[v] = nd;
                    obs[v] = obs[u] ^ self.edges[k].observables;
                    heap.push(Entry(nd, v));
                }
            }
        }
        ShortestPaths { dist, obs }
    }
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // min-heap on distance, then node index
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Distances and path observable masks from one source.
#[derive(Debug, Clone)]
pub struct ShortestPaths {
    pub dist: Vec<f64>,
    pub obs: Vec<u64>,
}

/// All-pairs table for decoding many syndromes on one graph.
#[derive(Debug, Clone)]
pub struct PathTable {
    n: usize,
    dist: Vec<f64>,
    obs: Vec<u64>,
}

impl PathTable {
    pub fn new(graph: &MatchingGraph) -> Self {
        let n = graph.num_detectors() + 1;
        let mut dist = Vec::with_capacity(n * n);
        let mut obs = Vec::with_capacity(n * n);
        for s in 0..n {
            let sp = graph.shortest_paths(s);
            dist.extend(sp.dist);
            obs.extend(sp.obs);
        }
        PathTable { n, dist, obs }
    }

    pub fn num_detectors(&self) -> usize {
        self.n - 1
    }

    /// Path `a`–`b`, always read from the search rooted at the smaller index.
    pub fn path(&self, a: usize, b: usize) -> (f64, u64) {
        let (s, t) = if a <= b { (a, b) } else { (b, a) };
        (self.dist[s * self.n + t], self.obs[s * self.n + t])
    }

    pub fn boundary(&self, a: usize) -> (f64, u64) {
        (self.dist[a * self.n + self.n - 1], self.obs[a * self.n + self.n - 1])
    }
}
