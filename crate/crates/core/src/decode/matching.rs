//! Exact minimum-weight perfect matching of fired detectors, each of which
//! may instead pair with its own copy of the boundary.

use std::cell::RefCell;

use super::blossom::max_weight_matching;
use crate::{Error, Result};

/// Largest cluster handled by the subset dynamic programme.
const DP_MAX: usize = 20;
/// Clusters up to this size use the bottom-up table on the stack.
const SMALL_DP: usize = 7;

/// Dense pairwise costs among `k` fired detectors plus boundary costs.
/// Infinite cost means no path.
#[derive(Debug, Clone)]
pub struct MatchingProblem {
    pub k: usize,
    /// Row-major `k × k`, only `i < j` is read.
    pub pair_cost: Vec<f64>,
    pub pair_obs: Vec<u64>,
    pub boundary_cost: Vec<f64>,
    pub boundary_obs: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchingResult {
    pub cost: f64,
    pub observables: u64,
}

#[derive(Default)]
struct DpScratch {
    generation: u32,
    stamp: Vec<u32>,
    cost: Vec<f64>,
    obs: Vec<u64>,
}

thread_local! {
    static DP_SCRATCH: RefCell<DpScratch> = RefCell::new(DpScratch::default());
}

struct DpCtx<'a> {
    problem: &'a MatchingProblem,
    members: &'a [usize],
    local: &'a [u32],
}

impl DpCtx<'_> {
    fn best(&self, mask: u32, s: &mut DpScratch) -> (f64, u64) {
        if mask == 0 {
            return (0.0, 0);
        }
        let key = mask as usize;
        if s.stamp[key] == s.generation {
            return (s.cost[key], s.obs[key]);
        }
        let a = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << a);
        let i = self.members[a];
        let p = self.problem;
        let (c0, o0) = self.best(rest, s);
        let mut best = c0 + p.boundary_cost[i];
        let mut best_obs = o0 ^ p.boundary_obs[i];
        let mut opts = rest & self.local[a];
        while opts != 0 {
            let b = opts.trailing_zeros() as usize;
            opts &= opts - 1;
            let (cs, os) = self.best(rest & !(1 << b), s);
            let (c, o) = p.pair(i, self.members[b]);
            if cs + c < best {
                best = cs + c;
                best_obs = os ^ o;
            }
        }
        s.stamp[key] = s.generation;
        s.cost[key] = best;
        s.obs[key] = best_obs;
        (best, best_obs)
    }
}

impl MatchingProblem {
    pub fn with_size(k: usize) -> Self {
        let mut p = MatchingProblem {
            k: 0,
            pair_cost: Vec::new(),
            pair_obs: Vec::new(),
            boundary_cost: Vec::new(),
            boundary_obs: Vec::new(),
        };
        p.reset(k);
        p
    }

    /// Resizes to `k` detectors with every cost infinite, keeping buffers.
    pub fn reset(&mut self, k: usize) {
        self.k = k;
        self.pair_cost.clear();
        self.pair_cost.resize(k * k, f64::INFINITY);
        self.pair_obs.clear();
        self.pair_obs.resize(k * k, 0);
        self.boundary_cost.clear();
        self.boundary_cost.resize(k, f64::INFINITY);
        self.boundary_obs.clear();
        self.boundary_obs.resize(k, 0);
    }

    fn pair(&self, i: usize, j: usize) -> (f64, u64) {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        (self.pair_cost[a * self.k + b], self.pair_obs[a * self.k + b])
    }

    /// Pair `i`–`j` can appear in some optimal matching only if it is cheaper
    /// than sending both detectors to the boundary.
    fn useful(&self, i: usize, j: usize) -> bool {
        self.pair(i, j).0 < self.boundary_cost[i] + self.boundary_cost[j]
    }

    /// Useful partners of every detector as bit masks (`k ≤ 64`).
    fn useful_masks(&self) -> Vec<u64> {
        let k = self.k;
        let mut masks = vec![0u64; k];
        for i in 0..k {
            for j in i + 1..k {
                if self.useful(i, j) {
                    masks[i] |= 1 << j;
                    masks[j] |= 1 << i;
                }
            }
        }
        masks
    }

    /// Exact minimum-weight matching.
    ///
    /// Replacing a pair that is not useful by two boundary matches never costs
    /// more, so the connected components of the useful-pair graph are matched
    /// independently and only useful pairs are considered inside them.
    pub fn solve(&self) -> Result<MatchingResult> {
        let out = match self.k {
            0 => MatchingResult { cost: 0.0, observables: 0 },
            1 => MatchingResult { cost: self.boundary_cost[0], observables: self.boundary_obs[0] },
            2 => {
                let (c, o) = self.pair(0, 1);
                let b = self.boundary_cost[0] + self.boundary_cost[1];
                if c <= b {
                    MatchingResult { cost: c, observables: o }
                } else {
                    MatchingResult { cost: b, observables: self.boundary_obs[0] ^ self.boundary_obs[1] }
                }
            }
            k if k <= 64 => self.solve_clusters()?,
            _ => self.solve_blossom()?,
        };
        if !out.cost.is_finite() {
            return Err(Error::Decode("a fired detector cannot reach a partner or the boundary".into()));
        }
        Ok(out)
    }

    fn solve_clusters(&self) -> Result<MatchingResult> {
        let masks = self.useful_masks();
        let mut remaining: u64 = if self.k == 64 { u64::MAX } else { (1u64 << self.k) - 1 };
        let mut total = MatchingResult { cost: 0.0, observables: 0 };
        let mut members = Vec::with_capacity(self.k);
        while remaining != 0 {
            let seed = remaining.trailing_zeros() as usize;
            let mut comp = 1u64 << seed;
            let mut frontier = comp;
            while frontier != 0 {
                let i = frontier.trailing_zeros() as usize;
                frontier &= frontier - 1;
                let new = masks[i] & remaining & !comp;
                comp |= new;
                frontier |= new;
            }
            remaining &= !comp;
            members.clear();
            let mut c = comp;
            while c != 0 {
                members.push(c.trailing_zeros() as usize);
                c &= c - 1;
            }
            let r = match members.len() {
                1 => {
                    let i = members[0];
                    MatchingResult { cost: self.boundary_cost[i], observables: self.boundary_obs[i] }
                }
                2 => {
                    let (i, j) = (members[0], members[1]);
                    let (c, o) = self.pair(i, j);
                    MatchingResult { cost: c, observables: o }
                }
                n if n <= DP_MAX => self.dp_on(&members, &masks),
                _ => self.subproblem(&members).solve_blossom()?,
            };
            total.cost += r.cost;
            total.observables ^= r.observables;
        }
        Ok(total)
    }

    fn subproblem(&self, members: &[usize]) -> MatchingProblem {
        let m = members.len();
        let mut p = MatchingProblem::with_size(m);
        for (a, &i) in members.iter().enumerate() {
            p.boundary_cost[a] = self.boundary_cost[i];
            p.boundary_obs[a] = self.boundary_obs[i];
            for (b, &j) in members.iter().enumerate().skip(a + 1) {
                let (c, o) = self.pair(i, j);
                p.pair_cost[a * m + b] = c;
                p.pair_obs[a * m + b] = o;
            }
        }
        p
    }

    /// Memoised subset DP on `members`: the lowest unmatched detector goes to
    /// the boundary or to a useful unmatched partner. Only masks reachable
    /// from the full set are visited.
    fn dp_on(&self, members: &[usize], masks: &[u64]) -> MatchingResult {
        let m = members.len();
        let mut local = [0u32; DP_MAX];
        for a in 0..m {
            for b in 0..m {
                if masks[members[a]] >> members[b] & 1 == 1 {
                    local[a] |= 1 << b;
                }
            }
        }
        if m <= SMALL_DP {
            return self.dp_small(members, &local[..m]);
        }
        DP_SCRATCH.with(|cell| {
            let s = &mut *cell.borrow_mut();
            let size = 1usize << m;
            if s.stamp.len() < size {
                s.stamp.resize(size, 0);
                s.cost.resize(size, 0.0);
                s.obs.resize(size, 0);
            }
            s.generation = s.generation.wrapping_add(1);
            if s.generation == 0 {
                s.stamp.iter_mut().for_each(|x| *x = 0);
                s.generation = 1;
            }
            let ctx = DpCtx { problem: self, members, local: &local[..m] };
            let full = (size - 1) as u32;
            let (cost, observables) = ctx.best(full, s);
            MatchingResult { cost, observables }
        })
    }

    /// Bottom-up variant on stack arrays for small clusters.
    fn dp_small(&self, members: &[usize], local: &[u32]) -> MatchingResult {
        let m = members.len();
        let full = (1usize << m) - 1;
        let mut cost = [0.0f64; 1 << SMALL_DP];
        let mut obs = [0u64; 1 << SMALL_DP];
        for mask in 1..=full {
            let a = mask.trailing_zeros() as usize;
            let rest = mask & !(1 << a);
            let i = members[a];
            let mut best = cost[rest] + self.boundary_cost[i];
            let mut best_obs = obs[rest] ^ self.boundary_obs[i];
            let mut opts = rest & local[a] as usize;
            while opts != 0 {
                let b = opts.trailing_zeros() as usize;
                opts &= opts - 1;
                let sub = rest & !(1 << b);
                let (c, o) = self.pair(i, members[b]);
                if cost[sub] + c < best {
                    best = cost[sub] + c;
                    best_obs = obs[sub] ^ o;
                }
            }
            cost[mask] = best;
            obs[mask] = best_obs;
        }
        MatchingResult { cost: cost[full], observables: obs[full] }
    }

    /// Plain subset DP over all pairs, kept as a reference for the solvers.
    pub fn solve_dp(&self) -> MatchingResult {
        let k = self.k;
        assert!(k < 24, "subset DP is limited to small syndromes");
        let full = (1usize << k) - 1;
        let mut cost = vec![f64::INFINITY; full + 1];
        let mut obs = vec![0u64; full + 1];
        cost[0] = 0.0;
        for mask in 1..=full {
            let i = mask.trailing_zeros() as usize;
            let rest = mask & !(1 << i);
            let mut best = cost[rest] + self.boundary_cost[i];
            let mut best_obs = obs[rest] ^ self.boundary_obs[i];
            let mut m = rest;
            while m != 0 {
                let j = m.trailing_zeros() as usize;
                m &= m - 1;
                let sub = rest & !(1 << j);
                let (c, o) = self.pair(i, j);
                let total = cost[sub] + c;
                if total < best {
                    best = total;
                    best_obs = obs[sub] ^ o;
                }
            }
            cost[mask] = best;
            obs[mask] = best_obs;
        }
        MatchingResult { cost: cost[full], observables: obs[full] }
    }

    /// Blossom on the `2k`-vertex graph with one boundary copy per detector.
    /// Costs are quantized to integers; the reported cost is re-summed in
    /// floating point from the chosen pairs.
    pub fn solve_blossom(&self) -> Result<MatchingResult> {
        let k = self.k;
        let mut max_cost: f64 = 0.0;
        for i in 0..k {
            if self.boundary_cost[i].is_finite() {
                max_cost = max_cost.max(self.boundary_cost[i]);
            }
            for j in i + 1..k {
                let c = self.pair(i, j).0;
                if c.is_finite() {
                    max_cost = max_cost.max(c);
                }
            }
        }
        let scale = if max_cost > 0.0 { (1u64 << 40) as f64 / max_cost } else { 1.0 };
        let top: i64 = 1 << 42;
        let q = |c: f64| top - (c * scale).round() as i64;
        let mut edges = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in i + 1..k {
                let c = self.pair(i, j).0;
                if c.is_finite() && self.useful(i, j) {
                    edges.push((i, j, q(c)));
                }
            }
            if self.boundary_cost[i].is_finite() {
                edges.push((i, k + i, q(self.boundary_cost[i])));
            }
            for j in i + 1..k {
                edges.push((k + i, k + j, top));
            }
        }
        let mate = max_weight_matching(2 * k, &edges, true);
        let mut cost = 0.0;
        let mut observables = 0;
        for i in 0..k {
            match mate[i] {
                Some(j) if j == k + i => {
                    cost += self.boundary_cost[i];
                    observables ^= self.boundary_obs[i];
                }
                Some(j) if j < k => {
                    if i < j {
                        let (c, o) = self.pair(i, j);
                        cost += c;
                        observables ^= o;
                    }
                }
                _ => return Err(Error::Decode(format!("fired detector {i} left unmatched"))),
            }
        }
        Ok(MatchingResult { cost, observables })
    }
}
