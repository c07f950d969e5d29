//! Policy-gradient oracles: random loss instances, finite-difference
//! gradients and a Monte Carlo check of the unclipped estimator.

use priorcal::rlopt::{
    compute_rewards, importance_ratios, losses, losses_with_detached, sample_policy, Baseline, EpochBatch,
    Hyperparams, Policy, QuadraticEnv,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

pub struct Instance {
    pub policy: Policy,
    pub baseline: Baseline,
    pub batch: EpochBatch,
    pub s: Vec<Vec<bool>>,
}

pub fn instance(r: &mut ChaCha8Rng, p: usize, a: usize, b: usize, shift: f64) -> Instance {
    let collection = Policy {
        mu: (0..p).map(|_| -3.0 + 0.5 * normal(r)).collect(),
        log_sigma: (0..p).map(|_| 0.3f64.ln() + 0.2 * normal(r)).collect(),
    };
    let candidates = sample_policy(&collection, b, r.random()).unwrap();
    let rewards = (0..b).map(|_| (0..a).map(|_| 2.0 + 0.5 * normal(r)).collect()).collect();
    let s: Vec<Vec<bool>> = (0..a).map(|_| (0..p).map(|_| r.random_bool(0.7)).collect()).collect();
    let policy = Policy {
        mu: collection.mu.iter().map(|m| m + shift * normal(r)).collect(),
        log_sigma: collection.log_sigma.iter().map(|l| l + shift * normal(r)).collect(),
    };
    let baseline = Baseline { b: (0..a).map(|_| 2.0 + 0.3 * normal(r)).collect() };
    Instance { policy, baseline, batch: EpochBatch { candidates, collection, rewards }, s }
}

/// Largest relative deviation between analytic and five-point finite
/// difference gradients of the total loss. Relative error is measured
/// against `max(|analytic|, |numeric|, 1e-3)`.
pub fn gradient_error(inst: &Instance, hp: &Hyperparams) -> f64 {
    let h = 1e-4;
    let rep = losses(&inst.policy, &inst.baseline, &inst.batch, &inst.s, hp).unwrap();
    let total = |pol: &Policy, b: &Baseline| {
        losses_with_detached(pol, b, &inst.baseline, &inst.batch, &inst.s, hp).unwrap().total
    };
    let five = |f: &dyn Fn(f64) -> f64| (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h);
    let mut worst: f64 = 0.0;
    let mut check = |analytic: f64, numeric: f64| {
        let scale = analytic.abs().max(numeric.abs()).max(1e-3);
        worst = worst.max((analytic - numeric).abs() / scale);
    };
    for j in 0..inst.policy.len() {
        let fd = five(&|d| {
            let mut p = inst.policy.clone();
            p.mu[j] += d;
            total(&p, &inst.baseline)
        });
        check(rep.grads.mu[j], fd);
        let fd = five(&|d| {
            let mut p = inst.policy.clone();
            p.log_sigma[j] += d;
            total(&p, &inst.baseline)
        });
        check(rep.grads.log_sigma[j], fd);
    }
    for a in 0..inst.baseline.b.len() {
        let fd = five(&|d| {
            let mut b = inst.baseline.clone();
            b.b[a] += d;
            total(&inst.policy, &b)
        });
        check(rep.grads.baseline[a], fd);
    }
    worst
}

/// Whether any importance ratio sits within `margin` of a clip edge, where
/// the surrogate is not differentiable.
pub fn near_kink(inst: &Instance, eps: f64, margin: f64) -> bool {
    importance_ratios(&inst.policy, &inst.batch, &inst.s)
        .unwrap()
        .iter()
        .flatten()
        .any(|&chi| (chi - (1.0 - eps)).abs() < margin || (chi - (1.0 + eps)).abs() < margin)
}

/// One gradient component: Monte Carlo mean, its standard error and the
/// finite-difference gradient of the expected reward.
#[derive(Debug, Clone, Copy)]
pub struct Component {
    pub mean: f64,
    pub se: f64,
    pub fd: f64,
}

/// Averages the negated unclipped loss gradient over `n_batches` batches of
/// 16 on a three-parameter, two-agent quadratic toy with the policy equal to
/// the collection policy.
pub fn unbiasedness_components(n_batches: usize) -> Vec<Component> {
    let s = vec![vec![true, true, false], vec![false, true, true]];
    let env = QuadraticEnv::new(vec![-2.8, -2.7, -2.2], s.clone()).unwrap();
    let policy = Policy { mu: vec![-3.0, -2.5, -2.0], log_sigma: vec![0.3f64.ln(), 0.2f64.ln(), 0.4f64.ln()] };
    let hp = Hyperparams { ir_clip: None, ..Hyperparams::repetition() };
    let baseline = Baseline { b: vec![-0.1, -0.1] };
    let dim = 6;
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    for k in 0..n_batches {
        let candidates = sample_policy(&policy, 16, 1000 + k as u64).unwrap();
        let rewards = compute_rewards(&env, &candidates).unwrap();
        let batch = EpochBatch { candidates, collection: policy.clone(), rewards };
        let g = losses(&policy, &baseline, &batch, &s, &hp).unwrap().grads;
        for (i, v) in g.mu.iter().chain(&g.log_sigma).enumerate() {
            sum[i] -= v;
            sum_sq[i] += v * v;
        }
    }
    let h = 1e-5;
    (0..dim)
        .map(|i| {
            let mean = sum[i] / n_batches as f64;
            let var = sum_sq[i] / n_batches as f64 - mean * mean;
            let at = |d: f64| {
                let mut p = policy.clone();
                if i < 3 {
                    p.mu[i] += d;
                } else {
                    p.log_sigma[i - 3] += d;
                }
                env.expected_reward(&p)
            };
            Component { mean, se: (var / n_batches as f64).sqrt(), fd: (at(h) - at(-h)) / (2.0 * h) }
        })
        .collect()
}
