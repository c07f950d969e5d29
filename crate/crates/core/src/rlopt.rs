//! Multi-agent policy optimisation of the shared parameter vector.
//!
//! The policy is a factorised Gaussian over log10 class probabilities. Each
//! epoch samples a batch of candidates from a frozen copy of the policy,
//! scores every candidate once per agent, then takes several Adam steps on a
//! clipped importance-weighted surrogate. Importance ratios are restricted to
//! the parameters each agent actually uses.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::codegen::SensorSuite;
use crate::decode::{Decoder, SyndromeHistogram};
use crate::model::{cosine_similarity, fmt_f64, instantiate, Binding, ClassKey, Dem, Parametrization};
use crate::sampler::{subsample_sensor_shots, ShotSet};
use crate::{Error, Result};

pub const SIGMA_MIN: f64 = 1e-6;
pub const SIGMA_MAX: f64 = 10.0;
const LOG_RATIO_CLAMP: f64 = 30.0;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub batch_size: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    /// `None` disables ratio clipping.
    pub ir_clip: Option<f64>,
    pub value_coeff: f64,
    pub entropy_coeff: f64,
    pub init_sigma: f64,
    pub shots_per_epoch: usize,
}

impl Hyperparams {
    /// Settings for repetition-code calibration.
    pub fn repetition() -> Self {
        Hyperparams {
            batch_size: 70,
            epochs: 50,
            steps_per_epoch: 20,
            learning_rate: 1e-3,
            grad_clip: 0.1,
            ir_clip: Some(0.15),
            value_coeff: 200.0,
            entropy_coeff: 0.0,
            init_sigma: 0.3,
            shots_per_epoch: 37_500,
        }
    }

    /// Settings for larger codes with fewer shots per epoch.
    pub fn surface() -> Self {
        Hyperparams {
            epochs: 220,
            ir_clip: Some(0.4),
            entropy_coeff: 0.01,
            shots_per_epoch: 3_500,
            ..Self::repetition()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("hyperparameter {what} out of range")));
        if self.batch_size < 2 {
            return bad("batch_size");
        }
        if self.epochs == 0 {
            return bad("epochs");
        }
        if self.steps_per_epoch == 0 {
            return bad("steps_per_epoch");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate");
        }
        if !(self.grad_clip > 0.0) {
            return bad("grad_clip");
        }
        if matches!(self.ir_clip, Some(c) if !(c > 0.0)) {
            return bad("ir_clip");
        }
        if !(self.value_coeff >= 0.0) {
            return bad("value_coeff");
        }
        if !(self.entropy_coeff >= 0.0) {
            return bad("entropy_coeff");
        }
        if !(self.init_sigma > SIGMA_MIN && self.init_sigma < SIGMA_MAX) {
            return bad("init_sigma");
        }
        if self.shots_per_epoch == 0 {
            return bad("shots_per_epoch");
        }
        Ok(())
    }
}

/// Diagonal Gaussian over the parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl Policy {
    pub fn new(mu: Vec<f64>, sigma: f64) -> Result<Self> {
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::Numerical("policy mean has non-finite entries".into()));
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma {sigma} must be positive")));
        }
        let ls = sigma.clamp(SIGMA_MIN, SIGMA_MAX).ln();
        let n = mu.len();
        Ok(Policy { mu, log_sigma: vec![ls; n] })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_sigma.iter().map(|l| l.exp()).collect()
    }

    pub fn mean_sigma(&self) -> f64 {
        self.sigma().iter().sum::<f64>() / self.len().max(1) as f64
    }

    fn clamp_sigma(&mut self) {
        let (lo, hi) = (SIGMA_MIN.ln(), SIGMA_MAX.ln());
        for l in &mut self.log_sigma {
            *l = l.clamp(lo, hi);
        }
    }
}

/// Per-agent reward baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub b: Vec<f64>,
}

/// Candidates drawn from a frozen collection policy and their rewards.
#[derive(Debug, Clone)]
pub struct EpochBatch {
    pub candidates: Vec<Vec<f64>>,
    pub collection: Policy,
    pub rewards: Vec<Vec<f64>>,
}

fn normal_log_density(p: f64, mu: f64, log_sigma: f64) -> f64 {
    let z = (p - mu) / log_sigma.exp();
    -0.5 * z * z - log_sigma - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Draws `b` independent candidates from `policy`.
pub fn sample_policy(policy: &Policy, b: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if b < 2 {
        return Err(Error::InvalidArgument(format!("batch size {b} must be at least 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = policy.sigma();
    Ok((0..b)
        .map(|_| {
            policy
                .mu
                .iter()
                .zip(&sigma)
                .map(|(&m, &s)| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + s * z
                })
                .collect()
        })
        .collect())
}

/// Source of per-agent rewards for candidate parameter vectors.
pub trait RewardEnv: Sync {
    fn num_agents(&self) -> usize;
    fn num_params(&self) -> usize;
    /// Agent-by-parameter sparsity matrix.
    fn sparsity(&self) -> &[Vec<bool>];
    /// Prepares the data used by every [`RewardEnv::reward`] call of `epoch`.
    fn begin_epoch(&mut self, epoch: usize) -> Result<()>;
    fn reward(&self, candidate: &[f64], agent: usize) -> Result<f64>;
}

/// Scores every candidate for every agent, in parallel.
pub fn compute_rewards(env: &dyn RewardEnv, candidates: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let a = env.num_agents();
    let flat: Vec<f64> = (0..candidates.len() * a)
        .into_par_iter()
        .map(|k| env.reward(&candidates[k / a], k % a))
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<f64>> = flat.chunks(a.max(1)).map(|c| c.to_vec()).collect();
    if rows.iter().flatten().any(|r| !r.is_finite()) {
        return Err(Error::Numerical("non-finite reward".into()));
    }
    Ok(rows)
}

/// `R[i][a] − b[a]`.
pub fn advantages(rewards: &[Vec<f64>], baseline: &Baseline) -> Vec<Vec<f64>> {
    rewards.iter().map(|row| row.iter().zip(&baseline.b).map(|(r, b)| r - b).collect()).collect()
}

/// Per-candidate, per-parameter log ratio of current to collection density.
fn log_ratios(policy: &Policy, batch: &EpochBatch) -> Vec<Vec<f64>> {
    let c = &batch.collection;
    batch
        .candidates
        .iter()
        .map(|p| {
            (0..policy.len())
                .map(|j| {
                    normal_log_density(p[j], policy.mu[j], policy.log_sigma[j])
                        - normal_log_density(p[j], c.mu[j], c.log_sigma[j])
                })
                .collect()
        })
        .collect()
}

fn check_dims(policy: &Policy, batch: &EpochBatch, s: &[Vec<bool>]) -> Result<()> {
    let p = policy.len();
    if policy.log_sigma.len() != p || batch.collection.len() != p || batch.collection.log_sigma.len() != p {
        return Err(Error::Dimension("policy and collection policy differ in length".into()));
    }
    if batch.candidates.iter().any(|c| c.len() != p) {
        return Err(Error::Dimension("candidate length differs from the policy".into()));
    }
    if s.iter().any(|row| row.len() != p) {
        return Err(Error::Dimension("sparsity rows differ from the policy length".into()));
    }
    if batch.rewards.len() != batch.candidates.len() || batch.rewards.iter().any(|r| r.len() != s.len()) {
        return Err(Error::Dimension("reward matrix does not match batch and agents".into()));
    }
    Ok(())
}

/// Summed log ratio per (candidate, agent), clamped, and whether it hit the clamp.
fn agent_log_ratios(ell: &[Vec<f64>], s: &[Vec<bool>]) -> Vec<Vec<(f64, bool)>> {
    ell.iter()
        .map(|row| {
            s.iter()
                .map(|mask| {
                    let sum: f64 = row.iter().zip(mask).filter(|(_, &m)| m).map(|(l, _)| l).sum();
                    if sum.abs() > LOG_RATIO_CLAMP {
                        (sum.clamp(-LOG_RATIO_CLAMP, LOG_RATIO_CLAMP), true)
                    } else {
                        (sum, false)
                    }
                })
                .collect()
        })
        .collect()
}

/// `χ[i][a] = exp(Σ_j S[a,j]·ℓ[i][j])`, log sums clamped to ±30.
pub fn importance_ratios(policy: &Policy, batch: &EpochBatch, s: &[Vec<bool>]) -> Result<Vec<Vec<f64>>> {
    check_dims(policy, batch, s)?;
    let sums = agent_log_ratios(&log_ratios(policy, batch), s);
    Ok(sums.into_iter().map(|row| row.into_iter().map(|(l, _)| l.exp()).collect()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
    pub baseline: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub policy: f64,
    pub baseline: f64,
    pub entropy: f64,
    pub total: f64,
    pub grads: Gradients,
}

/// Surrogate losses and their analytic gradients.
///
/// Advantages inside the policy term are treated as constants, so the
/// baseline is driven by its own quadratic loss only.
pub fn losses(policy: &Policy, baseline: &Baseline, batch: &EpochBatch, s: &[Vec<bool>], hp: &Hyperparams) -> Result<LossReport> {
    losses_with_detached(policy, baseline, baseline, batch, s, hp)
}

/// [`losses`] with the policy-term advantages computed from
/// `advantage_baseline` instead of `baseline`.
pub fn losses_with_detached(
    policy: &Policy,
    baseline: &Baseline,
    advantage_baseline: &Baseline,
    batch: &EpochBatch,
    s: &[Vec<bool>],
    hp: &Hyperparams,
) -> Result<LossReport> {
    check_dims(policy, batch, s)?;
    let a_count = s.len();
    if baseline.b.len() != a_count || advantage_baseline.b.len() != a_count {
        return Err(Error::Dimension("baseline length differs from the agent count".into()));
    }
    let b_count = batch.candidates.len() as f64;
    let p = policy.len();
    let ell = log_ratios(policy, batch);
    let sums = agent_log_ratios(&ell, s);
    let adv_policy = advantages(&batch.rewards, advantage_baseline);
    let adv = advantages(&batch.rewards, baseline);
    let sigma2: Vec<f64> = policy.log_sigma.iter().map(|l| (2.0 * l).exp()).collect();

    let mut l_policy = 0.0;
    let mut g_mu = vec![0.0; p];
    let mut g_ls = vec![0.0; p];
    for (i, cand) in batch.candidates.iter().enumerate() {
        let dmu: Vec<f64> = (0..p).map(|j| (cand[j] - policy.mu[j]) / sigma2[j]).collect();
        let dls: Vec<f64> = (0..p).map(|j| (cand[j] - policy.mu[j]).powi(2) / sigma2[j] - 1.0).collect();
        for a in 0..a_count {
            let (lsum, clamped) = sums[i][a];
            let chi = lsum.exp();
            let alpha = adv_policy[i][a];
            let unclipped = chi * alpha;
            let (term, active) = match hp.ir_clip {
                Some(eps) => {
                    let clipped = chi.clamp(1.0 - eps, 1.0 + eps) * alpha;
                    if unclipped <= clipped {
                        (unclipped, true)
                    } else {
                        (clipped, false)
                    }
                }
                None => (unclipped, true),
            };
            l_policy -= term;
            if active && !clamped && alpha != 0.0 {
                let w = -unclipped / b_count;
                for j in 0..p {
                    if s[a][j] {
                        g_mu[j] += w * dmu[j];
                        g_ls[j] += w * dls[j];
                    }
                }
            }
        }
    }
    l_policy /= b_count;

    let l_baseline = adv.iter().flatten().map(|x| x * x).sum::<f64>() / b_count;
    let g_b: Vec<f64> = (0..a_count)
        .map(|a| hp.value_coeff * -2.0 * adv.iter().map(|row| row[a]).sum::<f64>() / b_count)
        .collect();

    let half_log_2pie = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    let l_entropy = -policy.log_sigma.iter().map(|l| half_log_2pie + l).sum::<f64>();
    for g in &mut g_ls {
        *g -= hp.entropy_coeff;
    }

    for (name, v) in [("mu", &g_mu), ("log_sigma", &g_ls), ("baseline", &g_b)] {
        if let Some(j) = v.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("non-finite gradient in {name}[{j}]")));
        }
    }
    let total = l_policy + hp.value_coeff * l_baseline + hp.entropy_coeff * l_entropy;
    Ok(LossReport {
        policy: l_policy,
        baseline: l_baseline,
        entropy: l_entropy,
        total,
        grads: Gradients { mu: g_mu, log_sigma: g_ls, baseline: g_b },
    })
}

/// First and second moment estimates over `(mu, log_sigma, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(num_params: usize, num_agents: usize) -> Self {
        let n = 2 * num_params + num_agents;
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One clipped Adam update of policy and baseline.
pub fn step(policy: &mut Policy, baseline: &mut Baseline, adam: &mut AdamState, grads: &Gradients, hp: &Hyperparams) -> Result<()> {
    let p = policy.len();
    let a = baseline.b.len();
    if grads.mu.len() != p || grads.log_sigma.len() != p || grads.baseline.len() != a || adam.m.len() != 2 * p + a {
        return Err(Error::Dimension("gradient, state and parameter sizes differ".into()));
    }
    adam.t += 1;
    let t = adam.t as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let grad_iter = grads.mu.iter().chain(&grads.log_sigma).chain(&grads.baseline);
    let params = policy.mu.iter_mut().chain(policy.log_sigma.iter_mut()).chain(baseline.b.iter_mut());
    for (k, (x, &g)) in params.zip(grad_iter).enumerate() {
        let g = g.clamp(-hp.grad_clip, hp.grad_clip);
        adam.m[k] = ADAM_BETA1 * adam.m[k] + (1.0 - ADAM_BETA1) * g;
        adam.v[k] = ADAM_BETA2 * adam.v[k] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = adam.m[k] / c1;
        let v_hat = adam.v[k] / c2;
        *x -= hp.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    policy.clamp_sigma();
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hp: Hyperparams,
    pub seed: u64,
    /// Optional parameter vector to report cosine similarity against.
    pub reference: Option<Vec<f64>>,
}

/// Statistics of one epoch's batch, taken before that epoch's updates.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_reward: f64,
    pub min_reward: f64,
    pub max_reward: f64,
    pub cos_to_seed: f64,
    pub cos_to_reference: Option<f64>,
    pub mean_sigma: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub baseline: Baseline,
    pub history: Vec<EpochRecord>,
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finaliser over the pair
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the full epoch loop starting from `seed_theta`.
pub fn train(env: &mut dyn RewardEnv, seed_theta: &[f64], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let hp = &cfg.hp;
    hp.validate()?;
    if seed_theta.len() != env.num_params() {
        return Err(Error::Dimension(format!(
            "seed has {} parameters, environment has {}",
            seed_theta.len(),
            env.num_params()
        )));
    }
    if let Some(r) = &cfg.reference {
        if r.len() != seed_theta.len() {
            return Err(Error::Dimension("reference vector length differs from the seed".into()));
        }
    }
    let a = env.num_agents();
    let s: Vec<Vec<bool>> = env.sparsity().to_vec();
    let mut policy = Policy::new(seed_theta.to_vec(), hp.init_sigma)?;
    let mut baseline = Baseline { b: vec![0.0; a] };
    let mut adam = AdamState::new(policy.len(), a);
    let mut history = Vec::with_capacity(hp.epochs);

    for epoch in 0..hp.epochs {
        env.begin_epoch(epoch)?;
        let collection = policy.clone();
        let candidates = sample_policy(&collection, hp.batch_size, mix_seed(cfg.seed, epoch as u64))?;
        let rewards = compute_rewards(env, &candidates)?;
        if epoch == 0 {
            baseline.b = (0..a).map(|k| rewards.iter().map(|r| r[k]).sum::<f64>() / rewards.len() as f64).collect();
        }
        let flat: Vec<f64> = rewards.iter().flatten().copied().collect();
        history.push(EpochRecord {
            epoch,
            mean_reward: flat.iter().sum::<f64>() / flat.len().max(1) as f64,
            min_reward: flat.iter().copied().fold(f64::INFINITY, f64::min),
            max_reward: flat.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            cos_to_seed: cosine_similarity(&collection.mu, seed_theta)?,
            cos_to_reference: cfg.reference.as_ref().map(|r| cosine_similarity(&collection.mu, r)).transpose()?,
            mean_sigma: collection.mean_sigma(),
        });
        let batch = EpochBatch { candidates, collection, rewards };
        for _ in 0..hp.steps_per_epoch {
            let report = losses(&policy, &baseline, &batch, &s, hp)?;
            step(&mut policy, &mut baseline, &mut adam, &report.grads, hp)?;
        }
    }
    Ok(TrainOutcome { policy, baseline, history })
}

/// Sensor-code rewards from a finite pool of training shots.
///
/// Each epoch takes the next `shots_per_epoch` shots of a seeded permutation
/// of the pool; a fresh permutation starts whenever the pool runs out.
#[derive(Debug, Clone)]
pub struct SensorEnv {
    templates: Vec<Dem>,
    bindings: Vec<Binding>,
    sparsity: Vec<Vec<bool>>,
    num_params: usize,
    pools: Vec<ShotSet>,
    shots_per_epoch: usize,
    seed: u64,
    order: Vec<usize>,
    cursor: usize,
    pass: u64,
    epoch_data: Vec<SyndromeHistogram>,
}

impl SensorEnv {
    /// `train_shots` are target-code shots with final data bits.
    pub fn new(suite: &SensorSuite, train_shots: &ShotSet, shots_per_epoch: usize, seed: u64) -> Result<Self> {
        let n = train_shots.n_shots();
        if shots_per_epoch == 0 || shots_per_epoch > n {
            return Err(Error::InvalidArgument(format!(
                "{shots_per_epoch} shots per epoch from a pool of {n}"
            )));
        }
        let pools: Vec<ShotSet> =
            suite.sensors.iter().map(|s| subsample_sensor_shots(train_shots, s)).collect::<Result<_>>()?;
        let param = &suite.parametrization;
        Ok(SensorEnv {
            templates: suite.sensors.iter().map(|s| s.dem.clone()).collect(),
            bindings: (0..param.num_agents()).map(|a| param.binding(a).clone()).collect(),
            sparsity: param.sparsity().to_vec(),
            num_params: param.num_params(),
            pools,
            shots_per_epoch,
            seed,
            order: Vec::new(),
            cursor: n,
            pass: 0,
            epoch_data: Vec::new(),
        })
    }

    fn pool_size(&self) -> usize {
        self.pools[0].n_shots()
    }

    fn next_rows(&mut self) -> Vec<usize> {
        let n = self.pool_size();
        let mut rows = Vec::with_capacity(self.shots_per_epoch);
        while rows.len() < self.shots_per_epoch {
            if self.cursor == n {
                self.order = (0..n).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, self.pass));
                self.order.shuffle(&mut rng);
                self.pass += 1;
                self.cursor = 0;
            }
            let take = (self.shots_per_epoch - rows.len()).min(n - self.cursor);
            rows.extend_from_slice(&self.order[self.cursor..self.cursor + take]);
            self.cursor += take;
        }
        rows
    }

    /// Reward of `theta` for `agent` on its whole training pool.
    pub fn pool_reward(&self, theta: &[f64], agent: usize) -> Result<f64> {
        let hist = SyndromeHistogram::from_shots(&self.pools[agent]);
        self.score(theta, agent, &hist)
    }

    fn score(&self, theta: &[f64], agent: usize, hist: &SyndromeHistogram) -> Result<f64> {
        let dem = instantiate(&self.templates[agent], &self.bindings[agent], theta)?;
        Ok(hist.evaluate(&Decoder::new(&dem)?)?.reward())
    }
}

impl RewardEnv for SensorEnv {
    fn num_agents(&self) -> usize {
        self.templates.len()
    }

    fn num_params(&self) -> usize {
        self.num_params
    }

    fn sparsity(&self) -> &[Vec<bool>] {
        &self.sparsity
    }

    fn begin_epoch(&mut self, _epoch: usize) -> Result<()> {
        let rows = self.next_rows();
        self.epoch_data = self.pools.iter().map(|p| SyndromeHistogram::from_rows(p, rows.iter().copied())).collect();
        Ok(())
    }

    fn reward(&self, candidate: &[f64], agent: usize) -> Result<f64> {
        let hist = self
            .epoch_data
            .get(agent)
            .ok_or_else(|| Error::InvalidArgument("reward requested before begin_epoch".into()))?;
        self.score(candidate, agent, hist)
    }
}

/// Analytic toy: `R_a(p) = −Σ_{j ∈ S_a} (p_j − p*_j)²`.
#[derive(Debug, Clone)]
pub struct QuadraticEnv {
    pub optimum: Vec<f64>,
    pub sparsity: Vec<Vec<bool>>,
}

impl QuadraticEnv {
    pub fn new(optimum: Vec<f64>, sparsity: Vec<Vec<bool>>) -> Result<Self> {
        if sparsity.is_empty() || sparsity.iter().any(|r| r.len() != optimum.len()) {
            return Err(Error::Dimension("sparsity rows must match the optimum length".into()));
        }
        Ok(QuadraticEnv { optimum, sparsity })
    }

    /// Expected total reward under `policy`.
    pub fn expected_reward(&self, policy: &Policy) -> f64 {
        let sigma = policy.sigma();
        self.sparsity
            .iter()
            .map(|mask| {
                (0..self.optimum.len())
                    .filter(|&j| mask[j])
                    .map(|j| -((policy.mu[j] - self.optimum[j]).powi(2) + sigma[j] * sigma[j]))
                    .sum::<f64>()
            })
            .sum()
    }
}

impl RewardEnv for QuadraticEnv {
    fn num_agents(&self) -> usize {
        self.sparsity.len()
    }

    fn num_params(&self) -> usize {
        self.optimum.len()
    }

    fn sparsity(&self) -> &[Vec<bool>] {
        &self.sparsity
    }

    fn begin_epoch(&mut self, _epoch: usize) -> Result<()> {
        Ok(())
    }

    fn reward(&self, candidate: &[f64], agent: usize) -> Result<f64> {
        let mask = self.sparsity.get(agent).ok_or_else(|| Error::InvalidArgument(format!("no agent {agent}")))?;
        Ok(-candidate.iter().zip(&self.optimum).zip(mask).filter(|(_, &m)| m).map(|((p, o), _)| (p - o).powi(2)).sum::<f64>())
    }
}

/// Serialises `theta` as `param <index> <class key> <value>` lines.
pub fn write_params(param: &Parametrization, theta: &[f64]) -> Result<String> {
    if theta.len() != param.num_params() {
        return Err(Error::Dimension(format!("{} values for {} parameters", theta.len(), param.num_params())));
    }
    let mut out = String::new();
    for (j, (key, v)) in param.classes().iter().zip(theta).enumerate() {
        writeln!(out, "param {j} {key} {}", fmt_f64(*v)).expect("writing to a string");
    }
    Ok(out)
}

/// Parses a parameter file, checking indices and keys against `param`.
pub fn read_params(text: &str, param: &Parametrization) -> Result<Vec<f64>> {
    let mut theta = vec![f64::NAN; param.num_params()];
    let mut seen = vec![false; param.num_params()];
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 || f[0] != "param" {
            return Err(Error::parse(ln + 1, "expected `param <index> <key> <value>`"));
        }
        let j: usize = f[1].parse().map_err(|_| Error::parse(ln + 1, "bad parameter index"))?;
        let key: ClassKey = f[2].parse().map_err(|e| Error::parse(ln + 1, e))?;
        let v: f64 = f[3].parse().map_err(|_| Error::parse(ln + 1, "bad parameter value"))?;
        if j >= theta.len() || param.classes()[j] != key {
            return Err(Error::Model(format!("line {}: parameter {j} {key} is not in this parametrization", ln + 1)));
        }
        if seen[j] {
            return Err(Error::parse(ln + 1, format!("parameter {j} given twice")));
        }
        if !v.is_finite() {
            return Err(Error::Numerical(format!("parameter {j} is not finite")));
        }
        seen[j] = true;
        theta[j] = v;
    }
    if let Some(j) = seen.iter().position(|s| !s) {
        return Err(Error::Model(format!("parameter {j} missing from file")));
    }
    Ok(theta)
}

/// Training history CSV with one row per epoch.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,mean_reward,min_reward,max_reward,cos_to_seed,mean_sigma\n");
    for h in history {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            h.epoch,
            fmt_f64(h.mean_reward),
            fmt_f64(h.min_reward),
            fmt_f64(h.max_reward),
            fmt_f64(h.cos_to_seed),
            fmt_f64(h.mean_sigma)
        )
        .expect("writing to a string");
    }
    out
}

/// First epoch whose mean reward reaches `fraction` of the final reward,
/// taken as the average of the last `tail` epochs. `None` when the history
/// is empty or the final reward is not positive.
pub fn epochs_to_fraction(history: &[EpochRecord], fraction: f64, tail: usize) -> Option<usize> {
    if history.is_empty() {
        return None;
    }
    let tail = tail.clamp(1, history.len());
    let last = history[history.len() - tail..].iter().map(|h| h.mean_reward).sum::<f64>() / tail as f64;
    if last <= 0.0 {
        return None;
    }
    history.iter().position(|h| h.mean_reward >= fraction * last)
}
