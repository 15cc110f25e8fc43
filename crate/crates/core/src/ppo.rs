//! Proximal policy optimization for continuing queueing tasks.
//!
//! Environments never terminate: every batch continues from where the
//! previous one stopped and the critic bootstraps the tail of each segment.
//! Rewards are negative costs, scaled per environment so that values of
//! different environments are comparable.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::env::{encode_into, Encoding, Env, EnvParams};
use crate::nn::{log_softmax, Adam, Network};
use crate::policy::{sample_from_logits, CriticNet, MlpConfig, ObsBatch, PolicyKind, PolicyNet, StnConfig};
use crate::rng::{self, derive_seed, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub learning_rate: f64,
    /// Defaults to `learning_rate` when unset.
    pub critic_learning_rate: Option<f64>,
    /// Rollout length per environment between updates.
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub epochs_per_batch: usize,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub value_coef: f64,
    /// Applied to the policy and critic gradients separately.
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    /// Environment steps summed over all training environments.
    pub total_steps: u64,
    pub moving_avg_window: usize,
    /// Batches between checkpoint callbacks; 0 disables them.
    pub checkpoint_interval: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            learning_rate: 3e-3,
            critic_learning_rate: None,
            batch_size: 2000,
            minibatch_size: 100,
            epochs_per_batch: 3,
            gae_lambda: 0.95,
            clip_epsilon: 0.1,
            entropy_coef: 0.01,
            gamma: 0.99,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            normalize_advantages: true,
            total_steps: 1_000_000,
            moving_avg_window: 5000,
            checkpoint_interval: 0,
        }
    }
}

impl PpoConfig {
    pub fn for_kind(kind: PolicyKind) -> Self {
        PpoConfig { learning_rate: kind.default_learning_rate(), ..PpoConfig::default() }
    }

    pub fn validate(&self, num_envs: usize) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidParameter(msg.into()));
        if !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return fail("gae_lambda must lie in (0, 1]");
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return fail("clip_epsilon must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail("gamma must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.minibatch_size == 0 || self.epochs_per_batch == 0 {
            return fail("batch, minibatch and epoch counts must be positive");
        }
        if !(self.batch_size * num_envs).is_multiple_of(self.minibatch_size) {
            return fail("minibatch size must divide the batch size");
        }
        if self.learning_rate <= 0.0 || self.moving_avg_window == 0 {
            return fail("learning rate and moving-average window must be positive");
        }
        Ok(())
    }

    pub fn critic_lr(&self) -> f64 {
        self.critic_learning_rate.unwrap_or(self.learning_rate)
    }
}

/// Fixed-window moving average of per-step costs.
#[derive(Debug, Clone)]
pub struct MovingAverage {
    window: Vec<f64>,
    next: usize,
    filled: usize,
    sum: f64,
}

impl MovingAverage {
    pub fn new(size: usize) -> Self {
        MovingAverage { window: vec![0.0; size], next: 0, filled: 0, sum: 0.0 }
    }

    pub fn push(&mut self, value: f64) {
        if self.filled == self.window.len() {
            self.sum -= self.window[self.next];
        } else {
            self.filled += 1;
        }
        self.window[self.next] = value;
        self.sum += value;
        self.next = (self.next + 1) % self.window.len();
    }

    pub fn value(&self) -> f64 {
        if self.filled == 0 {
            0.0
        } else {
            self.sum / self.filled as f64
        }
    }

    pub fn is_full(&self) -> bool {
        self.filled == self.window.len()
    }
}

/// One training environment and the streams it owns.
#[derive(Debug, Clone)]
pub struct Worker {
    pub env_id: usize,
    pub params: EnvParams,
    pub env: Env,
    action_rng: Stream,
    reward_scale: f64,
    pub moving_avg: MovingAverage,
    pub steps: u64,
}

impl Worker {
    pub fn new(
        env_id: usize,
        params: EnvParams,
        env_seed: u64,
        action_seed: u64,
        reward_scale: f64,
        window: usize,
    ) -> Result<Self> {
        let env = Env::from_params(&params, env_seed)?;
        Ok(Worker {
            env_id,
            params,
            env,
            action_rng: rng::stream(action_seed),
            reward_scale,
            moving_avg: MovingAverage::new(window),
            steps: 0,
        })
    }

    fn observe(&self, encoding: Encoding, out: &mut Vec<f64>) -> Result<()> {
        encode_into(self.env.state(), &self.params, encoding, out)
    }
}

/// Trajectory segments of all workers, stored environment-major: record
/// `e * steps_per_env + t` is step `t` of worker `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub num_envs: usize,
    pub steps_per_env: usize,
    pub observations: ObsBatch,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub costs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub env_ids: Vec<usize>,
    /// Critic value of each worker's state after its last recorded step.
    pub bootstrap_values: Vec<f64>,
    pub overflowed: bool,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Runs every worker for `steps_per_env` steps with the stochastic policy.
/// Policy and critic evaluations are batched across workers at each step.
pub fn collect_rollout(
    workers: &mut [Worker],
    policy: &PolicyNet,
    critic: &CriticNet,
    steps_per_env: usize,
) -> Result<RolloutBatch> {
    let policy = &policy.frozen();
    let num_envs = workers.len();
    let (k, width) = (policy.num_queues, policy.width);
    let obs_len = k * width;
    let total = num_envs * steps_per_env;
    let mut obs_data = vec![0.0; total * obs_len];
    let mut actions = vec![0; total];
    let mut log_probs = vec![0.0; total];
    let mut costs = vec![0.0; total];
    let mut rewards = vec![0.0; total];
    let mut values = vec![0.0; total];
    let mut step_obs = ObsBatch::new(k, width);
    for t in 0..steps_per_env {
        step_obs.data.clear();
        for w in workers.iter() {
            w.observe(policy.encoding, &mut step_obs.data)?;
        }
        step_obs.rows = num_envs;
        let logits = policy.logits(&step_obs)?;
        let step_values = critic.values(&step_obs)?;
        for (e, w) in workers.iter_mut().enumerate() {
            let idx = e * steps_per_env + t;
            obs_data[idx * obs_len..(idx + 1) * obs_len].copy_from_slice(step_obs.observation(e));
            let (action, logp) = sample_from_logits(&logits[e * k..(e + 1) * k], &mut w.action_rng);
            let cost = w.env.step(action)?;
            w.moving_avg.push(cost);
            w.steps += 1;
            actions[idx] = action;
            log_probs[idx] = logp;
            costs[idx] = cost;
            rewards[idx] = -cost * w.reward_scale;
            values[idx] = step_values[e];
        }
    }
    step_obs.data.clear();
    for w in workers.iter() {
        w.observe(policy.encoding, &mut step_obs.data)?;
    }
    step_obs.rows = num_envs;
    let bootstrap_values = critic.values(&step_obs)?;
    Ok(RolloutBatch {
        num_envs,
        steps_per_env,
        observations: ObsBatch { rows: total, num_queues: k, width, data: obs_data },
        actions,
        log_probs,
        costs,
        rewards,
        values,
        dones: vec![false; total],
        env_ids: workers.iter().flat_map(|w| core::iter::repeat_n(w.env_id, steps_per_env)).collect(),
        bootstrap_values,
        overflowed: workers.iter().any(|w| w.env.overflowed()),
    })
}

/// Generalized advantage estimates over one contiguous segment:
/// `A_t = delta_t + gamma * lambda * A_{t+1}` with
/// `delta_t = r_t + gamma * V(s_{t+1}) - V(s_t)`. A done flag cuts the
/// bootstrap. Returns `(advantages, value_targets)`.
pub fn gae_segment(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, targets)
}

/// Per-worker GAE over a whole batch.
pub fn compute_gae(batch: &RolloutBatch, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let t_len = batch.steps_per_env;
    let mut advantages = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    for e in 0..batch.num_envs {
        let range = e * t_len..(e + 1) * t_len;
        let (a, v) = gae_segment(
            &batch.rewards[range.clone()],
            &batch.values[range.clone()],
            &batch.dones[range],
            batch.bootstrap_values[e],
            gamma,
            lambda,
        );
        advantages.extend(a);
        targets.extend(v);
    }
    (advantages, targets)
}

/// Shifts and scales to mean 0, standard deviation 1 (population).
pub fn normalize(values: &mut [f64]) {
    let n = values.len();
    if n < 2 {
        return;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = libm::sqrt(var);
    if std > 0.0 {
        values.iter_mut().for_each(|v| *v = (*v - mean) / std);
    } else {
        values.iter_mut().for_each(|v| *v -= mean);
    }
    // Second pass removes the rounding residue of the first.
    let residual = values.iter().sum::<f64>() / n as f64;
    values.iter_mut().for_each(|v| *v -= residual);
}

/// Training samples for one loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub observations: ObsBatch,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossDiagnostics {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
}

/// Per-sample clipped surrogate `min(u A, clip(u, 1-eps, 1+eps) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage;
    unclipped.min(clipped)
}

struct LossTerms {
    diagnostics: LossDiagnostics,
    grad_logits: Vec<f64>,
    grad_values: Vec<f64>,
}

/// `-mean(surrogate) + c_v mean((V - target)^2) - c_e mean(entropy)` and its
/// gradient with respect to logits and values.
fn loss_terms(logits: &[f64], values: &[f64], mb: &Minibatch, config: &PpoConfig) -> LossTerms {
    let m = mb.actions.len();
    let k = logits.len() / m.max(1);
    let inv_m = 1.0 / m as f64;
    let eps = config.clip_epsilon;
    let mut grad_logits = vec![0.0; logits.len()];
    let mut grad_values = vec![0.0; m];
    let (mut surrogate_sum, mut value_sum, mut entropy_sum, mut ratio_sum) = (0.0, 0.0, 0.0, 0.0);
    let mut clipped = 0usize;
    for i in 0..m {
        let z = &logits[i * k..(i + 1) * k];
        let logp = log_softmax(z);
        let probs: Vec<f64> = logp.iter().map(|&lp| libm::exp(lp)).collect();
        let entropy = -probs.iter().zip(&logp).map(|(p, lp)| p * lp).sum::<f64>();
        let a = mb.actions[i];
        let adv = mb.advantages[i];
        let ratio = libm::exp(logp[a] - mb.old_log_probs[i]);
        let unclipped = ratio * adv;
        let clipped_term = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        surrogate_sum += unclipped.min(clipped_term);
        ratio_sum += ratio;
        entropy_sum += entropy;
        if (ratio - 1.0).abs() > eps {
            clipped += 1;
        }
        // d surrogate / d ratio is A on the unclipped branch and 0 otherwise.
        let dsur_dratio = if unclipped <= clipped_term { adv } else { 0.0 };
        let g = &mut grad_logits[i * k..(i + 1) * k];
        for j in 0..k {
            let indicator = if j == a { 1.0 } else { 0.0 };
            let d_surrogate = dsur_dratio * ratio * (indicator - probs[j]);
            let d_entropy = -probs[j] * (logp[j] + entropy);
            g[j] = -inv_m * d_surrogate - config.entropy_coef * inv_m * d_entropy;
        }
        let err = values[i] - mb.value_targets[i];
        value_sum += err * err;
        grad_values[i] = config.value_coef * 2.0 * err * inv_m;
    }
    let policy_loss = -surrogate_sum * inv_m;
    let value_loss = value_sum * inv_m;
    let entropy = entropy_sum * inv_m;
    LossTerms {
        diagnostics: LossDiagnostics {
            loss: policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy,
            policy_loss,
            value_loss,
            entropy,
            mean_ratio: ratio_sum * inv_m,
            clip_fraction: clipped as f64 * inv_m,
        },
        grad_logits,
        grad_values,
    }
}

fn check_minibatch(mb: &Minibatch) -> Result<()> {
    let m = mb.actions.len();
    for len in [mb.observations.rows, mb.old_log_probs.len(), mb.advantages.len(), mb.value_targets.len()] {
        if len != m {
            return Err(Error::ShapeMismatch { expected: m, actual: len });
        }
    }
    if m == 0 {
        return Err(Error::InvalidParameter("empty minibatch".into()));
    }
    Ok(())
}

/// Loss value without touching gradient buffers.
pub fn ppo_loss(policy: &PolicyNet, critic: &CriticNet, mb: &Minibatch, config: &PpoConfig) -> Result<LossDiagnostics> {
    check_minibatch(mb)?;
    let logits = policy.logits(&mb.observations)?;
    let values = critic.values(&mb.observations)?;
    let terms = loss_terms(&logits, &values, mb, config);
    if !terms.diagnostics.loss.is_finite() {
        return Err(Error::NonFinite(alloc::format!("ppo loss {:?}", terms.diagnostics)));
    }
    Ok(terms.diagnostics)
}

/// Loss value plus accumulated gradients in both networks.
pub fn ppo_loss_backward(
    policy: &mut PolicyNet,
    critic: &mut CriticNet,
    mb: &Minibatch,
    config: &PpoConfig,
) -> Result<LossDiagnostics> {
    check_minibatch(mb)?;
    let logits = policy.logits_train(&mb.observations)?;
    let values = critic.values_train(&mb.observations)?;
    let terms = loss_terms(&logits, &values, mb, config);
    if !terms.diagnostics.loss.is_finite() {
        return Err(Error::NonFinite(alloc::format!("ppo loss {:?}", terms.diagnostics)));
    }
    policy.backward_logits(&terms.grad_logits)?;
    critic.backward_values(&terms.grad_values)?;
    Ok(terms.diagnostics)
}

/// Scales a network's gradient so its norm is at most `max_norm`. Returns
/// the norm before scaling.
pub fn clip_grad_norm(net: &mut Network, max_norm: f64) -> f64 {
    let norm = libm::sqrt(net.grad_sq_norm());
    if max_norm > 0.0 && norm > max_norm {
        net.scale_grads(max_norm / (norm + 1e-12));
    }
    norm
}

pub struct Optimizers {
    pub policy: Adam,
    pub critic: Adam,
}

impl Optimizers {
    pub fn new(policy: &PolicyNet, critic: &CriticNet, config: &PpoConfig) -> Self {
        Optimizers {
            policy: Adam::new(config.learning_rate, policy.net.param_count()),
            critic: Adam::new(config.critic_lr(), critic.net.param_count()),
        }
    }
}

/// Runs `epochs_per_batch` passes of shuffled minibatch updates over a
/// batch. Returns the mean diagnostics over all minibatches.
pub fn update(
    policy: &mut PolicyNet,
    critic: &mut CriticNet,
    optimizers: &mut Optimizers,
    batch: &RolloutBatch,
    config: &PpoConfig,
    shuffle_rng: &mut Stream,
) -> Result<LossDiagnostics> {
    let (mut advantages, targets) = compute_gae(batch, config.gamma, config.gae_lambda);
    if config.normalize_advantages {
        normalize(&mut advantages);
    }
    let n = batch.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut sum = LossDiagnostics::default();
    let mut count = 0usize;
    for _ in 0..config.epochs_per_batch {
        order.shuffle(shuffle_rng);
        for chunk in order.chunks(config.minibatch_size) {
            let mb = Minibatch {
                observations: batch.observations.select(chunk),
                actions: chunk.iter().map(|&i| batch.actions[i]).collect(),
                old_log_probs: chunk.iter().map(|&i| batch.log_probs[i]).collect(),
                advantages: chunk.iter().map(|&i| advantages[i]).collect(),
                value_targets: chunk.iter().map(|&i| targets[i]).collect(),
            };
            policy.net.zero_grad();
            critic.net.zero_grad();
            let diag = ppo_loss_backward(policy, critic, &mb, config)?;
            clip_grad_norm(&mut policy.net, config.max_grad_norm);
            clip_grad_norm(&mut critic.net, config.max_grad_norm);
            optimizers.policy.step_network(&mut policy.net)?;
            optimizers.critic.step_network(&mut critic.net)?;
            if !(policy.net.is_finite() && critic.net.is_finite()) {
                return Err(Error::NonFinite("network parameters after update".into()));
            }
            sum.loss += diag.loss;
            sum.policy_loss += diag.policy_loss;
            sum.value_loss += diag.value_loss;
            sum.entropy += diag.entropy;
            sum.mean_ratio += diag.mean_ratio;
            sum.clip_fraction += diag.clip_fraction;
            count += 1;
        }
    }
    let c = count.max(1) as f64;
    Ok(LossDiagnostics {
        loss: sum.loss / c,
        policy_loss: sum.policy_loss / c,
        value_loss: sum.value_loss / c,
        entropy: sum.entropy / c,
        mean_ratio: sum.mean_ratio / c,
        clip_fraction: sum.clip_fraction / c,
    })
}

/// A training environment and the cost scale used to normalize its rewards
/// (typically the baseline policy's average cost).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainEnv {
    pub env_id: usize,
    pub params: EnvParams,
    pub cost_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub stn: StnConfig,
    pub mlp: MlpConfig,
    pub critic: MlpConfig,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { stn: StnConfig::default(), mlp: MlpConfig::default(), critic: MlpConfig::critic() }
    }
}

/// One row per environment per batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    /// Steps taken in this environment so far.
    pub step: u64,
    pub env_id: usize,
    pub moving_avg_cost: f64,
    pub loss: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: PolicyNet,
    pub critic: CriticNet,
    pub log: Vec<TrainLogRow>,
    /// Set when training stopped early on a non-finite loss or parameter;
    /// the networks are then the last finite ones.
    pub diverged: Option<String>,
    pub steps: u64,
}

pub fn build_networks(
    kind: PolicyKind,
    num_queues: usize,
    encoding: Encoding,
    networks: &NetworkConfig,
    seed: u64,
) -> Result<(PolicyNet, CriticNet)> {
    let mut policy_rng = rng::stream(derive_seed(seed, 0));
    let mut critic_rng = rng::stream(derive_seed(seed, 1));
    let policy = match kind {
        PolicyKind::Stn => PolicyNet::stn(num_queues, encoding, &networks.stn, &mut policy_rng)?,
        PolicyKind::Mlp => PolicyNet::mlp(num_queues, encoding, &networks.mlp, &mut policy_rng)?,
    };
    let critic = CriticNet::new(num_queues, encoding, &networks.critic, &mut critic_rng)?;
    Ok((policy, critic))
}

/// Networks handed to the checkpoint callback.
#[derive(Debug, Clone, Copy)]
pub struct Checkpoint<'a> {
    pub batch: u64,
    pub steps: u64,
    pub policy: &'a PolicyNet,
    pub critic: &'a CriticNet,
}

/// Trains one policy on all `envs` simultaneously.
pub fn train(
    envs: &[TrainEnv],
    kind: PolicyKind,
    encoding: Encoding,
    networks: &NetworkConfig,
    config: &PpoConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    train_with_checkpoints(envs, kind, encoding, networks, config, seed, &mut |_| Ok(()))
}

/// [`train`], calling `on_checkpoint` every `config.checkpoint_interval`
/// batches.
pub fn train_with_checkpoints(
    envs: &[TrainEnv],
    kind: PolicyKind,
    encoding: Encoding,
    networks: &NetworkConfig,
    config: &PpoConfig,
    seed: u64,
    on_checkpoint: &mut dyn FnMut(Checkpoint<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    if envs.is_empty() {
        return Err(Error::InvalidParameter("training needs at least one environment".into()));
    }
    config.validate(envs.len())?;
    let num_queues = envs[0].params.num_queues;
    if envs.iter().any(|e| e.params.num_queues != num_queues || !encoding.supports(e.params.kind)) {
        return Err(Error::InvalidParameter("training environments must share K and fit the encoding".into()));
    }
    let (mut policy, mut critic) = build_networks(kind, num_queues, encoding, networks, seed)?;
    let mut optimizers = Optimizers::new(&policy, &critic, config);
    let mut shuffle_rng = rng::stream(derive_seed(seed, 2));
    let mut workers = envs
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let scale = if e.cost_scale > 0.0 { e.cost_scale } else { 1.0 };
            Worker::new(
                e.env_id,
                e.params.clone(),
                derive_seed(e.params.seed, derive_seed(seed, 1000 + i as u64)),
                derive_seed(seed, 2000 + i as u64),
                (1.0 - config.gamma).max(1e-3) / scale,
                config.moving_avg_window,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let steps_per_batch = (config.batch_size * envs.len()) as u64;
    let num_batches = config.total_steps / steps_per_batch;
    let mut log = Vec::with_capacity(num_batches as usize * envs.len());
    let mut diverged = None;
    let mut steps = 0;
    for batch_index in 0..num_batches {
        let batch = collect_rollout(&mut workers, &policy, &critic, config.batch_size)?;
        steps += steps_per_batch;
        let snapshot = (policy.clone(), critic.clone());
        let diag = match update(&mut policy, &mut critic, &mut optimizers, &batch, config, &mut shuffle_rng) {
            Ok(diag) => diag,
            Err(Error::NonFinite(msg)) => {
                policy = snapshot.0;
                critic = snapshot.1;
                diverged = Some(msg);
                break;
            }
            Err(e) => return Err(e),
        };
        for w in &workers {
            log.push(TrainLogRow {
                step: w.steps,
                env_id: w.env_id,
                moving_avg_cost: w.moving_avg.value(),
                loss: diag.loss,
                clip_fraction: diag.clip_fraction,
                entropy: diag.entropy,
                learning_rate: config.learning_rate,
            });
        }
        let interval = config.checkpoint_interval;
        if interval > 0 && (batch_index + 1) % interval == 0 {
            on_checkpoint(Checkpoint { batch: batch_index + 1, steps, policy: &policy, critic: &critic })?;
        }
    }
    Ok(TrainOutcome { policy, critic, log, diverged, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gae_reduces_to_reward_to_go() {
        let (adv, targets) = gae_segment(&[1.0, 1.0], &[0.5, 0.5], &[false, false], 0.5, 1.0, 1.0);
        assert_eq!(adv, vec![2.0, 1.0]);
        assert_eq!(targets, vec![2.5, 1.5]);
    }

    #[test]
    fn gae_with_zero_lambda_is_td_error() {
        let rewards = [0.3, -1.0, 2.0];
        let values = [0.1, 0.4, -0.2];
        let (adv, _) = gae_segment(&rewards, &values, &[false; 3], 0.7, 0.9, 0.0);
        let next = [0.4, -0.2, 0.7];
        for t in 0..3 {
            assert!((adv[t] - (rewards[t] + 0.9 * next[t] - values[t])).abs() < 1e-15);
        }
    }

    #[test]
    fn done_flag_cuts_bootstrap() {
        let (adv, _) = gae_segment(&[1.0, 1.0], &[0.0, 0.0], &[true, false], 10.0, 1.0, 1.0);
        assert_eq!(adv[0], 1.0);
        assert_eq!(adv[1], 11.0);
    }

    #[test]
    fn clip_arithmetic() {
        assert_eq!(clipped_surrogate(1.5, 1.0, 0.1), 1.1);
        assert!((clipped_surrogate(0.5, -1.0, 0.1) + 0.9).abs() < 1e-15);
        assert_eq!(clipped_surrogate(1.0, 0.7, 0.1), 0.7);
    }

    #[test]
    fn normalization_gives_zero_mean_unit_std() {
        let mut v: Vec<f64> = (0..1000).map(|i| libm::sin(i as f64) * 50.0 + 3.0).collect();
        normalize(&mut v);
        let mean = v.iter().sum::<f64>() / 1000.0;
        let std = libm::sqrt(v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 1000.0);
        assert!(mean.abs() <= 1e-10);
        assert!((std - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn moving_average_window() {
        let mut ma = MovingAverage::new(3);
        for v in [1.0, 2.0, 3.0, 4.0] {
            ma.push(v);
        }
        assert_eq!(ma.value(), 3.0);
        assert!(ma.is_full());
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate(1).is_ok());
        assert!(PpoConfig { minibatch_size: 300, ..PpoConfig::default() }.validate(1).is_err());
        assert!(PpoConfig { clip_epsilon: 1.0, ..PpoConfig::default() }.validate(1).is_err());
        assert!(PpoConfig { gae_lambda: 0.0, ..PpoConfig::default() }.validate(1).is_err());
        assert_eq!(PpoConfig::for_kind(PolicyKind::Mlp).learning_rate, 3e-4);
    }
}
