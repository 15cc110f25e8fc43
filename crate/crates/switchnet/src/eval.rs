//! Deterministic (argmax) evaluation of trained policies.

use anyhow::Result;
use serde::{Deserialize, Serialize};
use switchnet_core::baselines::estimate_avg_cost;
use switchnet_core::env::QUEUE_CAP;
use switchnet_core::policy::{GreedyPolicy, PolicyKind, PolicyNet};
use switchnet_core::rng::derive_seed;
use switchnet_core::sampling::SampledEnv;

use crate::config::EvalConfig;
use crate::metrics::EvalRecord;

/// Average cost of one evaluation trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub env_id: usize,
    pub policy: PolicyKind,
    pub seed: u64,
    pub avg_cost: f64,
}

/// Trajectory seeds for one environment. They depend only on the
/// evaluation seed and the environment, so every architecture sees the same
/// arrival and capacity sequences.
pub fn eval_seeds(eval_seed: u64, env: &SampledEnv, num_traj: usize) -> Vec<u64> {
    let base = derive_seed(eval_seed, env.params.seed);
    (0..num_traj as u64).map(|i| derive_seed(base, i)).collect()
}

/// Largest reportable cost: every queue at the saturation bound.
pub fn cost_cap(num_queues: usize) -> f64 {
    num_queues as f64 * QUEUE_CAP as f64
}

pub fn evaluate(
    policy: &PolicyNet,
    env: &SampledEnv,
    eval: &EvalConfig,
    eval_seed: u64,
    in_train_split: bool,
) -> Result<(EvalRecord, Vec<TrajectoryRow>)> {
    let greedy = GreedyPolicy::new(policy, &env.params)?;
    let seeds = eval_seeds(eval_seed, env, eval.num_traj);
    let stats = estimate_avg_cost(&env.params.exogenous()?, &greedy, eval.traj_len, &seeds)?;
    let j = if stats.avg_cost.is_finite() {
        stats.avg_cost.min(cost_cap(env.params.num_queues))
    } else {
        cost_cap(env.params.num_queues)
    };
    let j0 = normalized(j, env.baseline_cost);
    let record =
        EvalRecord { env_id: env.id, policy: policy.kind, j, j0, in_train_split, overflowed: stats.overflowed };
    let rows = seeds
        .iter()
        .zip(&stats.trajectory_costs)
        .map(|(&seed, &avg_cost)| TrajectoryRow { env_id: env.id, policy: policy.kind, seed, avg_cost })
        .collect();
    Ok((record, rows))
}

/// `J / J_baseline`; an idle environment (zero baseline cost) maps a zero
/// cost to 1.
pub fn normalized(j: f64, baseline: f64) -> f64 {
    if baseline > 0.0 {
        j / baseline
    } else if j == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}
