//! Non-learning reference policies and rollout-based average-cost estimates.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::env::{Env, Exogenous, NetworkState};
use crate::Result;

/// A deterministic Markov policy acting on the raw network state.
pub trait StatePolicy {
    fn select(&self, state: &NetworkState) -> usize;
}

impl<F: Fn(&NetworkState) -> usize> StatePolicy for F {
    fn select(&self, state: &NetworkState) -> usize {
        self(state)
    }
}

/// Index of the largest weight, lowest index on ties.
pub fn argmax_first<I: IntoIterator<Item = f64>>(weights: I) -> usize {
    let mut best = 0;
    let mut best_w = f64::NEG_INFINITY;
    for (k, w) in weights.into_iter().enumerate() {
        if w > best_w {
            best = k;
            best_w = w;
        }
    }
    best
}

/// `argmax_k q_k * y_k`.
pub fn maxweight_action(state: &NetworkState) -> usize {
    let mut best = 0;
    let mut best_w = 0u128;
    for (k, (&q, &y)) in state.q.iter().zip(&state.y).enumerate() {
        let w = u128::from(q) * u128::from(y);
        if w > best_w {
            best = k;
            best_w = w;
        }
    }
    best
}

/// `argmin_k q_k`.
pub fn shortest_queue_action(state: &NetworkState) -> usize {
    let mut best = 0;
    for (k, &q) in state.q.iter().enumerate() {
        if q < state.q[best] {
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MaxWeight;

impl StatePolicy for MaxWeight {
    fn select(&self, state: &NetworkState) -> usize {
        maxweight_action(state)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ShortestQueue;

impl StatePolicy for ShortestQueue {
    fn select(&self, state: &NetworkState) -> usize {
        shortest_queue_action(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    pub avg_cost: f64,
    pub trajectory_costs: Vec<f64>,
    pub steps: u64,
    pub overflowed: bool,
}

/// Time-averaged cost `(1/T) sum_{t<T} c(s_t)` of one trajectory from the
/// empty state.
pub fn trajectory_cost(
    exogenous: &Exogenous,
    policy: &dyn StatePolicy,
    traj_len: u64,
    seed: u64,
) -> Result<(f64, bool)> {
    let mut env = Env::new(exogenous.clone(), seed);
    let mut total = 0.0;
    for _ in 0..traj_len {
        total += env.current_cost();
        let action = policy.select(env.state());
        env.step(action)?;
    }
    let avg = if traj_len == 0 { 0.0 } else { total / traj_len as f64 };
    Ok((avg, env.overflowed()))
}

/// Runs one trajectory per seed and averages the per-trajectory costs.
pub fn estimate_avg_cost(
    exogenous: &Exogenous,
    policy: &dyn StatePolicy,
    traj_len: u64,
    seeds: &[u64],
) -> Result<RolloutStats> {
    let mut trajectory_costs = Vec::with_capacity(seeds.len());
    let mut overflowed = false;
    for &seed in seeds {
        let (avg, over) = trajectory_cost(exogenous, policy, traj_len, seed)?;
        trajectory_costs.push(avg);
        overflowed |= over;
    }
    let avg_cost = if seeds.is_empty() { 0.0 } else { trajectory_costs.iter().sum::<f64>() / seeds.len() as f64 };
    Ok(RolloutStats { avg_cost, trajectory_costs, steps: traj_len * seeds.len() as u64, overflowed })
}
