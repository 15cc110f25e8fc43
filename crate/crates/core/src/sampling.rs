//! Random environment generation with a rollout-based stabilizability filter.
//!
//! Candidate `i` of a set is a pure function of `(kind, master_seed, i)`, so
//! candidates can be checked in any order (or in parallel) and merged by index.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{estimate_avg_cost, MaxWeight, ShortestQueue, StatePolicy};
use crate::env::{EnvKind, EnvParams};
use crate::rng::{self, derive_seed, uniform_open, Stream};
use crate::{Error, Result};

pub const SINGLE_HOP_QUEUES: usize = 4;
pub const SINGLE_HOP_RATE_MAX: f64 = 3.0;
pub const MULTI_PATH_QUEUES: usize = 8;
pub const MULTI_PATH_RATE_MAX: f64 = 1.0;

/// K = 4, every arrival and service rate i.i.d. Uniform(0, 3).
pub fn sample_singlehop_env(rng: &mut Stream) -> EnvParams {
    let arrival_rates = (0..SINGLE_HOP_QUEUES).map(|_| uniform_open(rng, 0.0, SINGLE_HOP_RATE_MAX)).collect();
    let service_rates = (0..SINGLE_HOP_QUEUES).map(|_| uniform_open(rng, 0.0, SINGLE_HOP_RATE_MAX)).collect();
    let seed = rng.gen();
    EnvParams { kind: EnvKind::SingleHop, num_queues: SINGLE_HOP_QUEUES, arrival_rates, service_rates, seed }
}

/// K = 8, service rates i.i.d. Uniform(0, 1), one arrival per step.
pub fn sample_multipath_env(rng: &mut Stream) -> EnvParams {
    let service_rates = (0..MULTI_PATH_QUEUES).map(|_| uniform_open(rng, 0.0, MULTI_PATH_RATE_MAX)).collect();
    let seed = rng.gen();
    EnvParams {
        kind: EnvKind::MultiPath,
        num_queues: MULTI_PATH_QUEUES,
        arrival_rates: Vec::new(),
        service_rates,
        seed,
    }
}

pub fn candidate(kind: EnvKind, master_seed: u64, index: u64) -> EnvParams {
    let mut rng = rng::stream(derive_seed(master_seed, index));
    match kind {
        EnvKind::SingleHop => sample_singlehop_env(&mut rng),
        EnvKind::MultiPath => sample_multipath_env(&mut rng),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    MaxWeight,
    ShortestQueue,
}

impl Baseline {
    pub fn for_kind(kind: EnvKind) -> Self {
        match kind {
            EnvKind::SingleHop => Baseline::MaxWeight,
            EnvKind::MultiPath => Baseline::ShortestQueue,
        }
    }

    pub fn policy(self) -> &'static dyn StatePolicy {
        match self {
            Baseline::MaxWeight => &MaxWeight,
            Baseline::ShortestQueue => &ShortestQueue,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Baseline::MaxWeight => "max_weight",
            Baseline::ShortestQueue => "shortest_queue",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckConfig {
    pub num_traj: usize,
    pub traj_len: u64,
    pub threshold: f64,
    pub max_rejections: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { num_traj: 3, traj_len: 50_000, threshold: 200.0, max_rejections: 1000 }
    }
}

/// Seeds of the check trajectories, derived from the environment seed.
pub fn check_seeds(params: &EnvParams, num_traj: usize) -> Vec<u64> {
    (0..num_traj as u64).map(|i| derive_seed(params.seed, i)).collect()
}

/// Returns whether the baseline keeps the time-averaged cost at or below the
/// threshold, along with that cost `J(pi_0, E)`.
pub fn stabilizability_check(params: &EnvParams, baseline: Baseline, config: &CheckConfig) -> Result<(bool, f64)> {
    let stats = estimate_avg_cost(
        &params.exogenous()?,
        baseline.policy(),
        config.traj_len,
        &check_seeds(params, config.num_traj),
    )?;
    Ok((stats.avg_cost <= config.threshold && !stats.overflowed, stats.avg_cost))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledEnv {
    pub id: usize,
    pub params: EnvParams,
    pub baseline_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSet {
    pub kind: EnvKind,
    pub master_seed: u64,
    pub envs: Vec<SampledEnv>,
}

impl EnvSet {
    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }
}

/// Accumulates checked candidates in index order and decides when a set is
/// complete. Shared by the sequential builder here and parallel drivers.
#[derive(Debug)]
pub struct SetBuilder {
    set: EnvSet,
    count: usize,
    consecutive_rejections: usize,
    max_rejections: usize,
}

impl SetBuilder {
    pub fn new(kind: EnvKind, count: usize, master_seed: u64, config: &CheckConfig) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidParameter("an environment set needs at least one member".into()));
        }
        Ok(SetBuilder {
            set: EnvSet { kind, master_seed, envs: Vec::with_capacity(count) },
            count,
            consecutive_rejections: 0,
            max_rejections: config.max_rejections,
        })
    }

    pub fn is_complete(&self) -> bool {
        self.set.envs.len() == self.count
    }

    /// Feeds the next candidate in index order. Returns `Ok(true)` once the
    /// set is complete.
    pub fn push(&mut self, params: EnvParams, accepted: bool, baseline_cost: f64) -> Result<bool> {
        if self.is_complete() {
            return Ok(true);
        }
        if accepted {
            self.consecutive_rejections = 0;
            let id = self.set.envs.len();
            self.set.envs.push(SampledEnv { id, params, baseline_cost });
        } else {
            self.consecutive_rejections += 1;
            if self.consecutive_rejections >= self.max_rejections {
                return Err(Error::SamplingExhausted { rejections: self.consecutive_rejections });
            }
        }
        Ok(self.is_complete())
    }

    pub fn finish(self) -> EnvSet {
        self.set
    }
}

/// Resamples candidates until `count` of them pass the stabilizability check.
pub fn build_env_set(kind: EnvKind, count: usize, master_seed: u64, config: &CheckConfig) -> Result<EnvSet> {
    let baseline = Baseline::for_kind(kind);
    let mut builder = SetBuilder::new(kind, count, master_seed, config)?;
    let mut index = 0;
    loop {
        let params = candidate(kind, master_seed, index);
        let (accepted, cost) = stabilizability_check(&params, baseline, config)?;
        if builder.push(params, accepted, cost)? {
            return Ok(builder.finish());
        }
        index += 1;
    }
}
