//! Discrete-time single-hop scheduling and multi-path routing simulators.
//!
//! Both problems share the same state: `K` queues, each with a length `q_k`
//! and a capacity `y_k` that is sampled at the start of a step and visible to
//! the controller before it acts. In the single-hop problem the controller
//! picks one queue to serve and every queue receives its own arrivals; in the
//! multi-path problem every server drains its queue and the controller picks
//! where the single arriving packet goes.
//!
//! Actions are 0-based queue indices throughout the crate.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rng::{self, CountDist, Stream};
use crate::{Error, Result};

/// Saturation bound for queue lengths. Reaching it marks a run as overflowed.
pub const QUEUE_CAP: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    SingleHop,
    MultiPath,
}

impl EnvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::SingleHop => "single_hop",
            EnvKind::MultiPath => "multi_path",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_hop" | "singlehop" | "sh" => Ok(EnvKind::SingleHop),
            "multi_path" | "multipath" | "mp" => Ok(EnvKind::MultiPath),
            other => Err(Error::InvalidParameter(alloc::format!("unknown environment kind `{other}`"))),
        }
    }
}

/// Arrival and service rates of one environment instance. Both are Poisson
/// means in packets per step; multi-path environments carry no arrival rates
/// because exactly one packet arrives every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub kind: EnvKind,
    #[serde(rename = "K")]
    pub num_queues: usize,
    #[serde(rename = "lambda", default)]
    pub arrival_rates: Vec<f64>,
    #[serde(rename = "mu")]
    pub service_rates: Vec<f64>,
    pub seed: u64,
}

impl EnvParams {
    pub fn single_hop(arrival_rates: Vec<f64>, service_rates: Vec<f64>, seed: u64) -> Result<Self> {
        let params =
            EnvParams { kind: EnvKind::SingleHop, num_queues: service_rates.len(), arrival_rates, service_rates, seed };
        params.validate()?;
        Ok(params)
    }

    pub fn multi_path(service_rates: Vec<f64>, seed: u64) -> Result<Self> {
        let params = EnvParams {
            kind: EnvKind::MultiPath,
            num_queues: service_rates.len(),
            arrival_rates: Vec::new(),
            service_rates,
            seed,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_queues;
        if k == 0 {
            return Err(Error::InvalidParameter("an environment needs at least one queue".into()));
        }
        if self.service_rates.len() != k {
            return Err(Error::ShapeMismatch { expected: k, actual: self.service_rates.len() });
        }
        match self.kind {
            EnvKind::SingleHop if self.arrival_rates.len() != k => {
                return Err(Error::ShapeMismatch { expected: k, actual: self.arrival_rates.len() });
            }
            EnvKind::MultiPath if !self.arrival_rates.is_empty() => {
                return Err(Error::InvalidParameter(
                    "multi-path environments have deterministic arrivals and take no lambda".into(),
                ));
            }
            _ => {}
        }
        for &rate in self.arrival_rates.iter().chain(&self.service_rates) {
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(Error::InvalidParameter(alloc::format!("rates must be non-negative, got {rate}")));
            }
        }
        Ok(())
    }

    /// Arrival rate of queue `k`; zero for multi-path environments.
    pub fn arrival_rate(&self, k: usize) -> f64 {
        self.arrival_rates.get(k).copied().unwrap_or(0.0)
    }

    pub fn exogenous(&self) -> Result<Exogenous> {
        self.validate()?;
        let capacities = self.service_rates.iter().map(|&rate| CountDist::Poisson { rate }).collect();
        let arrivals = match self.kind {
            EnvKind::SingleHop => Some(self.arrival_rates.iter().map(|&rate| CountDist::Poisson { rate }).collect()),
            EnvKind::MultiPath => None,
        };
        Exogenous::new(self.kind, arrivals, capacities)
    }
}

/// The i.i.d. exogenous randomness of an environment: per-queue arrival
/// counts (single-hop only) and per-queue capacities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exogenous {
    pub kind: EnvKind,
    pub arrivals: Option<Vec<CountDist>>,
    pub capacities: Vec<CountDist>,
}

impl Exogenous {
    pub fn new(kind: EnvKind, arrivals: Option<Vec<CountDist>>, capacities: Vec<CountDist>) -> Result<Self> {
        if capacities.is_empty() {
            return Err(Error::InvalidParameter("an environment needs at least one queue".into()));
        }
        match (kind, &arrivals) {
            (EnvKind::SingleHop, Some(a)) if a.len() == capacities.len() => {}
            (EnvKind::SingleHop, Some(a)) => {
                return Err(Error::ShapeMismatch { expected: capacities.len(), actual: a.len() })
            }
            (EnvKind::SingleHop, None) => {
                return Err(Error::InvalidParameter("single-hop environments need arrival distributions".into()))
            }
            (EnvKind::MultiPath, Some(_)) => {
                return Err(Error::InvalidParameter("multi-path arrivals are deterministic".into()))
            }
            (EnvKind::MultiPath, None) => {}
        }
        for dist in arrivals.iter().flatten().chain(&capacities) {
            dist.validate()?;
        }
        Ok(Exogenous { kind, arrivals, capacities })
    }

    pub fn num_queues(&self) -> usize {
        self.capacities.len()
    }

    pub fn sample_arrivals(&self, rng: &mut Stream) -> Vec<u64> {
        match &self.arrivals {
            Some(dists) => dists.iter().map(|d| d.sample(rng)).collect(),
            None => alloc::vec![0; self.num_queues()],
        }
    }

    pub fn sample_capacities(&self, rng: &mut Stream) -> Vec<u64> {
        self.capacities.iter().map(|d| d.sample(rng)).collect()
    }
}

/// MDP state: queue lengths, currently observable capacities, and time.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkState {
    pub q: Vec<u64>,
    pub y: Vec<u64>,
    pub t: u64,
}

impl NetworkState {
    pub fn new(q: Vec<u64>, y: Vec<u64>) -> Result<Self> {
        if q.len() != y.len() || q.is_empty() {
            return Err(Error::ShapeMismatch { expected: q.len(), actual: y.len() });
        }
        Ok(NetworkState { q, y, t: 0 })
    }

    pub fn num_queues(&self) -> usize {
        self.q.len()
    }

    pub fn is_saturated(&self) -> bool {
        self.q.iter().any(|&q| q >= QUEUE_CAP)
    }
}

fn check_action(state: &NetworkState, action: usize) -> Result<()> {
    if action >= state.num_queues() {
        return Err(Error::InvalidAction { action, num_queues: state.num_queues() });
    }
    Ok(())
}

fn check_len(expected: usize, v: &[u64]) -> Result<()> {
    if v.len() != expected {
        return Err(Error::ShapeMismatch { expected, actual: v.len() });
    }
    Ok(())
}

/// Single-hop transition: the served queue drains up to its capacity, then
/// every queue receives its arrivals. `capacities` become the next state's `y`.
pub fn singlehop_step(
    state: &NetworkState,
    action: usize,
    arrivals: &[u64],
    capacities: &[u64],
) -> Result<NetworkState> {
    check_action(state, action)?;
    check_len(state.num_queues(), arrivals)?;
    check_len(state.num_queues(), capacities)?;
    let q = state
        .q
        .iter()
        .zip(&state.y)
        .zip(arrivals)
        .enumerate()
        .map(|(k, ((&q, &y), &x))| {
            let drained = if k == action { q.saturating_sub(y) } else { q };
            drained.saturating_add(x).min(QUEUE_CAP)
        })
        .collect();
    Ok(NetworkState { q, y: capacities.to_vec(), t: state.t + 1 })
}

/// Multi-path transition: every server drains its queue, then the single
/// arriving packet joins the routed queue.
pub fn multipath_step(state: &NetworkState, action: usize, capacities: &[u64]) -> Result<NetworkState> {
    check_action(state, action)?;
    check_len(state.num_queues(), capacities)?;
    let q = state
        .q
        .iter()
        .zip(&state.y)
        .enumerate()
        .map(|(k, (&q, &y))| {
            let drained = q.saturating_sub(y);
            if k == action {
                drained.saturating_add(1).min(QUEUE_CAP)
            } else {
                drained
            }
        })
        .collect();
    Ok(NetworkState { q, y: capacities.to_vec(), t: state.t + 1 })
}

/// Per-step cost `c(s) = sum_k c(s_k)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CostFn {
    /// `c(s_k) = q_k`, the total backlog.
    #[default]
    Backlog,
    /// `c(s_k) = w_k q_k`.
    WeightedBacklog { weights: Vec<f64> },
}

impl CostFn {
    pub fn evaluate(&self, state: &NetworkState) -> f64 {
        match self {
            CostFn::Backlog => state.q.iter().map(|&q| q as f64).sum(),
            CostFn::WeightedBacklog { weights } => state.q.iter().zip(weights).map(|(&q, w)| w * q as f64).sum(),
        }
    }
}

/// Total backlog of a state.
pub fn cost(state: &NetworkState) -> f64 {
    CostFn::Backlog.evaluate(state)
}

/// How each component `(q_k, y_k)` plus environment parameters is turned
/// into one observation row. Every scheme orients its coordinates so that
/// increasing a coordinate should raise that component's priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// `(q, y, lambda, -mu)`, width 4.
    SingleHop,
    /// `(-q, y, mu)`, width 3.
    MultiPath,
    /// `(q, y)` for single-hop and `(-q, y)` for multi-path, width 2.
    Bare,
}

impl Encoding {
    pub fn id(self) -> &'static str {
        match self {
            Encoding::SingleHop => "single_hop",
            Encoding::MultiPath => "multi_path",
            Encoding::Bare => "bare",
        }
    }

    pub fn width(self) -> usize {
        match self {
            Encoding::SingleHop => 4,
            Encoding::MultiPath => 3,
            Encoding::Bare => 2,
        }
    }

    /// Parameter-aware default for a problem class.
    pub fn default_for(kind: EnvKind) -> Self {
        match kind {
            EnvKind::SingleHop => Encoding::SingleHop,
            EnvKind::MultiPath => Encoding::MultiPath,
        }
    }

    pub fn supports(self, kind: EnvKind) -> bool {
        matches!(
            (self, kind),
            (Encoding::Bare, _) | (Encoding::SingleHop, EnvKind::SingleHop) | (Encoding::MultiPath, EnvKind::MultiPath)
        )
    }
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Encoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_hop" | "singlehop" => Ok(Encoding::SingleHop),
            "multi_path" | "multipath" => Ok(Encoding::MultiPath),
            "bare" => Ok(Encoding::Bare),
            other => Err(Error::UnknownEncoding(other.to_string())),
        }
    }
}

/// `K x n` observation matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub num_rows: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Observation {
    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.width..(k + 1) * self.width]
    }
}

pub fn encode_observation(state: &NetworkState, params: &EnvParams, encoding: Encoding) -> Result<Observation> {
    let mut data = Vec::with_capacity(state.num_queues() * encoding.width());
    encode_into(state, params, encoding, &mut data)?;
    Ok(Observation { num_rows: state.num_queues(), width: encoding.width(), data })
}

/// Appends the encoded rows of `state` to `out`.
pub fn encode_into(state: &NetworkState, params: &EnvParams, encoding: Encoding, out: &mut Vec<f64>) -> Result<()> {
    if !encoding.supports(params.kind) {
        return Err(Error::IncompatibleEncoding(String::from(encoding.id())));
    }
    if params.num_queues != state.num_queues() {
        return Err(Error::ShapeMismatch { expected: params.num_queues, actual: state.num_queues() });
    }
    for k in 0..state.num_queues() {
        let q = state.q[k] as f64;
        let y = state.y[k] as f64;
        match (encoding, params.kind) {
            (Encoding::SingleHop, _) => out.extend([q, y, params.arrival_rate(k), -params.service_rates[k]]),
            (Encoding::MultiPath, _) => out.extend([-q, y, params.service_rates[k]]),
            (Encoding::Bare, EnvKind::SingleHop) => out.extend([q, y]),
            (Encoding::Bare, EnvKind::MultiPath) => out.extend([-q, y]),
        }
    }
    Ok(())
}

/// One seeded environment instance. Owns its exogenous random stream.
#[derive(Debug, Clone)]
pub struct Env {
    exogenous: Exogenous,
    cost_fn: CostFn,
    state: NetworkState,
    rng: Stream,
    overflowed: bool,
}

impl Env {
    /// Starts from empty queues with freshly sampled capacities.
    pub fn new(exogenous: Exogenous, seed: u64) -> Self {
        let mut rng = rng::stream(seed);
        let k = exogenous.num_queues();
        let y = exogenous.sample_capacities(&mut rng);
        Env {
            exogenous,
            cost_fn: CostFn::Backlog,
            state: NetworkState { q: alloc::vec![0; k], y, t: 0 },
            rng,
            overflowed: false,
        }
    }

    pub fn from_params(params: &EnvParams, seed: u64) -> Result<Self> {
        Ok(Env::new(params.exogenous()?, seed))
    }

    pub fn with_cost(mut self, cost_fn: CostFn) -> Self {
        self.cost_fn = cost_fn;
        self
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn kind(&self) -> EnvKind {
        self.exogenous.kind
    }

    pub fn overflowed(&self) -> bool {
        self.overflowed
    }

    pub fn current_cost(&self) -> f64 {
        self.cost_fn.evaluate(&self.state)
    }

    /// Draws the step's exogenous randomness: arrivals for this step and the
    /// capacities that become visible at the next step.
    pub fn sample_exogenous(&mut self) -> (Vec<u64>, Vec<u64>) {
        let arrivals = self.exogenous.sample_arrivals(&mut self.rng);
        let capacities = self.exogenous.sample_capacities(&mut self.rng);
        (arrivals, capacities)
    }

    /// Applies `action` and returns the cost of the resulting state.
    pub fn step(&mut self, action: usize) -> Result<f64> {
        check_action(&self.state, action)?;
        let (arrivals, capacities) = self.sample_exogenous();
        self.state = match self.exogenous.kind {
            EnvKind::SingleHop => singlehop_step(&self.state, action, &arrivals, &capacities)?,
            EnvKind::MultiPath => multipath_step(&self.state, action, &capacities)?,
        };
        if self.state.is_saturated() {
            self.overflowed = true;
        }
        Ok(self.current_cost())
    }
}
