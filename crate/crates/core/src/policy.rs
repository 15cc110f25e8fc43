//! Policy and value networks.
//!
//! The switch-type network (STN) applies one shared monotone scalar network
//! `f` to every observation row and takes a softmax over the `K` outputs.
//! Because `f` is non-decreasing in each coordinate of its row and a row only
//! feeds its own logit, raising any coordinate of row `i` can only raise the
//! probability of action `i`. The MLP policy and the critic are ordinary tanh
//! networks over the flattened observation.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{argmax_first, StatePolicy};
use crate::env::{encode_into, Encoding, EnvParams, NetworkState, Observation};
use crate::nn::{entropy_of_logits, log_softmax, softmax, InputTransform, Network};
use crate::rng::Stream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Stn,
    Mlp,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Stn => "stn",
            PolicyKind::Mlp => "mlp",
        }
    }

    /// Learning rates selected by the reference sweep.
    pub fn default_learning_rate(self) -> f64 {
        match self {
            PolicyKind::Stn => 3e-3,
            PolicyKind::Mlp => 3e-4,
        }
    }
}

impl core::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stn" => Ok(PolicyKind::Stn),
            "mlp" => Ok(PolicyKind::Mlp),
            other => Err(Error::InvalidParameter(alloc::format!("unknown policy kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StnConfig {
    pub hidden: Vec<usize>,
    /// ReLU-N bound.
    pub bound: f64,
    pub first_bias_spread: f64,
    /// Initial spread of the logits.
    pub output_scale: f64,
    pub input_transform: InputTransform,
}

impl Default for StnConfig {
    fn default() -> Self {
        StnConfig {
            hidden: vec![32; 4],
            bound: 1.0,
            first_bias_spread: 3.0,
            output_scale: 100.0,
            input_transform: InputTransform::Symlog,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub output_gain: f64,
    pub input_transform: InputTransform,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig { hidden: vec![64, 64], output_gain: 0.01, input_transform: InputTransform::Symlog }
    }
}

impl MlpConfig {
    pub fn critic() -> Self {
        MlpConfig { output_gain: 1.0, ..MlpConfig::default() }
    }
}

/// A batch of `rows` observations, each `num_queues x width`, row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObsBatch {
    pub rows: usize,
    pub num_queues: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ObsBatch {
    pub fn new(num_queues: usize, width: usize) -> Self {
        ObsBatch { rows: 0, num_queues, width, data: Vec::new() }
    }

    pub fn from_observation(obs: &Observation) -> Self {
        ObsBatch { rows: 1, num_queues: obs.num_rows, width: obs.width, data: obs.data.clone() }
    }

    pub fn push(&mut self, obs: &[f64]) -> Result<()> {
        let len = self.num_queues * self.width;
        if obs.len() != len {
            return Err(Error::ShapeMismatch { expected: len, actual: obs.len() });
        }
        self.data.extend_from_slice(obs);
        self.rows += 1;
        Ok(())
    }

    pub fn observation(&self, row: usize) -> &[f64] {
        let len = self.num_queues * self.width;
        &self.data[row * len..(row + 1) * len]
    }

    /// Gathers the given rows into a new batch.
    pub fn select(&self, rows: &[usize]) -> ObsBatch {
        let mut out = ObsBatch::new(self.num_queues, self.width);
        out.data.reserve(rows.len() * self.num_queues * self.width);
        for &r in rows {
            out.data.extend_from_slice(self.observation(r));
        }
        out.rows = rows.len();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub kind: PolicyKind,
    pub encoding: Encoding,
    pub num_queues: usize,
    pub width: usize,
    pub net: Network,
}

impl PolicyNet {
    /// Switch-type policy. The shared scalar network sees one row of width
    /// `encoding.width()`; it is independent of the number of queues.
    pub fn stn(num_queues: usize, encoding: Encoding, config: &StnConfig, rng: &mut Stream) -> Result<Self> {
        let width = encoding.width();
        let net = Network::monotone(
            width,
            &config.hidden,
            config.bound,
            config.first_bias_spread,
            config.output_scale,
            config.input_transform,
            rng,
        )?;
        Ok(PolicyNet { kind: PolicyKind::Stn, encoding, num_queues, width, net })
    }

    pub fn mlp(num_queues: usize, encoding: Encoding, config: &MlpConfig, rng: &mut Stream) -> Result<Self> {
        let width = encoding.width();
        let net = Network::mlp(
            num_queues * width,
            &config.hidden,
            num_queues,
            config.output_gain,
            config.input_transform,
            rng,
        )?;
        Ok(PolicyNet { kind: PolicyKind::Mlp, encoding, num_queues, width, net })
    }

    fn check(&self, batch: &ObsBatch) -> Result<()> {
        if batch.width != self.width {
            return Err(Error::ShapeMismatch { expected: self.width, actual: batch.width });
        }
        if self.kind == PolicyKind::Mlp && batch.num_queues != self.num_queues {
            return Err(Error::ShapeMismatch { expected: self.num_queues, actual: batch.num_queues });
        }
        Ok(())
    }

    /// `rows x K` logits. For the STN every observation row is pushed
    /// through the shared network as its own sample.
    pub fn logits(&self, batch: &ObsBatch) -> Result<Vec<f64>> {
        self.check(batch)?;
        match self.kind {
            PolicyKind::Stn => self.net.forward(&batch.data, batch.rows * batch.num_queues),
            PolicyKind::Mlp => self.net.forward(&batch.data, batch.rows),
        }
    }

    pub fn logits_train(&mut self, batch: &ObsBatch) -> Result<Vec<f64>> {
        self.check(batch)?;
        match self.kind {
            PolicyKind::Stn => self.net.forward_train(&batch.data, batch.rows * batch.num_queues),
            PolicyKind::Mlp => self.net.forward_train(&batch.data, batch.rows),
        }
    }

    /// Backpropagates `rows x K` logit gradients into the parameter buffers.
    pub fn backward_logits(&mut self, grad_logits: &[f64]) -> Result<()> {
        self.net.backward(grad_logits).map(|_| ())
    }

    fn single_logits(&self, obs: &Observation) -> Result<Vec<f64>> {
        self.logits(&ObsBatch::from_observation(obs))
    }

    /// Inference-only copy; see [`Network::frozen`].
    pub fn frozen(&self) -> PolicyNet {
        PolicyNet { net: self.net.frozen(), ..self.clone() }
    }

    pub fn probabilities(&self, obs: &Observation) -> Result<Vec<f64>> {
        Ok(softmax(&self.single_logits(obs)?))
    }

    /// Samples from the softmax distribution; returns the action and its
    /// natural-log probability.
    pub fn act_stochastic(&self, obs: &Observation, rng: &mut Stream) -> Result<(usize, f64)> {
        let logits = self.single_logits(obs)?;
        Ok(sample_from_logits(&logits, rng))
    }

    /// Argmax of the logits, lowest index on ties.
    pub fn act_deterministic(&self, obs: &Observation) -> Result<usize> {
        Ok(argmax_first(self.single_logits(obs)?))
    }

    pub fn entropy(&self, obs: &Observation) -> Result<f64> {
        Ok(entropy_of_logits(&self.single_logits(obs)?))
    }
}

/// Inverse-CDF draw from `softmax(logits)`.
pub fn sample_from_logits<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> (usize, f64) {
    let logp = log_softmax(logits);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut action = logits.len() - 1;
    for (k, &lp) in logp.iter().enumerate() {
        acc += libm::exp(lp);
        if u < acc {
            action = k;
            break;
        }
    }
    (action, logp[action])
}

/// Logits of the switch-type network for one observation.
pub fn stn_logits(policy: &PolicyNet, obs: &Observation) -> Result<Vec<f64>> {
    if policy.kind != PolicyKind::Stn {
        return Err(Error::InvalidParameter("stn_logits needs a switch-type policy".into()));
    }
    policy.single_logits(obs)
}

/// State-value network over the flattened observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticNet {
    pub num_queues: usize,
    pub width: usize,
    pub net: Network,
}

impl CriticNet {
    pub fn new(num_queues: usize, encoding: Encoding, config: &MlpConfig, rng: &mut Stream) -> Result<Self> {
        let width = encoding.width();
        let net = Network::mlp(num_queues * width, &config.hidden, 1, config.output_gain, config.input_transform, rng)?;
        Ok(CriticNet { num_queues, width, net })
    }

    fn check(&self, batch: &ObsBatch) -> Result<()> {
        if batch.width != self.width || batch.num_queues != self.num_queues {
            return Err(Error::ShapeMismatch {
                expected: self.num_queues * self.width,
                actual: batch.num_queues * batch.width,
            });
        }
        Ok(())
    }

    pub fn values(&self, batch: &ObsBatch) -> Result<Vec<f64>> {
        self.check(batch)?;
        self.net.forward(&batch.data, batch.rows)
    }

    pub fn values_train(&mut self, batch: &ObsBatch) -> Result<Vec<f64>> {
        self.check(batch)?;
        self.net.forward_train(&batch.data, batch.rows)
    }

    pub fn backward_values(&mut self, grad_values: &[f64]) -> Result<()> {
        self.net.backward(grad_values).map(|_| ())
    }

    pub fn value(&self, obs: &Observation) -> Result<f64> {
        Ok(self.values(&ObsBatch::from_observation(obs))?[0])
    }
}

/// `pi(i | s') - pi(i | s)`, where `s'` adds `bump` to row `component` of
/// the observation. A switch-type policy never makes this negative for a
/// positive bump.
pub fn perturbation_gap(policy: &PolicyNet, obs: &Observation, component: usize, bump: &[f64]) -> Result<f64> {
    if component >= obs.num_rows {
        return Err(Error::InvalidAction { action: component, num_queues: obs.num_rows });
    }
    if bump.len() != obs.width {
        return Err(Error::ShapeMismatch { expected: obs.width, actual: bump.len() });
    }
    let mut bumped = obs.clone();
    for (v, b) in bumped.data[component * obs.width..(component + 1) * obs.width].iter_mut().zip(bump) {
        *v += b;
    }
    Ok(policy.probabilities(&bumped)?[component] - policy.probabilities(obs)?[component])
}

/// Deterministic (argmax) view of a policy network on one environment.
pub struct GreedyPolicy<'a> {
    policy: PolicyNet,
    params: &'a EnvParams,
}

impl<'a> GreedyPolicy<'a> {
    pub fn new(policy: &'a PolicyNet, params: &'a EnvParams) -> Result<Self> {
        if !policy.encoding.supports(params.kind) {
            return Err(Error::IncompatibleEncoding(policy.encoding.id().into()));
        }
        if policy.kind == PolicyKind::Mlp && policy.num_queues != params.num_queues {
            return Err(Error::ShapeMismatch { expected: policy.num_queues, actual: params.num_queues });
        }
        Ok(GreedyPolicy { policy: policy.frozen(), params })
    }
}

impl StatePolicy for GreedyPolicy<'_> {
    fn select(&self, state: &NetworkState) -> usize {
        let mut data = Vec::with_capacity(state.num_queues() * self.policy.width);
        encode_into(state, self.params, self.policy.encoding, &mut data).expect("encoding checked at construction");
        let batch = ObsBatch { rows: 1, num_queues: state.num_queues(), width: self.policy.width, data };
        argmax_first(self.policy.logits(&batch).expect("shapes checked at construction"))
    }
}
