//! Seeded random streams and the handful of discrete distributions the
//! simulators need.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Random stream owned by exactly one environment, policy or trainer.
pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer. Used to derive child seeds from `(parent, index)`
/// pairs so that every consumer of randomness gets an independent stream.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, index: u64) -> u64 {
    mix(mix(parent) ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

/// Uniform draw on the open interval `(low, high)`.
pub fn uniform_open<R: Rng + ?Sized>(rng: &mut R, low: f64, high: f64) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return low + (high - low) * u;
        }
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn poisson<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> u64 {
    match Poisson::new(rate) {
        Ok(dist) => rng.sample(dist) as u64,
        // zero rate (the only valid rate `Poisson::new` rejects)
        Err(_) => 0,
    }
}

/// Distribution of a per-step, per-queue count (arrivals or capacity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CountDist {
    Poisson {
        rate: f64,
    },
    Bernoulli {
        p: f64,
    },
    /// `probs[v]` is the probability of the value `v`.
    Finite {
        probs: Vec<f64>,
    },
}

impl CountDist {
    pub fn validate(&self) -> Result<()> {
        match self {
            CountDist::Poisson { rate } => {
                if !(rate.is_finite() && *rate >= 0.0) {
                    return Err(Error::InvalidParameter(alloc::format!(
                        "poisson rate must be finite and non-negative, got {rate}"
                    )));
                }
            }
            CountDist::Bernoulli { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidParameter(alloc::format!(
                        "bernoulli probability must lie in [0, 1], got {p}"
                    )));
                }
            }
            CountDist::Finite { probs } => {
                let total: f64 = probs.iter().sum();
                if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(alloc::format!(
                        "finite distribution must be non-negative and sum to 1, got {probs:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            CountDist::Poisson { rate } => *rate,
            CountDist::Bernoulli { p } => *p,
            CountDist::Finite { probs } => probs.iter().enumerate().map(|(v, p)| v as f64 * p).sum(),
        }
    }

    /// Explicit `(value, probability)` support. `None` for Poisson.
    pub fn support(&self) -> Option<Vec<(u64, f64)>> {
        match self {
            CountDist::Poisson { .. } => None,
            CountDist::Bernoulli { p } => Some(alloc::vec![(0, 1.0 - p), (1, *p)]),
            CountDist::Finite { probs } => {
                Some(probs.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(v, p)| (v as u64, *p)).collect())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            CountDist::Poisson { rate } => poisson(rng, *rate),
            CountDist::Bernoulli { p } => u64::from(rng.gen::<f64>() < *p),
            CountDist::Finite { probs } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (v, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return v as u64;
                    }
                }
                (probs.len() - 1) as u64
            }
        }
    }
}
