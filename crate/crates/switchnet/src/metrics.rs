//! Evaluation records, split summaries and histograms.

use std::fmt;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use switchnet_core::policy::PolicyKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn of(in_train_split: bool) -> Self {
        if in_train_split {
            Split::Train
        } else {
            Split::Test
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Deterministic evaluation of one trained policy on one environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub env_id: usize,
    pub policy: PolicyKind,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "J0")]
    pub j0: f64,
    pub in_train_split: bool,
    pub overflowed: bool,
}

impl EvalRecord {
    pub fn split(&self) -> Split {
        Split::of(self.in_train_split)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: PolicyKind,
    pub split: Split,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    /// Statistics over the values at or below the threshold; empty when
    /// every value was omitted.
    pub rejected_mean: Option<f64>,
    pub rejected_std: Option<f64>,
    pub omitted: usize,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Summary statistics of `J0` for one group of values.
pub fn summarize_values(policy: PolicyKind, split: Split, values: &[f64], threshold: f64) -> Result<SummaryRow> {
    let Some((mean, std)) = mean_std(values) else {
        bail!("no {policy} records in the {split} split");
    };
    let kept: Vec<f64> = values.iter().copied().filter(|&v| v <= threshold).collect();
    let rejected = mean_std(&kept);
    Ok(SummaryRow {
        policy,
        split,
        count: values.len(),
        mean,
        std,
        rejected_mean: rejected.map(|r| r.0),
        rejected_std: rejected.map(|r| r.1),
        omitted: values.len() - kept.len(),
    })
}

fn groups(records: &[EvalRecord]) -> Vec<(PolicyKind, Split)> {
    let mut keys: Vec<(PolicyKind, Split)> = records.iter().map(|r| (r.policy, r.split())).collect();
    keys.sort_by_key(|&(policy, split)| (policy as u8, split));
    keys.dedup();
    keys
}

/// One row per (architecture, split) present in `records`, ordered by
/// architecture then split.
pub fn summarize(records: &[EvalRecord], threshold: f64) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        bail!("no evaluation records to summarize");
    }
    groups(records)
        .into_iter()
        .map(|(policy, split)| {
            let values: Vec<f64> =
                records.iter().filter(|r| r.policy == policy && r.split() == split).map(|r| r.j0).collect();
            summarize_values(policy, split, &values, threshold)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub policy: PolicyKind,
    pub split: Split,
    pub bin_low: f64,
    /// Infinite for the bin collecting everything above the threshold.
    pub bin_high: f64,
    pub count: usize,
}

/// Fixed-width bins over `[0, threshold)` plus one open bin above it.
pub fn histogram(records: &[EvalRecord], bin_width: f64, threshold: f64) -> Vec<HistogramBin> {
    let num_bins = (threshold / bin_width).ceil() as usize;
    let mut bins = Vec::new();
    for (policy, split) in groups(records) {
        let mut counts = vec![0usize; num_bins + 1];
        for r in records.iter().filter(|r| r.policy == policy && r.split() == split) {
            let slot =
                if r.j0 >= threshold { num_bins } else { ((r.j0.max(0.0) / bin_width) as usize).min(num_bins - 1) };
            counts[slot] += 1;
        }
        for (slot, &count) in counts.iter().enumerate() {
            let (bin_low, bin_high) = if slot == num_bins {
                (threshold, f64::INFINITY)
            } else {
                (slot as f64 * bin_width, ((slot + 1) as f64 * bin_width).min(threshold))
            };
            bins.push(HistogramBin { policy, split, bin_low, bin_high, count });
        }
    }
    bins
}

/// First logged step at or after `min_step` whose moving-average cost is
/// below `baseline`.
pub fn crossing_step(log: &[(u64, f64)], baseline: f64, min_step: u64) -> Option<u64> {
    log.iter().find(|&&(step, cost)| step >= min_step && cost < baseline).map(|&(step, _)| step)
}
