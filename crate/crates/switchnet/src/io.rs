//! CSV outputs, environment-set files and network checkpoints.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use switchnet_core::dp::RegionCell;
use switchnet_core::env::Encoding;
use switchnet_core::policy::{CriticNet, PolicyKind, PolicyNet};
use switchnet_core::sampling::EnvSet;

/// Writes `rows` as CSV with a header derived from the row type.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let rows = reader.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

/// `env_id, kind, K, lambda_1..K, mu_1..K, J_baseline`. Multi-path rows
/// report the unit arrival rate.
pub fn write_envs_csv(path: &Path, set: &EnvSet) -> Result<()> {
    let k = set.envs.iter().map(|e| e.params.num_queues).max().unwrap_or(0);
    let mut writer = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["env_id".to_string(), "kind".to_string(), "K".to_string()];
    header.extend((1..=k).map(|i| format!("lambda_{i}")));
    header.extend((1..=k).map(|i| format!("mu_{i}")));
    header.push("J_baseline".to_string());
    writer.write_record(&header)?;
    for env in &set.envs {
        let p = &env.params;
        let mut row = vec![env.id.to_string(), p.kind.to_string(), p.num_queues.to_string()];
        let pad = |values: Vec<String>| values.into_iter().chain(std::iter::repeat(String::new())).take(k);
        row.extend(pad((0..p.num_queues).map(|i| p.arrival_rate(i).to_string()).collect()));
        row.extend(pad(p.service_rates.iter().map(f64::to_string).collect()));
        row.push(env.baseline_cost.to_string());
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_env_set(path: &Path) -> Result<EnvSet> {
    read_json(path)
}

pub fn write_regions_csv(path: &Path, cells: &[RegionCell]) -> Result<()> {
    write_csv(path, cells)
}

pub const CHECKPOINT_FORMAT: &str = "switchnet-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained networks plus enough context to evaluate them later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: PolicyKind,
    pub encoding: Encoding,
    pub train_env_ids: Vec<usize>,
    pub batch: u64,
    pub steps: u64,
    pub policy: PolicyNet,
    pub critic: CriticNet,
}

impl Checkpoint {
    pub fn new(policy: &PolicyNet, critic: &CriticNet, train_env_ids: Vec<usize>, batch: u64, steps: u64) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            kind: policy.kind,
            encoding: policy.encoding,
            train_env_ids,
            batch,
            steps,
            policy: policy.clone(),
            critic: critic.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let checkpoint: Checkpoint = read_json(path)?;
        if checkpoint.format != CHECKPOINT_FORMAT {
            bail!("{} is not a checkpoint (format `{}`)", path.display(), checkpoint.format);
        }
        if checkpoint.version != CHECKPOINT_VERSION {
            bail!("unsupported checkpoint version {} in {}", checkpoint.version, path.display());
        }
        Ok(checkpoint)
    }
}
