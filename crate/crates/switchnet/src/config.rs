//! Experiment configuration, loadable from TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use switchnet_core::dp::{MdpSpec, SequenceConfig};
use switchnet_core::env::{Encoding, EnvKind};
use switchnet_core::policy::PolicyKind;
use switchnet_core::ppo::{NetworkConfig, PpoConfig};
use switchnet_core::rng::derive_seed;
use switchnet_core::sampling::CheckConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    #[default]
    SingleEnv,
    Generalization,
    DpDemo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSetConfig {
    pub kind: EnvKind,
    pub count: usize,
    /// The first `train_count` environments form the training split.
    pub train_count: usize,
    pub test_count: usize,
    pub check: CheckConfig,
}

impl Default for EnvSetConfig {
    fn default() -> Self {
        EnvSetConfig {
            kind: EnvKind::SingleHop,
            count: 5,
            train_count: 5,
            test_count: 0,
            check: CheckConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Training steps collected from each training environment.
    pub steps_per_env: u64,
    /// Hyperparameters shared by both architectures. `learning_rate` and
    /// `total_steps` are replaced per run.
    pub ppo: PpoConfig,
    pub stn_learning_rate: f64,
    pub mlp_learning_rate: f64,
    pub networks: NetworkConfig,
    /// Defaults to `bare` for the single-environment study and to the
    /// parameter-aware encoding of the environment kind otherwise.
    pub encoding: Option<Encoding>,
    pub architectures: Vec<PolicyKind>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            steps_per_env: 1_000_000,
            ppo: PpoConfig::default(),
            stn_learning_rate: PolicyKind::Stn.default_learning_rate(),
            mlp_learning_rate: PolicyKind::Mlp.default_learning_rate(),
            networks: NetworkConfig::default(),
            encoding: None,
            architectures: vec![PolicyKind::Stn, PolicyKind::Mlp],
        }
    }
}

impl TrainingConfig {
    pub fn learning_rate(&self, kind: PolicyKind) -> f64 {
        match kind {
            PolicyKind::Stn => self.stn_learning_rate,
            PolicyKind::Mlp => self.mlp_learning_rate,
        }
    }

    /// PPO settings for one run over `num_envs` training environments.
    pub fn ppo_for(&self, kind: PolicyKind, num_envs: usize) -> PpoConfig {
        PpoConfig {
            learning_rate: self.learning_rate(kind),
            total_steps: self.steps_per_env * num_envs as u64,
            ..self.ppo.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub num_traj: usize,
    pub traj_len: u64,
    pub outlier_threshold: f64,
    pub histogram_bin_width: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { num_traj: 3, traj_len: 50_000, outlier_threshold: 5.0, histogram_bin_width: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpConfig {
    pub spec: MdpSpec,
    pub sequence: SequenceConfig,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig { spec: MdpSpec::symmetric(), sequence: SequenceConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub learning_rates: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { learning_rates: vec![1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: Study,
    /// Master seed; environment, training and evaluation streams derive
    /// from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads for independent jobs. Results do not depend on it.
    pub threads: Option<usize>,
    pub envs: EnvSetConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
    pub dp: DpConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            study: Study::SingleEnv,
            seed: 1,
            output_dir: PathBuf::from("results"),
            threads: None,
            envs: EnvSetConfig::default(),
            training: TrainingConfig::default(),
            eval: EvalConfig::default(),
            dp: DpConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Five single-hop environments, one policy per architecture and
    /// environment, 1,000,000 steps each.
    pub fn single_env() -> Self {
        ExperimentConfig::default()
    }

    /// Three environments at 300,000 steps.
    pub fn single_env_desk() -> Self {
        let mut config = ExperimentConfig::single_env();
        config.envs.count = 3;
        config.envs.train_count = 3;
        config.training.steps_per_env = 300_000;
        config
    }

    /// 100 environments split 5/95, 2,000,000 steps per training environment.
    pub fn generalization() -> Self {
        ExperimentConfig {
            study: Study::Generalization,
            envs: EnvSetConfig { count: 100, train_count: 5, test_count: 95, ..EnvSetConfig::default() },
            training: TrainingConfig { steps_per_env: 2_000_000, ..TrainingConfig::default() },
            ..ExperimentConfig::default()
        }
    }

    /// 20 environments split 3/17, 200,000 steps per training environment.
    pub fn generalization_desk() -> Self {
        let mut config = ExperimentConfig::generalization();
        config.envs.count = 20;
        config.envs.train_count = 3;
        config.envs.test_count = 17;
        config.training.steps_per_env = 200_000;
        config
    }

    pub fn dp_demo() -> Self {
        ExperimentConfig { study: Study::DpDemo, ..ExperimentConfig::default() }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        ExperimentConfig::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let envs = &self.envs;
        if envs.count == 0 {
            bail!("the environment set must not be empty");
        }
        if envs.train_count + envs.test_count != envs.count {
            bail!("split sizes {} + {} do not sum to {}", envs.train_count, envs.test_count, envs.count);
        }
        if envs.train_count == 0 {
            bail!("the training split must not be empty");
        }
        if self.study == Study::SingleEnv && envs.test_count != 0 {
            bail!("the single-environment study trains on every environment; test_count must be 0");
        }
        if self.training.architectures.is_empty() {
            bail!("no architectures selected");
        }
        if let Some(encoding) = self.training.encoding {
            if !encoding.supports(envs.kind) {
                bail!("encoding {encoding} does not fit {} environments", envs.kind);
            }
        }
        if self.eval.num_traj == 0 || self.eval.traj_len == 0 {
            bail!("evaluation needs at least one non-empty trajectory");
        }
        if !(self.eval.histogram_bin_width > 0.0) || !(self.eval.outlier_threshold > 0.0) {
            bail!("histogram bin width and outlier threshold must be positive");
        }
        let train_envs = if self.study == Study::SingleEnv { 1 } else { envs.train_count };
        for &kind in &self.training.architectures {
            self.training.ppo_for(kind, train_envs).validate(train_envs)?;
        }
        Ok(())
    }

    pub fn encoding(&self) -> Encoding {
        self.training.encoding.unwrap_or(match self.study {
            Study::SingleEnv => Encoding::Bare,
            _ => Encoding::default_for(self.envs.kind),
        })
    }

    /// Replaces the master seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn env_seed(&self) -> u64 {
        derive_seed(self.seed, 0)
    }

    pub fn train_seed(&self) -> u64 {
        derive_seed(self.seed, 1)
    }

    pub fn eval_seed(&self) -> u64 {
        derive_seed(self.seed, 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for config in [
            ExperimentConfig::single_env(),
            ExperimentConfig::single_env_desk(),
            ExperimentConfig::generalization(),
            ExperimentConfig::generalization_desk(),
            ExperimentConfig::dp_demo(),
        ] {
            config.validate().unwrap();
        }
    }

    #[test]
    fn toml_round_trip() {
        let config = ExperimentConfig::generalization_desk();
        let text = config.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), config);
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let text = "study = \"generalization\"\nseed = 7\n[envs]\ncount = 4\ntrain_count = 1\ntest_count = 3\n[training.ppo]\nbatch_size = 200\n";
        let config = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.training.ppo.batch_size, 200);
        assert_eq!(config.training.ppo.minibatch_size, 100);
        assert_eq!(config.training.ppo_for(PolicyKind::Mlp, 1).learning_rate, 3e-4);
        assert_eq!(config.encoding(), Encoding::SingleHop);
    }

    #[test]
    fn split_sizes_must_sum_to_count() {
        let text = "study = \"generalization\"\n[envs]\ncount = 4\ntrain_count = 1\ntest_count = 2\n";
        assert!(ExperimentConfig::from_toml(text).is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::from_toml("sed = 3\n").is_err());
    }

    #[test]
    fn ppo_totals_scale_with_training_envs() {
        let config = ExperimentConfig::generalization_desk();
        let ppo = config.training.ppo_for(PolicyKind::Stn, 3);
        assert_eq!(ppo.total_steps, 600_000);
        assert_eq!(ppo.learning_rate, 3e-3);
    }
}
