use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use switchnet::config::{ExperimentConfig, Study};
use switchnet::eval::{evaluate, TrajectoryRow};
use switchnet::io::{read_csv, read_env_set, write_csv, Checkpoint};
use switchnet::metrics::{histogram, summarize, EvalRecord};
use switchnet::study::{
    run_dp_demo, run_generalization_study, run_lr_sweep, run_single_env_study, sample_envs, thread_pool, train_policy,
    TrainLogCsvRow,
};
use switchnet_core::env::{Encoding, EnvKind};
use switchnet_core::policy::PolicyKind;

#[derive(Parser)]
#[command(name = "switchnet", version, about = "Switch-type policy networks for queueing-network control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores). Outputs do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Full,
    Desk,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a stabilizable environment set.
    SampleEnvs {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kind: Option<EnvKind>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train one policy on environments from an `envs.json` file.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        envs: PathBuf,
        #[arg(long, default_value = "stn")]
        policy: PolicyKind,
        /// Training environment ids; all by default.
        #[arg(long, value_delimiter = ',')]
        env_ids: Vec<usize>,
        #[arg(long)]
        steps_per_env: Option<u64>,
        #[arg(long)]
        encoding: Option<Encoding>,
        /// Batches between periodic checkpoints.
        #[arg(long)]
        checkpoint_interval: Option<u64>,
    },
    /// Evaluate a checkpoint on every environment of an `envs.json` file.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        envs: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Per-environment training of both architectures.
    SingleEnvStudy {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "full")]
        preset: Preset,
    },
    /// Multi-environment training and zero-shot evaluation.
    GeneralizationStudy {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "full")]
        preset: Preset,
    },
    /// Solve the two-queue MDP exactly and export its decision regions.
    DpDemo {
        #[command(flatten)]
        common: Common,
    },
    /// Single-environment study repeated over a grid of learning rates.
    LrSweep {
        #[command(flatten)]
        common: Common,
    },
    /// Summarize an `eval_records.csv` file per architecture and split.
    Summarize {
        records: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        threshold: f64,
        #[arg(long, default_value_t = 0.1)]
        bin_width: f64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn resolve(common: &Common, preset: ExperimentConfig) -> Result<(ExperimentConfig, PathBuf)> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => preset,
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    if common.threads.is_some() {
        config.threads = common.threads;
    }
    config.validate()?;
    let out = config.output_dir.clone();
    Ok((config, out))
}

fn train_command(
    config: &ExperimentConfig,
    out: &Path,
    envs_path: &Path,
    policy: PolicyKind,
    env_ids: &[usize],
) -> Result<()> {
    let set = read_env_set(envs_path)?;
    let ids: Vec<usize> = if env_ids.is_empty() { set.envs.iter().map(|e| e.id).collect() } else { env_ids.to_vec() };
    let train = ids
        .iter()
        .map(|&id| set.envs.iter().find(|e| e.id == id).with_context(|| format!("no environment with id {id}")))
        .collect::<Result<Vec<_>>>()?;
    let encoding = config.encoding();
    let checkpoint_dir = out.join("checkpoints");
    fs::create_dir_all(&checkpoint_dir)?;
    let outcome =
        train_policy(&train, policy, encoding, config, config.train_seed(), Some((&checkpoint_dir, policy.as_str())))?;
    if let Some(msg) = &outcome.diverged {
        eprintln!("training stopped early: {msg}");
    }
    let rows: Vec<TrainLogCsvRow> = outcome
        .log
        .iter()
        .map(|r| TrainLogCsvRow {
            policy,
            step: r.step,
            env_id: r.env_id,
            moving_avg_cost: r.moving_avg_cost,
            loss: r.loss,
            clip_fraction: r.clip_fraction,
            entropy: r.entropy,
            learning_rate: r.learning_rate,
        })
        .collect();
    write_csv(&out.join("train_log.csv"), &rows)?;
    let batches = outcome.log.len() as u64 / ids.len() as u64;
    let path = out.join(format!("{policy}.json"));
    Checkpoint::new(&outcome.policy, &outcome.critic, ids, batches, outcome.steps).save(&path)?;
    println!("wrote {} and {}", out.join("train_log.csv").display(), path.display());
    Ok(())
}

fn eval_command(config: &ExperimentConfig, out: &Path, envs_path: &Path, checkpoint: &Path) -> Result<()> {
    let set = read_env_set(envs_path)?;
    let checkpoint = Checkpoint::load(checkpoint)?;
    let pool = thread_pool(config.threads)?;
    let results = pool.install(|| {
        set.envs
            .par_iter()
            .map(|env| {
                evaluate(
                    &checkpoint.policy,
                    env,
                    &config.eval,
                    config.eval_seed(),
                    checkpoint.train_env_ids.contains(&env.id),
                )
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut records = Vec::new();
    let mut trajectories: Vec<TrajectoryRow> = Vec::new();
    for (record, rows) in results {
        records.push(record);
        trajectories.extend(rows);
    }
    write_csv(&out.join("eval_records.csv"), &records)?;
    write_csv(&out.join("eval_trajectories.csv"), &trajectories)?;
    print_summary(&records, config.eval.outlier_threshold)?;
    Ok(())
}

fn print_summary(records: &[EvalRecord], threshold: f64) -> Result<()> {
    println!("policy split  n   mean       std        mean(<=thr) omitted");
    for row in summarize(records, threshold)? {
        let rejected = row.rejected_mean.map_or_else(|| "-".to_string(), |m| format!("{m:.4}"));
        println!(
            "{:<6} {:<5} {:<3} {:<10.4} {:<10.4} {:<11} {}",
            row.policy.to_string(),
            row.split.to_string(),
            row.count,
            row.mean,
            row.std,
            rejected,
            row.omitted
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::SampleEnvs { common, kind, count } => {
            let (mut config, out) = resolve(&common, ExperimentConfig::generalization())?;
            if let Some(kind) = kind {
                config.envs.kind = kind;
            }
            if let Some(count) = count {
                config.envs.count = count;
                config.envs.train_count = count.min(config.envs.train_count).max(1);
                config.envs.test_count = count - config.envs.train_count;
            }
            let set = sample_envs(&config, &out)?;
            println!("sampled {} {} environments into {}", set.len(), set.kind, out.display());
        }
        Command::Train { common, envs, policy, env_ids, steps_per_env, encoding, checkpoint_interval } => {
            let (mut config, out) = resolve(&common, ExperimentConfig::generalization())?;
            if let Some(steps) = steps_per_env {
                config.training.steps_per_env = steps;
            }
            if encoding.is_some() {
                config.training.encoding = encoding;
            }
            if let Some(interval) = checkpoint_interval {
                config.training.ppo.checkpoint_interval = interval;
            }
            fs::create_dir_all(&out)?;
            train_command(&config, &out, &envs, policy, &env_ids)?;
        }
        Command::Eval { common, envs, checkpoint } => {
            let (config, out) = resolve(&common, ExperimentConfig::generalization())?;
            fs::create_dir_all(&out)?;
            eval_command(&config, &out, &envs, &checkpoint)?;
        }
        Command::SingleEnvStudy { common, preset } => {
            let base = match preset {
                Preset::Full => ExperimentConfig::single_env(),
                Preset::Desk => ExperimentConfig::single_env_desk(),
            };
            let (config, out) = resolve(&common, base)?;
            if config.study != Study::SingleEnv {
                bail!("the configuration describes a {:?} study", config.study);
            }
            let result = run_single_env_study(&config, &out)?;
            for c in &result.crossings {
                let step = c.crossing_step.map_or_else(|| "never".to_string(), |s| s.to_string());
                println!("env {} {}: beats baseline from step {step}", c.env_id, c.policy);
            }
            print_summary(&result.records, config.eval.outlier_threshold)?;
        }
        Command::GeneralizationStudy { common, preset } => {
            let base = match preset {
                Preset::Full => ExperimentConfig::generalization(),
                Preset::Desk => ExperimentConfig::generalization_desk(),
            };
            let (config, out) = resolve(&common, base)?;
            if config.study != Study::Generalization {
                bail!("the configuration describes a {:?} study", config.study);
            }
            let result = run_generalization_study(&config, &out)?;
            print_summary(&result.records, config.eval.outlier_threshold)?;
        }
        Command::DpDemo { common } => {
            let (config, out) = resolve(&common, ExperimentConfig::dp_demo())?;
            let result = run_dp_demo(&config, &out)?;
            println!("solved bounds {:?}, gains {:?}", result.report.solved_bounds, result.report.gains);
            println!(
                "switch-type: {} ({} counterexamples); {} region slices in {}",
                result.report.switch_type,
                result.report.counterexamples.len(),
                result.report.slices.len(),
                out.display()
            );
        }
        Command::LrSweep { common } => {
            let (config, out) = resolve(&common, ExperimentConfig::single_env())?;
            for row in run_lr_sweep(&config, &out)? {
                let mark = if row.winner { "  <- best" } else { "" };
                println!("{} lr={:e} mean J0={:.4}{mark}", row.policy, row.learning_rate, row.mean_j0);
            }
        }
        Command::Summarize { records, threshold, bin_width, out } => {
            let records: Vec<EvalRecord> = read_csv(&records)?;
            print_summary(&records, threshold)?;
            if let Some(out) = out {
                fs::create_dir_all(&out)?;
                write_csv(&out.join("summary.csv"), &summarize(&records, threshold)?)?;
                write_csv(&out.join("histogram.csv"), &histogram(&records, bin_width, threshold))?;
            }
        }
    }
    Ok(())
}
