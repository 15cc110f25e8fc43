//! The experiment drivers: environment sampling, single-environment and
//! multi-environment training studies, the DP demonstration and the
//! learning-rate sweep.
//!
//! Independent jobs run on a rayon pool. Every job owns its seeds and all
//! results are merged in job order, so outputs do not depend on the number
//! of threads.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use switchnet_core::dp::{
    approximate_mdp_sequence, export_decision_regions, is_switch_type, Counterexample, QueueSense, SequenceResult,
};
use switchnet_core::env::{Encoding, EnvKind};
use switchnet_core::policy::PolicyKind;
use switchnet_core::ppo::{train_with_checkpoints, TrainEnv, TrainLogRow, TrainOutcome};
use switchnet_core::rng::derive_seed;
use switchnet_core::sampling::{
    candidate, stabilizability_check, Baseline, CheckConfig, EnvSet, SampledEnv, SetBuilder,
};

use crate::config::{ExperimentConfig, Study};
use crate::eval::{evaluate, normalized, TrajectoryRow};
use crate::io::{write_csv, write_envs_csv, write_json, write_regions_csv, Checkpoint};
use crate::metrics::{crossing_step, histogram, summarize, EvalRecord, SummaryRow};

/// Candidates checked per parallel round while building an environment set.
const SAMPLING_CHUNK: u64 = 16;

pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build()?)
}

/// Parallel version of the sequential set builder with identical output.
pub fn build_env_set(kind: EnvKind, count: usize, master_seed: u64, check: &CheckConfig) -> Result<EnvSet> {
    let baseline = Baseline::for_kind(kind);
    let mut builder = SetBuilder::new(kind, count, master_seed, check)?;
    let mut next = 0;
    loop {
        let checked = (next..next + SAMPLING_CHUNK)
            .into_par_iter()
            .map(|index| {
                let params = candidate(kind, master_seed, index);
                let (accepted, cost) = stabilizability_check(&params, baseline, check)?;
                Ok((params, accepted, cost))
            })
            .collect::<Result<Vec<_>>>()?;
        for (params, accepted, cost) in checked {
            if builder.push(params, accepted, cost)? {
                return Ok(builder.finish());
            }
        }
        next += SAMPLING_CHUNK;
    }
}

/// Samples the configured environment set and writes `envs.csv` and
/// `envs.json` into `out`.
pub fn sample_envs(config: &ExperimentConfig, out: &Path) -> Result<EnvSet> {
    fs::create_dir_all(out)?;
    let pool = thread_pool(config.threads)?;
    let set =
        pool.install(|| build_env_set(config.envs.kind, config.envs.count, config.env_seed(), &config.envs.check))?;
    write_envs_csv(&out.join("envs.csv"), &set)?;
    write_json(&out.join("envs.json"), &set)?;
    Ok(set)
}

/// One row of `train_log.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogCsvRow {
    pub policy: PolicyKind,
    pub step: u64,
    pub env_id: usize,
    pub moving_avg_cost: f64,
    pub loss: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
    pub learning_rate: f64,
}

/// One point of a training curve: `ln(moving_avg_cost / J_baseline)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub policy: PolicyKind,
    pub env_id: usize,
    pub step: u64,
    pub log_normalized_cost: f64,
}

/// First step at which the moving average beats the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingRow {
    pub env_id: usize,
    pub policy: PolicyKind,
    pub crossing_step: Option<u64>,
    pub final_log_normalized_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub policy: PolicyKind,
    pub env_ids: String,
    pub stage: String,
    pub message: String,
}

/// A full window of costs must be in the moving average before a crossing
/// counts.
fn min_crossing_step(config: &ExperimentConfig) -> u64 {
    config.training.ppo.moving_avg_window as u64
}

/// Trains one policy of architecture `kind` on `envs`. With `checkpoints`
/// set, periodic checkpoints go to `<dir>/<prefix>_batch<N>.json`.
pub fn train_policy(
    envs: &[&SampledEnv],
    kind: PolicyKind,
    encoding: Encoding,
    config: &ExperimentConfig,
    seed: u64,
    checkpoints: Option<(&Path, &str)>,
) -> Result<TrainOutcome> {
    let train_envs: Vec<TrainEnv> =
        envs.iter().map(|e| TrainEnv { env_id: e.id, params: e.params.clone(), cost_scale: e.baseline_cost }).collect();
    let ppo = config.training.ppo_for(kind, envs.len());
    let ids: Vec<usize> = envs.iter().map(|e| e.id).collect();
    let mut on_checkpoint = |c: switchnet_core::ppo::Checkpoint<'_>| -> switchnet_core::Result<()> {
        if let Some((dir, prefix)) = checkpoints {
            let path = dir.join(format!("{prefix}_batch{}.json", c.batch));
            // A failed periodic checkpoint should not abort the run.
            if let Err(e) = Checkpoint::new(c.policy, c.critic, ids.clone(), c.batch, c.steps).save(&path) {
                eprintln!("warning: could not write {}: {e:#}", path.display());
            }
        }
        Ok(())
    };
    Ok(train_with_checkpoints(&train_envs, kind, encoding, &config.training.networks, &ppo, seed, &mut on_checkpoint)?)
}

/// Result of one training job and the evaluations of its policy.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub policy: PolicyKind,
    pub train_env_ids: Vec<usize>,
    pub log: Vec<TrainLogRow>,
    pub diverged: Option<String>,
    pub failure: Option<String>,
    pub records: Vec<EvalRecord>,
    pub trajectories: Vec<TrajectoryRow>,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub envs: EnvSet,
    pub runs: Vec<RunResult>,
    pub records: Vec<EvalRecord>,
    pub summary: Vec<SummaryRow>,
    pub crossings: Vec<CrossingRow>,
}

impl StudyResult {
    pub fn records_for(&self, policy: PolicyKind) -> impl Iterator<Item = &EvalRecord> {
        self.records.iter().filter(move |r| r.policy == policy)
    }

    pub fn crossing(&self, policy: PolicyKind, env_id: usize) -> Option<&CrossingRow> {
        self.crossings.iter().find(|c| c.policy == policy && c.env_id == env_id)
    }
}

fn ids_label(ids: &[usize]) -> String {
    ids.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

fn crossings_of(runs: &[RunResult], envs: &EnvSet, min_step: u64) -> Vec<CrossingRow> {
    let mut rows = Vec::new();
    for run in runs {
        for &env_id in &run.train_env_ids {
            let baseline = envs.envs[env_id].baseline_cost;
            let log: Vec<(u64, f64)> =
                run.log.iter().filter(|r| r.env_id == env_id).map(|r| (r.step, r.moving_avg_cost)).collect();
            let last = log.last().map_or(f64::NAN, |&(_, cost)| normalized(cost, baseline).ln());
            rows.push(CrossingRow {
                env_id,
                policy: run.policy,
                crossing_step: crossing_step(&log, baseline, min_step),
                final_log_normalized_cost: last,
            });
        }
    }
    rows.sort_by_key(|r| (r.env_id, r.policy as u8));
    rows
}

fn write_study_outputs(out: &Path, config: &ExperimentConfig, result: &StudyResult) -> Result<()> {
    write_envs_csv(&out.join("envs.csv"), &result.envs)?;
    write_json(&out.join("envs.json"), &result.envs)?;
    fs::write(out.join("config.toml"), config.to_toml()?)?;
    let mut log_rows = Vec::new();
    let mut curve = Vec::new();
    let mut trajectories = Vec::new();
    let mut failures = Vec::new();
    for run in &result.runs {
        for r in &run.log {
            log_rows.push(TrainLogCsvRow {
                policy: run.policy,
                step: r.step,
                env_id: r.env_id,
                moving_avg_cost: r.moving_avg_cost,
                loss: r.loss,
                clip_fraction: r.clip_fraction,
                entropy: r.entropy,
                learning_rate: r.learning_rate,
            });
            let baseline = result.envs.envs[r.env_id].baseline_cost;
            curve.push(CurveRow {
                policy: run.policy,
                env_id: r.env_id,
                step: r.step,
                log_normalized_cost: normalized(r.moving_avg_cost, baseline).ln(),
            });
        }
        trajectories.extend_from_slice(&run.trajectories);
        let label = ids_label(&run.train_env_ids);
        if let Some(msg) = &run.diverged {
            failures.push(FailureRow {
                policy: run.policy,
                env_ids: label.clone(),
                stage: "diverged".into(),
                message: msg.clone(),
            });
        }
        if let Some(msg) = &run.failure {
            failures.push(FailureRow {
                policy: run.policy,
                env_ids: label,
                stage: "failed".into(),
                message: msg.clone(),
            });
        }
    }
    write_csv(&out.join("train_log.csv"), &log_rows)?;
    write_csv(&out.join("training_curve.csv"), &curve)?;
    write_csv(&out.join("crossings.csv"), &result.crossings)?;
    write_csv(&out.join("eval_records.csv"), &result.records)?;
    write_csv(&out.join("eval_trajectories.csv"), &trajectories)?;
    write_csv(&out.join("summary.csv"), &result.summary)?;
    write_csv(
        &out.join("histogram.csv"),
        &histogram(&result.records, config.eval.histogram_bin_width, config.eval.outlier_threshold),
    )?;
    write_csv(&out.join("failures.csv"), &failures)?;
    Ok(())
}

/// A training job: one architecture on a list of environments, evaluated on
/// `eval_envs`.
struct Job<'a> {
    policy: PolicyKind,
    train: Vec<&'a SampledEnv>,
    seed: u64,
    prefix: String,
}

fn run_job(
    job: &Job<'_>,
    eval_envs: &[SampledEnv],
    train_ids: &[usize],
    config: &ExperimentConfig,
    encoding: Encoding,
    checkpoint_dir: &Path,
    pool: &rayon::ThreadPool,
) -> RunResult {
    let train_env_ids: Vec<usize> = job.train.iter().map(|e| e.id).collect();
    let mut result = RunResult {
        policy: job.policy,
        train_env_ids: train_env_ids.clone(),
        log: Vec::new(),
        diverged: None,
        failure: None,
        records: Vec::new(),
        trajectories: Vec::new(),
    };
    let outcome =
        match train_policy(&job.train, job.policy, encoding, config, job.seed, Some((checkpoint_dir, &job.prefix))) {
            Ok(outcome) => outcome,
            Err(e) => {
                result.failure = Some(format!("{e:#}"));
                return result;
            }
        };
    let final_path = checkpoint_dir.join(format!("{}.json", job.prefix));
    let batches = outcome.log.len() as u64 / train_env_ids.len().max(1) as u64;
    if let Err(e) =
        Checkpoint::new(&outcome.policy, &outcome.critic, train_env_ids, batches, outcome.steps).save(&final_path)
    {
        eprintln!("warning: could not write {}: {e:#}", final_path.display());
    }
    let evaluated = pool.install(|| {
        eval_envs
            .par_iter()
            .map(|env| evaluate(&outcome.policy, env, &config.eval, config.eval_seed(), train_ids.contains(&env.id)))
            .collect::<Vec<_>>()
    });
    for item in evaluated {
        match item {
            Ok((record, rows)) => {
                result.records.push(record);
                result.trajectories.extend(rows);
            }
            Err(e) => {
                result.failure = Some(format!("evaluation: {e:#}"));
            }
        }
    }
    result.log = outcome.log;
    result.diverged = outcome.diverged;
    result
}

fn finish_study(config: &ExperimentConfig, envs: EnvSet, runs: Vec<RunResult>, out: &Path) -> Result<StudyResult> {
    let records: Vec<EvalRecord> = runs.iter().flat_map(|r| r.records.iter().copied()).collect();
    let mut records = records;
    records.sort_by_key(|r| (r.env_id, r.policy as u8));
    let summary = if records.is_empty() { Vec::new() } else { summarize(&records, config.eval.outlier_threshold)? };
    let crossings = crossings_of(&runs, &envs, min_crossing_step(config));
    let result = StudyResult { envs, runs, records, summary, crossings };
    write_study_outputs(out, config, &result)?;
    Ok(result)
}

/// Trains one policy per architecture and environment, each on its own
/// environment, and evaluates it there.
pub fn run_single_env_study(config: &ExperimentConfig, out: &Path) -> Result<StudyResult> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let pool = thread_pool(config.threads)?;
    let envs =
        pool.install(|| build_env_set(config.envs.kind, config.envs.count, config.env_seed(), &config.envs.check))?;
    run_single_env_on(config, envs, out, &pool)
}

fn run_single_env_on(
    config: &ExperimentConfig,
    envs: EnvSet,
    out: &Path,
    pool: &rayon::ThreadPool,
) -> Result<StudyResult> {
    let checkpoint_dir = out.join("checkpoints");
    fs::create_dir_all(&checkpoint_dir)?;
    let encoding = config.encoding();
    let jobs: Vec<Job<'_>> = envs
        .envs
        .iter()
        .flat_map(|env| {
            config.training.architectures.iter().map(move |&policy| Job {
                policy,
                train: vec![env],
                seed: derive_seed(config.train_seed(), env.id as u64),
                prefix: format!("{policy}_env{}", env.id),
            })
        })
        .collect();
    let runs: Vec<RunResult> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let env = job.train[0];
                run_job(job, std::slice::from_ref(env), &[env.id], config, encoding, &checkpoint_dir, pool)
            })
            .collect()
    });
    finish_study(config, envs, runs, out)
}

/// Trains one policy per architecture on the training split and evaluates it
/// on every environment.
pub fn run_generalization_study(config: &ExperimentConfig, out: &Path) -> Result<StudyResult> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let checkpoint_dir = out.join("checkpoints");
    fs::create_dir_all(&checkpoint_dir)?;
    let pool = thread_pool(config.threads)?;
    let envs =
        pool.install(|| build_env_set(config.envs.kind, config.envs.count, config.env_seed(), &config.envs.check))?;
    let encoding = config.encoding();
    let train: Vec<&SampledEnv> = envs.envs[..config.envs.train_count].iter().collect();
    let train_ids: Vec<usize> = train.iter().map(|e| e.id).collect();
    let jobs: Vec<Job<'_>> = config
        .training
        .architectures
        .iter()
        .map(|&policy| Job { policy, train: train.clone(), seed: config.train_seed(), prefix: policy.to_string() })
        .collect();
    let runs: Vec<RunResult> = pool.install(|| {
        jobs.par_iter()
            .map(|job| run_job(job, &envs.envs, &train_ids, config, encoding, &checkpoint_dir, &pool))
            .collect()
    });
    finish_study(config, envs, runs, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub bound: u64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpReport {
    pub solved_bounds: Vec<u64>,
    pub gains: Vec<f64>,
    pub region_bound: u64,
    pub switch_type: bool,
    pub counterexamples: Vec<Counterexample>,
    pub slices: Vec<[u64; 2]>,
}

#[derive(Debug, Clone)]
pub struct DpDemoResult {
    pub sequence: SequenceResult,
    pub report: DpReport,
}

/// Solves the truncated-MDP sequence, checks the switch-type property and
/// writes one region grid per capacity slice.
pub fn run_dp_demo(config: &ExperimentConfig, out: &Path) -> Result<DpDemoResult> {
    fs::create_dir_all(out)?;
    let sequence =
        approximate_mdp_sequence(&config.dp.spec, &config.dp.sequence).context("approximate MDP sequence")?;
    let (switch_type, counterexamples) = is_switch_type(&sequence.table, QueueSense::Positive);
    let mut slices = Vec::new();
    for &y1 in &sequence.table.y_values[0] {
        for &y2 in &sequence.table.y_values[1] {
            let cells = export_decision_regions(&sequence.table, [y1, y2])?;
            write_regions_csv(&out.join(format!("regions_y{y1}_{y2}.csv")), &cells)?;
            slices.push([y1, y2]);
        }
    }
    let gains: Vec<GainRow> =
        sequence.solved.iter().zip(&sequence.gains).map(|(&bound, &gain)| GainRow { bound, gain }).collect();
    write_csv(&out.join("dp_gains.csv"), &gains)?;
    let report = DpReport {
        solved_bounds: sequence.solved.clone(),
        gains: sequence.gains.clone(),
        region_bound: sequence.table.q_bound,
        switch_type,
        counterexamples,
        slices,
    };
    write_json(&out.join("dp_report.json"), &report)?;
    Ok(DpDemoResult { sequence, report })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub policy: PolicyKind,
    pub learning_rate: f64,
    pub mean_j0: f64,
    pub winner: bool,
}

/// Re-runs the single-environment study for every configured learning rate
/// on one shared environment set. The winner per architecture has the
/// lowest mean evaluation `J0`.
pub fn run_lr_sweep(config: &ExperimentConfig, out: &Path) -> Result<Vec<SweepRow>> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let pool = thread_pool(config.threads)?;
    let envs =
        pool.install(|| build_env_set(config.envs.kind, config.envs.count, config.env_seed(), &config.envs.check))?;
    let mut rows = Vec::new();
    for (i, &lr) in config.sweep.learning_rates.iter().enumerate() {
        let mut run_config = config.clone();
        run_config.study = Study::SingleEnv;
        run_config.training.stn_learning_rate = lr;
        run_config.training.mlp_learning_rate = lr;
        let dir: PathBuf = out.join(format!("lr_{i}"));
        fs::create_dir_all(&dir)?;
        let result = run_single_env_on(&run_config, envs.clone(), &dir, &pool)?;
        for &policy in &config.training.architectures {
            let values: Vec<f64> = result.records_for(policy).map(|r| r.j0).collect();
            let mean_j0 =
                if values.is_empty() { f64::INFINITY } else { values.iter().sum::<f64>() / values.len() as f64 };
            rows.push(SweepRow { policy, learning_rate: lr, mean_j0, winner: false });
        }
    }
    for &policy in &config.training.architectures {
        let best = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.policy == policy)
            .min_by(|a, b| a.1.mean_j0.total_cmp(&b.1.mean_j0))
            .map(|(i, _)| i);
        if let Some(i) = best {
            rows[i].winner = true;
        }
    }
    write_csv(&out.join("sweep.csv"), &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use switchnet_core::sampling::build_env_set as build_sequential;

    #[test]
    fn parallel_env_set_matches_sequential() {
        let check = CheckConfig { traj_len: 2000, ..CheckConfig::default() };
        let parallel =
            thread_pool(Some(2)).unwrap().install(|| build_env_set(EnvKind::SingleHop, 6, 8, &check)).unwrap();
        assert_eq!(parallel, build_sequential(EnvKind::SingleHop, 6, 8, &check).unwrap());
    }

    #[test]
    fn crossings_respect_the_window() {
        let envs = EnvSet {
            kind: EnvKind::SingleHop,
            master_seed: 0,
            envs: vec![SampledEnv {
                id: 0,
                params: switchnet_core::env::EnvParams::single_hop(vec![0.1], vec![1.0], 0).unwrap(),
                baseline_cost: 1.0,
            }],
        };
        let row = |step, cost| TrainLogRow {
            step,
            env_id: 0,
            moving_avg_cost: cost,
            loss: 0.0,
            clip_fraction: 0.0,
            entropy: 0.0,
            learning_rate: 1e-3,
        };
        let run = RunResult {
            policy: PolicyKind::Stn,
            train_env_ids: vec![0],
            log: vec![row(2000, 0.5), row(4000, 2.0), row(6000, 0.8)],
            diverged: None,
            failure: None,
            records: Vec::new(),
            trajectories: Vec::new(),
        };
        let rows = crossings_of(&[run], &envs, 5000);
        assert_eq!(rows[0].crossing_step, Some(6000));
        assert!((rows[0].final_log_normalized_cost - 0.8f64.ln()).abs() < 1e-15);
    }
}
