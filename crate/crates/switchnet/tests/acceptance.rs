//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run a subset by passing criterion numbers, e.g.
//! `cargo test -p switchnet --test acceptance -- 4 9`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use switchnet::config::ExperimentConfig;
use switchnet::eval::evaluate;
use switchnet::study::{run_dp_demo, run_generalization_study, run_single_env_study};
use switchnet_core::baselines::{maxweight_action, shortest_queue_action};
use switchnet_core::dp::{is_switch_type, PolicyTable, QueueSense};
use switchnet_core::env::{Encoding, EnvKind, Observation};
use switchnet_core::nn::{Activation, DenseLayer, InputTransform, Network, WeightMode};
use switchnet_core::policy::{
    perturbation_gap, sample_from_logits, CriticNet, MlpConfig, ObsBatch, PolicyKind, PolicyNet, StnConfig,
};
use switchnet_core::ppo::{gae_segment, ppo_loss, ppo_loss_backward, Minibatch, PpoConfig};
use switchnet_core::rng::{standard_normal, stream, uniform_open, Stream};
use switchnet_core::sampling::{build_env_set, CheckConfig};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    format!("{e:#}")
}

// 1. Switch-type invariant of the STN.

fn random_observation(rng: &mut Stream, rows: usize, width: usize) -> Observation {
    let data = (0..rows * width)
        .map(|c| if c % width == 0 { uniform_open(rng, 0.0, 60.0).floor() } else { uniform_open(rng, -3.0, 3.0) })
        .collect();
    Observation { num_rows: rows, width, data }
}

fn random_bump(rng: &mut Stream, width: usize) -> Vec<f64> {
    let scale = if rng.gen_bool(0.5) { 1.0 } else { 20.0 };
    let mut bump: Vec<f64> =
        (0..width).map(|_| if rng.gen_bool(0.5) { uniform_open(rng, 0.0, scale) } else { 0.0 }).collect();
    let k = rng.gen_range(0..width);
    bump[k] = uniform_open(rng, 0.0, scale);
    bump
}

fn switch_type_invariant() -> Result<String, String> {
    let mut rng = stream(101);
    let mut worst = f64::INFINITY;
    let (params, triples) = (100u64, 1000);
    for seed in 0..params {
        let k = 2 + (seed % 7) as usize;
        let encoding = [Encoding::Bare, Encoding::MultiPath, Encoding::SingleHop][(seed % 3) as usize];
        let config = StnConfig {
            first_bias_spread: uniform_open(&mut rng, 0.5, 6.0),
            output_scale: uniform_open(&mut rng, 1.0, 100.0),
            ..StnConfig::default()
        };
        let policy = PolicyNet::stn(k, encoding, &config, &mut stream(1000 + seed)).map_err(err)?;
        for _ in 0..triples {
            let obs = random_observation(&mut rng, k, encoding.width());
            let i = rng.gen_range(0..k);
            let bump = random_bump(&mut rng, encoding.width());
            let gap = perturbation_gap(&policy, &obs, i, &bump).map_err(err)?;
            worst = worst.min(gap);
            ensure(gap >= -1e-9, || format!("parameterization {seed}: pi(i) fell by {gap:e}"))?;
        }
    }
    Ok(format!("{params} parameterizations x {triples} triples, min change {worst:.3e}"))
}

// 2. Gradients against central finite differences.

const FD_STEP: f64 = 1e-6;
const FD_TOLERANCE: f64 = 1e-4;

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-10 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

fn central_difference(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn randn(rng: &mut Stream, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * standard_normal(rng)).collect()
}

/// Distance of the nearest ReLU-N pre-activation to a kink.
fn kink_margin(net: &Network, x: &[f64], rows: usize) -> f64 {
    let mut z: Vec<f64> = x.iter().map(|&v| net.input_transform.apply(v)).collect();
    let mut margin = f64::INFINITY;
    for (layer, activation) in net.layers.iter().zip(&net.activations) {
        let pre = layer.forward(&z, rows).unwrap();
        if let Activation::ReluN { bound } = activation {
            margin = pre.iter().fold(margin, |m, &v| m.min(v.abs()).min((v - bound).abs()));
        }
        z = pre.iter().map(|&v| activation.apply(v)).collect();
    }
    margin
}

/// Largest parameter/input relative error of `sum(upstream * net(x))`.
fn network_error(net: &mut Network, x: &[f64], rows: usize, rng: &mut Stream) -> f64 {
    let upstream = randn(rng, rows * net.out_dim(), 1.0);
    let objective = |n: &Network, input: &[f64]| -> f64 {
        n.forward(input, rows).unwrap().iter().zip(&upstream).map(|(a, b)| a * b).sum()
    };
    net.zero_grad();
    net.forward_train(x, rows).unwrap();
    let grad_input = net.backward(&upstream).unwrap();
    let analytic = net.grads();
    let mut probe = net.clone();
    let numeric = central_difference(&net.params(), |p| {
        probe.set_params(p).unwrap();
        objective(&probe, x)
    });
    let numeric_input = central_difference(x, |input| objective(net, input));
    relative_error(&analytic, &numeric).max(relative_error(&grad_input, &numeric_input))
}

fn small_obs(rng: &mut Stream, rows: usize) -> ObsBatch {
    let mut batch = ObsBatch::new(3, 2);
    for _ in 0..rows {
        let row: Vec<f64> = (0..6).map(|_| uniform_open(rng, 0.0, 12.0).floor()).collect();
        batch.push(&row).unwrap();
    }
    batch
}

fn small_policy(instance: u64) -> PolicyNet {
    if instance.is_multiple_of(2) {
        let config = StnConfig { hidden: vec![6; 4], output_scale: 3.0, ..StnConfig::default() };
        PolicyNet::stn(3, Encoding::Bare, &config, &mut stream(instance)).unwrap()
    } else {
        let config = MlpConfig { hidden: vec![8, 8], output_gain: 1.0, ..MlpConfig::default() };
        PolicyNet::mlp(3, Encoding::Bare, &config, &mut stream(instance)).unwrap()
    }
}

fn small_critic(seed: u64) -> CriticNet {
    CriticNet::new(3, Encoding::Bare, &MlpConfig { hidden: vec![8, 8], ..MlpConfig::critic() }, &mut stream(seed))
        .unwrap()
}

fn gradient_correctness() -> Result<String, String> {
    let mut rng = stream(102);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut record = |name: &'static str, e: f64| -> Result<(), String> {
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(e);
        ensure(e <= FD_TOLERANCE, || format!("{name}: relative error {e:e}"))
    };

    let (mut checked, mut instance) = (0, 0u64);
    while checked < 60 {
        instance += 1;
        let mode = if instance % 2 == 0 { WeightMode::Standard } else { WeightMode::Exponentiated };
        let activation =
            [Activation::Identity, Activation::Tanh, Activation::ReluN { bound: 1.0 }][(instance % 3) as usize];
        let (n_in, n_out, rows) = (1 + instance as usize % 5, 1 + instance as usize % 4, 1 + instance as usize % 3);
        let layer = DenseLayer::new(n_in, n_out, mode, randn(&mut rng, n_in * n_out, 0.7), randn(&mut rng, n_out, 0.5))
            .unwrap();
        let mut net = Network::new(InputTransform::Identity, vec![layer], vec![activation]).unwrap();
        let x = randn(&mut rng, rows * n_in, 1.0);
        if kink_margin(&net, &x, rows) < 1e-3 {
            continue;
        }
        checked += 1;
        record("layer", network_error(&mut net, &x, rows, &mut rng))?;
    }

    let (mut checked, mut instance) = (0, 0u64);
    while checked < 50 {
        instance += 1;
        let mut net =
            Network::monotone(3, &[6, 6, 5, 4], 1.0, 3.0, 5.0, InputTransform::Symlog, &mut stream(200 + instance))
                .unwrap();
        let x: Vec<f64> = (0..12).map(|_| uniform_open(&mut rng, -4.0, 6.0)).collect();
        if kink_margin(&net, &x, 4) < 1e-3 {
            continue;
        }
        checked += 1;
        record("stn", network_error(&mut net, &x, 4, &mut rng))?;
    }

    for instance in 0..50u64 {
        let mut net = Network::mlp(6, &[8, 7], 3, 0.5, InputTransform::Symlog, &mut stream(300 + instance)).unwrap();
        let x: Vec<f64> = (0..18).map(|_| uniform_open(&mut rng, -5.0, 5.0)).collect();
        record("mlp", network_error(&mut net, &x, 3, &mut rng))?;
    }

    for instance in 0..50u64 {
        let mut critic = small_critic(400 + instance);
        let obs = small_obs(&mut rng, 5);
        let upstream = randn(&mut rng, 5, 1.0);
        critic.net.zero_grad();
        critic.values_train(&obs).unwrap();
        critic.backward_values(&upstream).unwrap();
        let analytic = critic.net.grads();
        let mut probe = critic.clone();
        let numeric = central_difference(&critic.net.params(), |p| {
            probe.net.set_params(p).unwrap();
            probe.values(&obs).unwrap().iter().zip(&upstream).map(|(a, b)| a * b).sum()
        });
        record("critic", relative_error(&analytic, &numeric))?;
    }

    let config = PpoConfig::default();
    for instance in 0..60u64 {
        let mut policy = small_policy(500 + instance);
        let mut critic = small_critic(600 + instance);
        let observations = small_obs(&mut rng, 6);
        let logits = policy.logits(&observations).unwrap();
        let mut actions = Vec::new();
        let mut old_log_probs = Vec::new();
        for r in 0..6 {
            let (a, lp) = sample_from_logits(&logits[r * 3..(r + 1) * 3], &mut rng);
            actions.push(a);
            old_log_probs.push(lp + 0.3 * standard_normal(&mut rng));
        }
        let mb = Minibatch {
            observations,
            actions,
            old_log_probs,
            advantages: randn(&mut rng, 6, 1.0),
            value_targets: randn(&mut rng, 6, 2.0),
        };
        policy.net.zero_grad();
        critic.net.zero_grad();
        ppo_loss_backward(&mut policy, &mut critic, &mb, &config).map_err(err)?;
        let (analytic_policy, analytic_critic) = (policy.net.grads(), critic.net.grads());
        let mut probe = policy.clone();
        let numeric_policy = central_difference(&policy.net.params(), |p| {
            probe.net.set_params(p).unwrap();
            ppo_loss(&probe, &critic, &mb, &config).unwrap().loss
        });
        let mut probe = critic.clone();
        let numeric_critic = central_difference(&critic.net.params(), |p| {
            probe.net.set_params(p).unwrap();
            ppo_loss(&policy, &probe, &mb, &config).unwrap().loss
        });
        record(
            "ppo_loss",
            relative_error(&analytic_policy, &numeric_policy).max(relative_error(&analytic_critic, &numeric_critic)),
        )?;
    }
    let detail: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    Ok(format!("max relative error: {}", detail.join(", ")))
}

// 3. GAE against the direct sum.

fn gae_oracle() -> Result<String, String> {
    let mut rng = stream(103);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=50);
        let rewards: Vec<f64> = (0..n).map(|_| uniform_open(&mut rng, -2.0, 1.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| uniform_open(&mut rng, -5.0, 5.0)).collect();
        let bootstrap = uniform_open(&mut rng, -5.0, 5.0);
        let gamma = uniform_open(&mut rng, 0.5, 1.0);
        let lambda = uniform_open(&mut rng, 0.0, 1.0);
        let (adv, _) = gae_segment(&rewards, &values, &vec![false; n], bootstrap, gamma, lambda);
        for t in 0..n {
            let next = |s: usize| if s + 1 < n { values[s + 1] } else { bootstrap };
            let direct: f64 = (t..n)
                .map(|s| (gamma * lambda).powi((s - t) as i32) * (rewards[s] + gamma * next(s) - values[s]))
                .sum();
            worst = worst.max((adv[t] - direct).abs());
        }
    }
    ensure(worst <= 1e-8, || format!("max deviation {worst:e}"))?;
    Ok(format!("100 trajectories, max deviation {worst:.1e}"))
}

// 4. DP demonstration.

fn dp_demonstration() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let result = run_dp_demo(&ExperimentConfig::dp_demo(), dir.path()).map_err(err)?;
    let table = &result.sequence.table;
    ensure(table.q_bound == 20, || format!("region bound {}", table.q_bound))?;
    ensure(result.report.switch_type && result.report.counterexamples.is_empty(), || {
        format!("{} switch-type counterexamples", result.report.counterexamples.len())
    })?;
    for y in [[1, 1], [2, 2]] {
        for q1 in 0..=20 {
            for q2 in 0..=20 {
                let action = table.get([q1, q2], y).unwrap();
                let longest_ok = match q1.cmp(&q2) {
                    std::cmp::Ordering::Greater => action == 0,
                    std::cmp::Ordering::Less => action == 1,
                    std::cmp::Ordering::Equal => true,
                };
                ensure(longest_ok, || format!("y={y:?}, q=({q1},{q2}) serves queue {}", action + 1))?;
            }
        }
    }
    for q1 in 0..=20 {
        for q2 in 0..=20 {
            if table.get([q1, q2], [1, 1]) == Some(0) {
                ensure(table.get([q1, q2], [2, 1]) == Some(0), || format!("containment fails at q=({q1},{q2})"))?;
            }
        }
    }
    ensure(result.report.slices.len() == 9, || format!("{} slices", result.report.slices.len()))?;
    Ok(format!(
        "converged at bounds {:?}, gain {:.5}, 0 counterexamples, diagonal and containment hold",
        result.sequence.solved,
        result.sequence.gains.last().unwrap()
    ))
}

// 5. Baselines and the non-triviality witness.

fn baseline_switch_type() -> Result<String, String> {
    let y_values = [vec![0, 1, 2, 3], vec![0, 1, 2, 3]];
    let maxweight = PolicyTable::from_policy(&maxweight_action, 20, y_values.clone());
    let (ok, cex) = is_switch_type(&maxweight, QueueSense::Positive);
    ensure(ok, || format!("MaxWeight: {} counterexamples", cex.len()))?;
    let shortest = PolicyTable::from_policy(&shortest_queue_action, 20, y_values);
    let (ok, cex) = is_switch_type(&shortest, QueueSense::Negative);
    ensure(ok, || format!("Shortest-Queue: {} counterexamples", cex.len()))?;

    let mut rng = stream(105);
    let config = MlpConfig { output_gain: 1.0, ..MlpConfig::default() };
    for seed in 0..20u64 {
        let policy = PolicyNet::mlp(4, Encoding::Bare, &config, &mut stream(seed)).map_err(err)?;
        for _ in 0..1000 {
            let obs = random_observation(&mut rng, 4, 2);
            let i = rng.gen_range(0..4);
            let bump = random_bump(&mut rng, 2);
            let gap = perturbation_gap(&policy, &obs, i, &bump).map_err(err)?;
            if gap < -1e-6 {
                return Ok(format!("both baselines pass on 21x21x4x4 grids; MLP witness with pi(i) change {gap:.3e}"));
            }
        }
    }
    Err("no switch-type violation found for random MLPs".into())
}

// 6. Single-environment training.

fn single_env_training() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let config = ExperimentConfig::single_env_desk();
    let result = run_single_env_study(&config, dir.path()).map_err(err)?;
    let mut earlier = 0;
    let mut lines = Vec::new();
    for env in &result.envs.envs {
        let stn = result.crossing(PolicyKind::Stn, env.id).and_then(|c| c.crossing_step);
        let mlp = result.crossing(PolicyKind::Mlp, env.id).and_then(|c| c.crossing_step);
        if matches!((stn, mlp), (Some(s), Some(m)) if s < m) || matches!((stn, mlp), (Some(_), None)) {
            earlier += 1;
        }
        let fmt = |s: Option<u64>| s.map_or("never".to_string(), |s| s.to_string());
        lines.push(format!("env {}: STN {} vs MLP {}", env.id, fmt(stn), fmt(mlp)));
    }
    let stn_j0: Vec<f64> = result.records_for(PolicyKind::Stn).map(|r| r.j0).collect();
    let worst = stn_j0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let detail = format!("crossings [{}]; STN eval J0 {:?}", lines.join("; "), rounded(&stn_j0));
    ensure(stn_j0.len() == 3, || format!("{} STN evaluations; {detail}", stn_j0.len()))?;
    ensure(earlier >= 2, || format!("STN earlier on {earlier}/3; {detail}"))?;
    ensure(worst <= 1.10, || format!("STN J0 {worst:.3} > 1.10; {detail}"))?;
    Ok(format!("STN earlier on {earlier}/3; {detail}"))
}

fn rounded(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| (v * 1000.0).round() / 1000.0).collect()
}

// 7. Untrained STN on multi-path environments.

fn untrained_multipath() -> Result<String, String> {
    let config = ExperimentConfig::default();
    let set = build_env_set(EnvKind::MultiPath, 5, 7, &CheckConfig::default()).map_err(err)?;
    let policy = PolicyNet::stn(8, Encoding::MultiPath, &StnConfig::default(), &mut stream(7)).map_err(err)?;
    let mut j0 = Vec::new();
    for env in &set.envs {
        let (record, _) = evaluate(&policy, env, &config.eval, config.eval_seed(), false).map_err(err)?;
        ensure(record.j.is_finite() && !record.overflowed, || format!("env {} overflowed", env.id))?;
        ensure(record.j0 <= 3.0, || format!("env {} J0 {:.3}", env.id, record.j0))?;
        j0.push(record.j0);
    }
    Ok(format!("J0 {:?}, no overflow", rounded(&j0)))
}

// 8. Generalization.

fn generalization() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let config = ExperimentConfig::generalization_desk();
    let result = run_generalization_study(&config, dir.path()).map_err(err)?;
    let test_row = |policy| {
        result
            .summary
            .iter()
            .find(|r| r.policy == policy && r.split == switchnet::metrics::Split::Test)
            .copied()
            .ok_or_else(|| format!("no {policy} test summary"))
    };
    let (stn, mlp) = (test_row(PolicyKind::Stn)?, test_row(PolicyKind::Mlp)?);
    let detail = format!(
        "test J0 mean STN {:.3} (omitted {}) vs MLP {:.3} (omitted {})",
        stn.mean, stn.omitted, mlp.mean, mlp.omitted
    );
    ensure(stn.count == 17 && mlp.count == 17, || format!("split sizes {} / {}", stn.count, mlp.count))?;
    ensure(stn.mean < mlp.mean, || detail.clone())?;
    ensure(stn.omitted <= mlp.omitted, || detail.clone())?;
    Ok(detail)
}

// 9. Determinism across runs and thread counts.

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "csv") {
            files.insert(path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap());
        }
    }
    files
}

fn small(mut config: ExperimentConfig, count: usize, train: usize) -> ExperimentConfig {
    config.seed = 11;
    config.envs.count = count;
    config.envs.train_count = train;
    config.envs.test_count = count - train;
    config.envs.check.traj_len = 3000;
    config.training.steps_per_env = 4000;
    config.eval.traj_len = 2000;
    config
}

fn determinism() -> Result<String, String> {
    let studies: [(&str, ExperimentConfig); 3] = [
        ("single-env", small(ExperimentConfig::single_env(), 2, 2)),
        ("generalization", small(ExperimentConfig::generalization(), 4, 1)),
        ("dp-demo", ExperimentConfig::dp_demo()),
    ];
    let mut compared = 0;
    for (name, config) in studies {
        let mut outputs = Vec::new();
        for threads in [1, 3] {
            let dir = tempfile::tempdir().map_err(err)?;
            let config = ExperimentConfig { threads: Some(threads), ..config.clone() };
            match name {
                "single-env" => run_single_env_study(&config, dir.path()).map(|_| ()),
                "generalization" => run_generalization_study(&config, dir.path()).map(|_| ()),
                _ => run_dp_demo(&config, dir.path()).map(|_| ()),
            }
            .map_err(err)?;
            outputs.push(csv_files(dir.path()));
        }
        ensure(!outputs[0].is_empty(), || format!("{name}: no CSV output"))?;
        ensure(outputs[0] == outputs[1], || {
            let differing: Vec<&String> =
                outputs[0].keys().filter(|k| outputs[0].get(*k) != outputs[1].get(*k)).collect();
            format!("{name}: outputs differ in {differing:?}")
        })?;
        compared += outputs[0].len();
    }
    Ok(format!("{compared} CSV files byte-identical across runs with 1 and 3 threads"))
}

fn main() {
    let criteria: [(u32, &str, Check); 9] = [
        (1, "switch-type invariant", switch_type_invariant),
        (2, "gradient correctness", gradient_correctness),
        (3, "GAE oracle equivalence", gae_oracle),
        (4, "DP demonstration", dp_demonstration),
        (5, "baseline switch-type", baseline_switch_type),
        (6, "single-environment training", single_env_training),
        (7, "untrained STN on multi-path", untrained_multipath),
        (8, "generalization", generalization),
        (9, "determinism", determinism),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{id}] {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{id}] {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
