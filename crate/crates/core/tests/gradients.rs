//! Analytic gradients against central finite differences.

use switchnet_core::env::Encoding;
use switchnet_core::nn::{Activation, DenseLayer, InputTransform, Network, WeightMode};
use switchnet_core::policy::{CriticNet, MlpConfig, ObsBatch, PolicyNet, StnConfig};
use switchnet_core::ppo::{ppo_loss, ppo_loss_backward, Minibatch, PpoConfig};
use switchnet_core::rng::{standard_normal, stream, uniform_open, Stream};

const STEP: f64 = 1e-6;
const TOLERANCE: f64 = 1e-4;

/// `||a - b|| / max(||a||, ||b||)`, or the absolute error when both vanish.
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
            probe[i] = orig + STEP;
            let up = f(&probe);
            probe[i] = orig - STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn randn(rng: &mut Stream, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * standard_normal(rng)).collect()
}

/// Checks parameter and input gradients of `net` for the scalar
/// `sum(upstream * net(x))`.
fn check_network(net: &mut Network, x: &[f64], rows: usize, rng: &mut Stream) -> (f64, f64) {
    let upstream = randn(rng, rows * net.out_dim(), 1.0);
    let objective = |n: &Network, input: &[f64]| -> f64 {
        n.forward(input, rows).unwrap().iter().zip(&upstream).map(|(a, b)| a * b).sum()
    };
    net.zero_grad();
    net.forward_train(x, rows).unwrap();
    let grad_input = net.backward(&upstream).unwrap();
    let analytic = net.grads();
    let params = net.params();
    let mut probe = net.clone();
    let numeric = central_difference(&params, |p| {
        probe.set_params(p).unwrap();
        objective(&probe, x)
    });
    let numeric_input = central_difference(x, |input| objective(net, input));
    (relative_error(&analytic, &numeric), relative_error(&grad_input, &numeric_input))
}

#[test]
fn dense_layers_match_finite_differences() {
    let mut rng = stream(1);
    for instance in 0..60 {
        let mode = if instance % 2 == 0 { WeightMode::Standard } else { WeightMode::Exponentiated };
        let (n_in, n_out, rows) = (1 + instance % 5, 1 + instance % 4, 1 + instance % 3);
        let weights = randn(&mut rng, n_in * n_out, 0.7);
        let bias = randn(&mut rng, n_out, 0.5);
        let layer = DenseLayer::new(n_in, n_out, mode, weights, bias).unwrap();
        let mut net = Network::new(InputTransform::Identity, vec![layer], vec![Activation::Identity]).unwrap();
        let x = randn(&mut rng, rows * n_in, 1.0);
        let (param_err, input_err) = check_network(&mut net, &x, rows, &mut rng);
        assert!(param_err <= TOLERANCE, "instance {instance}: parameter error {param_err}");
        assert!(input_err <= TOLERANCE, "instance {instance}: input error {input_err}");
    }
}

#[test]
fn activations_match_finite_differences() {
    let mut rng = stream(2);
    for activation in [Activation::Tanh, Activation::ReluN { bound: 1.0 }, Activation::ReluN { bound: 2.5 }] {
        for _ in 0..20 {
            let layer =
                DenseLayer::new(3, 4, WeightMode::Standard, randn(&mut rng, 12, 0.8), randn(&mut rng, 4, 0.5)).unwrap();
            let mut net = Network::new(InputTransform::Identity, vec![layer], vec![activation]).unwrap();
            let x = randn(&mut rng, 6, 1.0);
            let (param_err, input_err) = check_network(&mut net, &x, 2, &mut rng);
            assert!(param_err <= TOLERANCE && input_err <= TOLERANCE, "{activation:?}: {param_err} {input_err}");
        }
    }
}

/// Smallest distance of any ReLU-N pre-activation to a kink. Finite
/// differences are meaningless when a parameter step crosses one.
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

#[test]
fn composed_monotone_network_matches_finite_differences() {
    let mut rng = stream(3);
    let mut checked = 0;
    let mut instance = 0;
    while checked < 50 {
        instance += 1;
        let mut net =
            Network::monotone(3, &[6, 6, 5, 4], 1.0, 3.0, 5.0, InputTransform::Symlog, &mut stream(100 + instance))
                .unwrap();
        let x: Vec<f64> = (0..12).map(|_| uniform_open(&mut rng, -4.0, 6.0)).collect();
        if kink_margin(&net, &x, 4) < 1e-3 {
            continue;
        }
        checked += 1;
        let (param_err, input_err) = check_network(&mut net, &x, 4, &mut rng);
        assert!(param_err <= TOLERANCE, "instance {instance}: parameter error {param_err}");
        assert!(input_err <= TOLERANCE, "instance {instance}: input error {input_err}");
    }
    assert!(instance < 200, "too many instances sat on a kink");
}

#[test]
fn composed_mlp_matches_finite_differences() {
    let mut rng = stream(4);
    for instance in 0..50 {
        let transform = if instance % 2 == 0 { InputTransform::Identity } else { InputTransform::Symlog };
        let mut net = Network::mlp(6, &[8, 7], 3, 0.5, transform, &mut stream(200 + instance)).unwrap();
        let x: Vec<f64> = (0..18).map(|_| uniform_open(&mut rng, -5.0, 5.0)).collect();
        let (param_err, input_err) = check_network(&mut net, &x, 3, &mut rng);
        assert!(param_err <= TOLERANCE, "instance {instance}: parameter error {param_err}");
        assert!(input_err <= TOLERANCE, "instance {instance}: input error {input_err}");
    }
}

fn small_stn(seed: u64) -> PolicyNet {
    let config = StnConfig { hidden: vec![6, 6, 6, 6], output_scale: 3.0, ..StnConfig::default() };
    PolicyNet::stn(3, Encoding::Bare, &config, &mut stream(seed)).unwrap()
}

fn small_mlp(seed: u64) -> PolicyNet {
    let config = MlpConfig { hidden: vec![8, 8], output_gain: 1.0, ..MlpConfig::default() };
    PolicyNet::mlp(3, Encoding::Bare, &config, &mut stream(seed)).unwrap()
}

fn small_critic(seed: u64) -> CriticNet {
    let config = MlpConfig { hidden: vec![8, 8], ..MlpConfig::critic() };
    CriticNet::new(3, Encoding::Bare, &config, &mut stream(seed)).unwrap()
}

fn random_obs(rng: &mut Stream, rows: usize) -> ObsBatch {
    let mut batch = ObsBatch::new(3, 2);
    for _ in 0..rows {
        let row: Vec<f64> = (0..6).map(|_| libm::floor(uniform_open(rng, 0.0, 12.0))).collect();
        batch.push(&row).unwrap();
    }
    batch
}

#[test]
fn policy_logits_match_finite_differences() {
    let mut rng = stream(5);
    for instance in 0..50u64 {
        let mut policy = if instance % 2 == 0 { small_stn(instance) } else { small_mlp(instance) };
        let obs = random_obs(&mut rng, 4);
        let upstream = randn(&mut rng, 12, 1.0);
        policy.net.zero_grad();
        policy.logits_train(&obs).unwrap();
        policy.backward_logits(&upstream).unwrap();
        let analytic = policy.net.grads();
        let mut probe = policy.clone();
        let numeric = central_difference(&policy.net.params(), |p| {
            probe.net.set_params(p).unwrap();
            probe.logits(&obs).unwrap().iter().zip(&upstream).map(|(a, b)| a * b).sum()
        });
        let err = relative_error(&analytic, &numeric);
        assert!(err <= TOLERANCE, "instance {instance} ({}): {err}", policy.kind);
    }
}

#[test]
fn critic_values_match_finite_differences() {
    let mut rng = stream(6);
    for instance in 0..50u64 {
        let mut critic = small_critic(instance);
        let obs = random_obs(&mut rng, 5);
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
        let err = relative_error(&analytic, &numeric);
        assert!(err <= TOLERANCE, "instance {instance}: {err}");
    }
}

fn random_minibatch(policy: &PolicyNet, rng: &mut Stream, rows: usize, jitter: f64) -> Minibatch {
    let observations = random_obs(rng, rows);
    let logits = policy.logits(&observations).unwrap();
    let mut actions = Vec::new();
    let mut old_log_probs = Vec::new();
    for r in 0..rows {
        let (a, lp) = switchnet_core::policy::sample_from_logits(&logits[r * 3..(r + 1) * 3], rng);
        actions.push(a);
        old_log_probs.push(lp + jitter * standard_normal(rng));
    }
    Minibatch {
        observations,
        actions,
        old_log_probs,
        advantages: randn(rng, rows, 1.0),
        value_targets: randn(rng, rows, 2.0),
    }
}

#[test]
fn ppo_loss_matches_finite_differences() {
    let mut rng = stream(7);
    let config = PpoConfig::default();
    for instance in 0..60u64 {
        let mut policy = if instance % 2 == 0 { small_stn(instance) } else { small_mlp(instance) };
        let mut critic = small_critic(1000 + instance);
        // Jittered old log-probabilities put some samples on the clipped
        // branch of the surrogate.
        let mb = random_minibatch(&policy, &mut rng, 6, 0.3);
        policy.net.zero_grad();
        critic.net.zero_grad();
        ppo_loss_backward(&mut policy, &mut critic, &mb, &config).unwrap();
        let analytic_policy = policy.net.grads();
        let analytic_critic = critic.net.grads();

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
        let policy_err = relative_error(&analytic_policy, &numeric_policy);
        let critic_err = relative_error(&analytic_critic, &numeric_critic);
        assert!(policy_err <= TOLERANCE, "instance {instance}: policy error {policy_err}");
        assert!(critic_err <= TOLERANCE, "instance {instance}: critic error {critic_err}");
    }
}

#[test]
fn ratio_one_surrogate_gradient_is_vanilla_policy_gradient() {
    let mut rng = stream(8);
    let config = PpoConfig { entropy_coef: 0.0, value_coef: 0.0, ..PpoConfig::default() };
    for instance in 0..10u64 {
        let mut policy = small_stn(500 + instance);
        let mut critic = small_critic(600 + instance);
        let mb = random_minibatch(&policy, &mut rng, 8, 0.0);
        let diag = ppo_loss(&policy, &critic, &mb, &config).unwrap();
        assert!((diag.mean_ratio - 1.0).abs() < 1e-12);
        assert_eq!(diag.clip_fraction, 0.0);
        let mean_adv = mb.advantages.iter().sum::<f64>() / 8.0;
        assert!((diag.policy_loss + mean_adv).abs() < 1e-12);

        policy.net.zero_grad();
        critic.net.zero_grad();
        ppo_loss_backward(&mut policy, &mut critic, &mb, &config).unwrap();
        let surrogate_grad = policy.net.grads();

        // -(1/M) sum A_t grad log pi(a_t | s_t), assembled from logit
        // gradients of the log-probabilities.
        let logits = policy.logits_train(&mb.observations).unwrap();
        let mut upstream = vec![0.0; logits.len()];
        for r in 0..8 {
            let probs = switchnet_core::nn::softmax(&logits[r * 3..(r + 1) * 3]);
            for j in 0..3 {
                let indicator = if j == mb.actions[r] { 1.0 } else { 0.0 };
                upstream[r * 3 + j] = -mb.advantages[r] * (indicator - probs[j]) / 8.0;
            }
        }
        policy.net.zero_grad();
        policy.backward_logits(&upstream).unwrap();
        let err = relative_error(&surrogate_grad, &policy.net.grads());
        assert!(err < 1e-10, "instance {instance}: {err}");
    }
}
