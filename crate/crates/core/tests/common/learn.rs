//! Finite-difference and closed-form checks for the learner.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strider_core::learn::mlp::{Activation, Mlp};
use strider_core::learn::ppo::{loss_and_grad, Minibatch};
use strider_core::learn::{gae, point_mass_score, PointMass, Policy, PpoHyper, TrainConfig, Trainer};

pub fn rel(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn random_input(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.5..1.5))
}

/// Worst relative error of MLP backprop against central differences over
/// 100 random nets.
pub fn mlp_grad_worst() -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = rng.gen_range(1..4);
        let mut dims = vec![rng.gen_range(1..6)];
        for _ in 0..depth {
            dims.push(rng.gen_range(1..7));
        }
        let mut net: Mlp<f64> = Mlp::init(&mut rng, &dims, Activation::Tanh, 1.0);
        for p in net.params_mut() {
            *p += rng.gen_range(-0.3..0.3);
        }
        let x = random_input(&mut rng, 4, dims[0]);
        let w = random_input(&mut rng, 4, *dims.last().unwrap());
        // L = Σ w ⊙ f(x)
        let loss = |n: &Mlp<f64>| (n.forward(x.view()) * &w).sum();
        let (_, cache) = net.forward_cached(x.view());
        let mut grads = net.zeros_like();
        net.backward(&cache, w.clone(), &mut grads);
        let analytic: Vec<f64> = grads.params().copied().collect();
        let mut numeric = Vec::new();
        for k in 0..net.num_params() {
            let mut plus = net.clone();
            *plus.params_mut().nth(k).unwrap() += h;
            let mut minus = net.clone();
            *minus.params_mut().nth(k).unwrap() -= h;
            numeric.push((loss(&plus) - loss(&minus)) / (2.0 * h));
        }
        worst = worst.max(rel(&analytic, &numeric));
    }
    worst
}

pub fn random_minibatch(rng: &mut ChaCha8Rng, policy: &Policy<f64>, m: usize) -> [Vec<f64>; 4] {
    let (_, values) = policy.evaluate(random_input(rng, m, policy.obs_dim()).view());
    let lp: Vec<f64> = (0..m).map(|_| rng.gen_range(-12.0..-6.0)).collect();
    let adv: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let ret: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let old_v: Vec<f64> = values.iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect();
    [lp, adv, ret, old_v]
}

/// Worst relative error of the full clipped PPO loss gradient against
/// central differences over 100 random policies and minibatches.
pub fn ppo_grad_worst() -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let policy: Policy<f64> = Policy::new(&mut rng, 3, 2, &[4], 0.8);
        let m = 6;
        let obs = random_input(&mut rng, m, 3);
        let actions = random_input(&mut rng, m, 2);
        let [lp, adv, ret, old_v] = random_minibatch(&mut rng, &policy, m);
        let hyper = PpoHyper {
            clip_eps: 0.2,
            ..PpoHyper::default()
        };
        let mb = Minibatch {
            obs: obs.view(),
            actions: actions.view(),
            old_log_probs: &lp,
            old_values: &old_v,
            advantages: &adv,
            returns: &ret,
        };
        let (_, grads) = loss_and_grad(&policy, &mb, &hyper);
        let analytic: Vec<f64> = grads.params().copied().collect();
        let mut numeric = Vec::with_capacity(analytic.len());
        for k in 0..analytic.len() {
            let mut plus = policy.clone();
            *plus.params_mut().nth(k).unwrap() += h;
            let mut minus = policy.clone();
            *minus.params_mut().nth(k).unwrap() -= h;
            let lp_ = loss_and_grad(&plus, &mb, &hyper).0.total;
            let lm = loss_and_grad(&minus, &mb, &hyper).0.total;
            numeric.push((lp_ - lm) / (2.0 * h));
        }
        worst = worst.max(rel(&analytic, &numeric));
    }
    worst
}

/// Worst deviation of GAE(λ = 1) from the bootstrapped Monte-Carlo return
/// over 200 random episodes (advantages and returns).
pub fn gae_monte_carlo_worst() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(1..40);
        let gamma = rng.gen_range(0.5..1.0);
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..=n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (a, ret) = gae(&r, &v, &vec![false; n], gamma, 1.0);
        for t in 0..n {
            let mc: f64 = (t..n).map(|k| r[k] * gamma.powi((k - t) as i32)).sum::<f64>()
                + gamma.powi((n - t) as i32) * v[n];
            worst = worst.max((a[t] - (mc - v[t])).abs()).max((ret[t] - mc).abs());
        }
    }
    worst
}

pub fn point_mass_trainer(seed: u64) -> Trainer<f32, PointMass> {
    let envs = (0..16).map(|i| PointMass::new(seed, i)).collect();
    let cfg = TrainConfig {
        hidden: vec![32, 32],
        steps_per_env: 50,
        checkpoint_every: 0,
        ppo: PpoHyper {
            lr: 3e-3,
            ..PpoHyper::default()
        },
        ..TrainConfig::default()
    };
    Trainer::new(envs, cfg, seed).unwrap()
}

/// Trains the 1-D sanity task for up to 200 iterations, scoring every 20.
/// Returns (best mean tracking reward, iterations used, seconds).
pub fn point_mass_run() -> (f64, usize, f64) {
    let start = Instant::now();
    let mut t = point_mass_trainer(0);
    let mut best: f64 = 0.0;
    let mut used = 0;
    for it in 0..200 {
        t.iterate().unwrap();
        used = it + 1;
        if used % 20 == 0 {
            best = best.max(point_mass_score(&t.checkpoint(), 12345, 64));
            if best > 0.9 {
                break;
            }
        }
    }
    (best, used, start.elapsed().as_secs_f64())
}
