//! Clipped-surrogate policy optimization with Adam.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::{gaussian_log_prob, Policy};
use super::LearnError;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Fixed,
    /// Scale the step size to keep the approximate KL near `desired_kl`.
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoHyper {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    pub lr: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    pub clip_value_loss: bool,
    pub schedule: LrSchedule,
    pub desired_kl: f64,
}

impl Default for PpoHyper {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip_eps: 0.2,
            lr: 3e-4,
            epochs: 5,
            minibatches: 4,
            value_coef: 1.0,
            entropy_coef: 0.01,
            max_grad_norm: 1.0,
            normalize_advantages: true,
            clip_value_loss: true,
            schedule: LrSchedule::Fixed,
            desired_kl: 0.01,
        }
    }
}

impl PpoHyper {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if !unit(self.gamma) || !unit(self.lambda) {
            return Err("gamma and lambda must lie in (0, 1]".into());
        }
        if !(self.clip_eps > 0.0) || !(self.lr > 0.0) || self.epochs == 0 || self.minibatches == 0 {
            return Err("clip_eps, lr, epochs and minibatches must be positive".into());
        }
        if !(self.max_grad_norm > 0.0) || !(self.value_coef >= 0.0) || !(self.entropy_coef >= 0.0) {
            return Err("max_grad_norm > 0, value_coef and entropy_coef >= 0".into());
        }
        Ok(())
    }
}

/// Flattened transitions, row `t * num_envs + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch<P: Real> {
    pub num_envs: usize,
    pub steps: usize,
    /// Normalized observations as fed to the networks.
    pub obs: Array2<P>,
    pub actions: Array2<P>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Critic value of the state after the last step, per environment.
    pub bootstrap: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl<P: Real> RolloutBatch<P> {
    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fills `advantages` and `returns` per environment.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) {
        let (n, t_len) = (self.num_envs, self.steps);
        self.advantages = vec![0.0; n * t_len];
        self.returns = vec![0.0; n * t_len];
        let mut r = Vec::with_capacity(t_len);
        let mut v = Vec::with_capacity(t_len + 1);
        let mut d = Vec::with_capacity(t_len);
        for e in 0..n {
            r.clear();
            v.clear();
            d.clear();
            for t in 0..t_len {
                let i = t * n + e;
                r.push(self.rewards[i]);
                v.push(self.values[i]);
                d.push(self.dones[i]);
            }
            v.push(self.bootstrap[e]);
            let (a, ret) = super::gae::gae(&r, &v, &d, gamma, lambda);
            for t in 0..t_len {
                self.advantages[t * n + e] = a[t];
                self.returns[t * n + e] = ret[t];
            }
        }
    }
}

/// Clipped surrogate for one sample: returns `min(r·A, clip(r)·A)` and its
/// derivative with respect to the ratio `r`.
pub fn clipped_surrogate(ratio: f64, adv: f64, eps: f64) -> (f64, f64) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
    if unclipped <= clipped {
        (unclipped, adv)
    } else if ratio < 1.0 - eps || ratio > 1.0 + eps {
        (clipped, 0.0)
    } else {
        (clipped, adv)
    }
}

/// Minibatch view handed to [`loss_and_grad`].
pub struct Minibatch<'a, P: Real> {
    pub obs: ArrayView2<'a, P>,
    pub actions: ArrayView2<'a, P>,
    pub old_log_probs: &'a [f64],
    pub old_values: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Total loss `policy + value_coef·value − entropy_coef·entropy` over the
/// minibatch and its gradient with respect to every parameter of `policy`.
pub fn loss_and_grad<P: Real>(policy: &Policy<P>, mb: &Minibatch<'_, P>, hyper: &PpoHyper) -> (LossParts, Policy<P>) {
    let m = mb.obs.nrows();
    let inv_m = 1.0 / m as f64;
    let act_dim = policy.act_dim();
    let mut grads = policy.zeros_like();

    let (mean, actor_cache) = policy.actor.forward_cached(mb.obs);
    let (value, critic_cache) = policy.critic.forward_cached(mb.obs);
    let log_std: Vec<f64> = policy.log_std.iter().map(|v| v.to_f64_lossy()).collect();
    let inv_var: Vec<f64> = log_std.iter().map(|l| (-2.0 * l).exp()).collect();

    let mut parts = LossParts::default();
    let mut g_mean = Array2::<P>::zeros((m, act_dim));
    let mut g_log_std = vec![0.0; act_dim];
    let mut g_value = Array2::<P>::zeros((m, 1));
    let mut clipped = 0usize;
    for i in 0..m {
        let a = mb.actions.row(i);
        let mu = mean.row(i);
        let lp = gaussian_log_prob(
            a.as_slice().expect("contiguous"),
            mu.as_slice().expect("contiguous"),
            policy.log_std.as_slice().expect("contiguous"),
        );
        let log_ratio = lp - mb.old_log_probs[i];
        let ratio = log_ratio.exp();
        let (surr, d_ratio) = clipped_surrogate(ratio, mb.advantages[i], hyper.clip_eps);
        parts.policy -= surr * inv_m;
        parts.approx_kl += ((ratio - 1.0) - log_ratio) * inv_m;
        if (ratio - 1.0).abs() > hyper.clip_eps {
            clipped += 1;
        }
        // d(-surr/m)/d logp = -(dsurr/dratio)·ratio/m
        let d_lp = -d_ratio * ratio * inv_m;
        if d_lp != 0.0 {
            for j in 0..act_dim {
                let diff = a[j].to_f64_lossy() - mu[j].to_f64_lossy();
                g_mean[[i, j]] = P::lit(d_lp * diff * inv_var[j]);
                g_log_std[j] += d_lp * (diff * diff * inv_var[j] - 1.0);
            }
        }

        let v = value[[i, 0]].to_f64_lossy();
        let ret = mb.returns[i];
        let err = v - ret;
        let (loss_v, d_v) = if hyper.clip_value_loss {
            let old = mb.old_values[i];
            let vc = old + (v - old).clamp(-hyper.clip_eps, hyper.clip_eps);
            let err_c = vc - ret;
            if err * err >= err_c * err_c {
                (err * err, 2.0 * err)
            } else {
                let inside = (v - old).abs() <= hyper.clip_eps;
                (err_c * err_c, if inside { 2.0 * err_c } else { 0.0 })
            }
        } else {
            (err * err, 2.0 * err)
        };
        parts.value += loss_v * inv_m;
        g_value[[i, 0]] = P::lit(hyper.value_coef * d_v * inv_m);
    }
    parts.entropy = policy.entropy();
    parts.total = parts.policy + hyper.value_coef * parts.value - hyper.entropy_coef * parts.entropy;
    parts.clip_fraction = clipped as f64 * inv_m;

    policy.actor.backward(&actor_cache, g_mean, &mut grads.actor);
    policy.critic.backward(&critic_cache, g_value, &mut grads.critic);
    for j in 0..act_dim {
        // entropy is Σ log σ + const, so its gradient is 1 per dimension
        grads.log_std[j] = P::lit(g_log_std[j] - hyper.entropy_coef);
    }
    (parts, grads)
}

/// Adam moments shaped like the policy.
#[derive(Debug, Clone)]
pub struct Adam<P: Real> {
    m: Policy<P>,
    v: Policy<P>,
    t: i32,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<P: Real> Adam<P> {
    pub fn new(policy: &Policy<P>, lr: f64) -> Self {
        Self {
            m: policy.zeros_like(),
            v: policy.zeros_like(),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, policy: &mut Policy<P>, grads: &Policy<P>) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let (lr, eps) = (self.lr, self.eps);
        for (((p, g), m), v) in policy
            .params_mut()
            .zip(grads.params())
            .zip(self.m.params_mut())
            .zip(self.v.params_mut())
        {
            let g = g.to_f64_lossy();
            let mn = b1 * m.to_f64_lossy() + (1.0 - b1) * g;
            let vn = b2 * v.to_f64_lossy() + (1.0 - b2) * g * g;
            *m = P::lit(mn);
            *v = P::lit(vn);
            let upd = lr * (mn / c1) / ((vn / c2).sqrt() + eps);
            *p = P::lit(p.to_f64_lossy() - upd);
        }
    }
}

/// Global L2 norm of a gradient; scales it down to `max_norm` if larger.
pub fn clip_grad_norm<P: Real>(grads: &mut Policy<P>, max_norm: f64) -> f64 {
    let norm = grads.params().map(|g| g.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = P::lit(max_norm / norm);
        grads.params_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub lr: f64,
}

fn take_rows<P: Real>(a: &Array2<P>, idx: &[usize]) -> Array2<P> {
    a.select(Axis(0), idx)
}

/// Runs `epochs × minibatches` Adam steps on the batch.
pub fn ppo_update<P: Real, R: Rng>(
    policy: &mut Policy<P>,
    opt: &mut Adam<P>,
    batch: &RolloutBatch<P>,
    hyper: &PpoHyper,
    rng: &mut R,
) -> Result<UpdateStats, LearnError> {
    let n = batch.len();
    if batch.advantages.len() != n || batch.returns.len() != n {
        return Err(LearnError::Shape("advantages not computed for this batch".into()));
    }
    let mut adv = batch.advantages.clone();
    if hyper.normalize_advantages && n > 1 {
        let mean = adv.iter().sum::<f64>() / n as f64;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt() + 1e-8;
        adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
    }
    let mb_size = (n / hyper.minibatches).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    let mut count = 0.0;
    for _ in 0..hyper.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(mb_size).take(hyper.minibatches) {
            let obs = take_rows(&batch.obs, chunk);
            let actions = take_rows(&batch.actions, chunk);
            let pick = |v: &[f64]| chunk.iter().map(|&i| v[i]).collect::<Vec<f64>>();
            let (lp, vals, a, ret) = (pick(&batch.log_probs), pick(&batch.values), pick(&adv), pick(&batch.returns));
            let mb = Minibatch {
                obs: obs.view(),
                actions: actions.view(),
                old_log_probs: &lp,
                old_values: &vals,
                advantages: &a,
                returns: &ret,
            };
            let (parts, mut grads) = loss_and_grad(policy, &mb, hyper);
            if !parts.total.is_finite() {
                return Err(LearnError::NonFinite("ppo loss".into()));
            }
            if hyper.schedule == LrSchedule::Adaptive {
                if parts.approx_kl > 2.0 * hyper.desired_kl {
                    opt.lr = (opt.lr / 1.5).max(1e-5);
                } else if parts.approx_kl < 0.5 * hyper.desired_kl {
                    opt.lr = (opt.lr * 1.5).min(1e-2);
                }
            }
            let gn = clip_grad_norm(&mut grads, hyper.max_grad_norm);
            if !gn.is_finite() {
                return Err(LearnError::NonFinite("gradient".into()));
            }
            opt.step(policy, &grads);
            stats.policy_loss += parts.policy;
            stats.value_loss += parts.value;
            stats.entropy += parts.entropy;
            stats.approx_kl += parts.approx_kl;
            stats.clip_fraction += parts.clip_fraction;
            stats.grad_norm += gn;
            count += 1.0;
        }
    }
    if !policy.is_finite() {
        return Err(LearnError::NonFinite("policy parameters".into()));
    }
    for v in [
        &mut stats.policy_loss,
        &mut stats.value_loss,
        &mut stats.entropy,
        &mut stats.approx_kl,
        &mut stats.clip_fraction,
        &mut stats.grad_norm,
    ] {
        *v /= count;
    }
    stats.lr = opt.lr;
    Ok(stats)
}
