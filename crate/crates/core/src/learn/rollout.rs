//! Episode-driving interface and on-policy rollout collection.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::policy::{gaussian_log_prob, ObsNormalizer, Policy};
use super::ppo::RolloutBatch;
use crate::env::{Env, TerminationReason, TERM_NAMES};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Observation to act on next: the first one of a new episode after
    /// `done`.
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// The episode hit its time limit rather than failing.
    pub timeout: bool,
    pub terms: Vec<f64>,
}

/// Anything the trainer can drive. Implementations reset themselves when
/// an episode ends.
pub trait Task {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    fn term_names(&self) -> Vec<String>;
    fn observe(&self) -> Vec<f64>;
    fn step_auto_reset(&mut self, action: &[f64]) -> Transition;
}

impl<T: Real> Task for Env<T> {
    fn obs_dim(&self) -> usize {
        crate::env::OBS_DIM
    }

    fn act_dim(&self) -> usize {
        crate::env::ACT_DIM
    }

    fn term_names(&self) -> Vec<String> {
        TERM_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn observe(&self) -> Vec<f64> {
        self.observation()
    }

    fn step_auto_reset(&mut self, action: &[f64]) -> Transition {
        let r = self.step(action);
        let obs = if r.done { self.reset() } else { r.obs };
        Transition {
            obs,
            reward: r.reward,
            done: r.done,
            timeout: r.reason == TerminationReason::Timeout,
            terms: r.terms.to_vec(),
        }
    }
}

/// Per-environment carry-over between collection calls.
#[derive(Debug, Clone)]
pub struct Collector {
    obs: Vec<Vec<f64>>,
    ep_return: Vec<f64>,
    ep_len: Vec<usize>,
}

impl Collector {
    pub fn new<E: Task>(envs: &[E]) -> Self {
        Self {
            obs: envs.iter().map(|e| e.observe()).collect(),
            ep_return: vec![0.0; envs.len()],
            ep_len: vec![0; envs.len()],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    pub episodes: usize,
    pub timeouts: usize,
    /// Mean undiscounted return of episodes finished in this batch (NaN if
    /// none finished).
    pub mean_return: f64,
    pub mean_length: f64,
    pub mean_step_reward: f64,
    pub term_means: Vec<f64>,
}

/// Steps every environment `steps` times with actions sampled from the
/// policy. `noise_scale` multiplies the policy's standard deviation (0
/// gives the mean action).
#[allow(clippy::too_many_arguments)]
pub fn collect_rollouts<P: Real, E: Task, R: Rng>(
    envs: &mut [E],
    collector: &mut Collector,
    policy: &Policy<P>,
    normalizer: &mut ObsNormalizer,
    steps: usize,
    gamma: f64,
    noise_scale: f64,
    rng: &mut R,
) -> (RolloutBatch<P>, RolloutStats) {
    let n = envs.len();
    let od = policy.obs_dim();
    let ad = policy.act_dim();
    let rows = n * steps;
    let mut batch = RolloutBatch {
        num_envs: n,
        steps,
        obs: Array2::zeros((rows, od)),
        actions: Array2::zeros((rows, ad)),
        log_probs: vec![0.0; rows],
        values: vec![0.0; rows],
        rewards: vec![0.0; rows],
        dones: vec![false; rows],
        bootstrap: vec![0.0; n],
        advantages: Vec::new(),
        returns: Vec::new(),
    };
    let std = policy.std();
    let log_std = policy.log_std.as_slice().expect("contiguous").to_vec();
    let n_terms = envs.first().map(|e| e.term_names().len()).unwrap_or(0);
    let mut stats = RolloutStats {
        term_means: vec![0.0; n_terms],
        ..RolloutStats::default()
    };
    let (mut ret_sum, mut len_sum) = (0.0, 0.0);
    let mut x = Array2::<P>::zeros((n, od));

    for t in 0..steps {
        normalizer.update(&collector.obs);
        for (e, o) in collector.obs.iter().enumerate() {
            normalizer.apply(o, x.row_mut(e).into_slice().expect("contiguous"));
        }
        let (mean, values) = policy.evaluate(x.view());
        let base = t * n;
        batch.obs.slice_mut(ndarray::s![base..base + n, ..]).assign(&x);
        let mut action = vec![0.0; ad];
        let mut action_p = vec![P::zero(); ad];
        for e in 0..n {
            for j in 0..ad {
                let z: f64 = StandardNormal.sample(rng);
                action_p[j] = P::lit(mean[[e, j]].to_f64_lossy() + noise_scale * std[j] * z);
                action[j] = action_p[j].to_f64_lossy();
                batch.actions[[base + e, j]] = action_p[j];
            }
            let row = mean.row(e);
            batch.log_probs[base + e] = gaussian_log_prob(&action_p, row.as_slice().expect("contiguous"), &log_std);
            batch.values[base + e] = values[e];

            let tr = envs[e].step_auto_reset(&action);
            let mut r = tr.reward;
            if tr.timeout {
                r += gamma * values[e];
            }
            batch.rewards[base + e] = r;
            batch.dones[base + e] = tr.done;
            for (k, v) in tr.terms.iter().enumerate() {
                stats.term_means[k] += v;
            }
            stats.mean_step_reward += tr.reward;
            collector.ep_return[e] += tr.reward;
            collector.ep_len[e] += 1;
            if tr.done {
                stats.episodes += 1;
                stats.timeouts += tr.timeout as usize;
                ret_sum += collector.ep_return[e];
                len_sum += collector.ep_len[e] as f64;
                collector.ep_return[e] = 0.0;
                collector.ep_len[e] = 0;
            }
            collector.obs[e] = tr.obs;
        }
    }
    for (e, o) in collector.obs.iter().enumerate() {
        normalizer.apply(o, x.row_mut(e).into_slice().expect("contiguous"));
    }
    batch.bootstrap = policy.evaluate(x.view()).1;

    let total = rows.max(1) as f64;
    stats.mean_step_reward /= total;
    stats.term_means.iter_mut().for_each(|v| *v /= total);
    if stats.episodes > 0 {
        stats.mean_return = ret_sum / stats.episodes as f64;
        stats.mean_length = len_sum / stats.episodes as f64;
    } else {
        stats.mean_return = f64::NAN;
        stats.mean_length = f64::NAN;
    }
    (batch, stats)
}
