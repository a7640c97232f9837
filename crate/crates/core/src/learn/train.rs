//! The collect → advantage → update loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::policy::{ObsNormalizer, Policy};
use super::ppo::{ppo_update, Adam, PpoHyper, UpdateStats};
use super::rollout::{collect_rollouts, Collector, RolloutStats, Task};
use super::LearnError;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub init_std: f64,
    /// Transitions per environment per iteration.
    pub steps_per_env: usize,
    pub obs_clip: f64,
    /// Checkpoint period in iterations (0 = only at the end).
    pub checkpoint_every: usize,
    pub ppo: PpoHyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![512, 256, 128],
            init_std: 1.0,
            steps_per_env: 24,
            obs_clip: 5.0,
            checkpoint_every: 50,
            ppo: PpoHyper::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.ppo.validate()?;
        if self.hidden.iter().any(|h| *h == 0) || self.steps_per_env == 0 {
            return Err("hidden sizes and steps_per_env must be positive".into());
        }
        if !(self.init_std > 0.0) || !(self.obs_clip > 0.0) {
            return Err("init_std and obs_clip must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    pub rollout: RolloutStats,
    pub update: UpdateStats,
    pub action_std: f64,
}

/// Owns the environments, the policy and the optimizer. Single-threaded
/// and fully determined by the seed.
pub struct Trainer<P: Real, E: Task> {
    pub envs: Vec<E>,
    pub policy: Policy<P>,
    pub normalizer: ObsNormalizer,
    pub config: TrainConfig,
    opt: Adam<P>,
    collector: Collector,
    rng: ChaCha8Rng,
    pub iteration: usize,
}

impl<P: Real, E: Task> Trainer<P, E> {
    pub fn new(envs: Vec<E>, config: TrainConfig, seed: u64) -> Result<Self, LearnError> {
        config.validate().map_err(LearnError::Config)?;
        let first = envs.first().ok_or_else(|| LearnError::Config("no environments".into()))?;
        let (od, ad) = (first.obs_dim(), first.act_dim());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let policy = Policy::new(&mut rng, od, ad, &config.hidden, config.init_std);
        let opt = Adam::new(&policy, config.ppo.lr);
        let collector = Collector::new(&envs);
        Ok(Self {
            normalizer: ObsNormalizer::new(od, config.obs_clip),
            envs,
            policy,
            config,
            opt,
            collector,
            rng,
            iteration: 0,
        })
    }

    pub fn iterate(&mut self) -> Result<IterationReport, LearnError> {
        let hyper = self.config.ppo.clone();
        let (mut batch, rollout) = collect_rollouts(
            &mut self.envs,
            &mut self.collector,
            &self.policy,
            &mut self.normalizer,
            self.config.steps_per_env,
            hyper.gamma,
            1.0,
            &mut self.rng,
        );
        batch.compute_advantages(hyper.gamma, hyper.lambda);
        let update = ppo_update(&mut self.policy, &mut self.opt, &batch, &hyper, &mut self.rng)?;
        self.iteration += 1;
        let std = self.policy.std();
        Ok(IterationReport {
            iteration: self.iteration,
            rollout,
            update,
            action_std: std.iter().sum::<f64>() / std.len() as f64,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::from_training(&self.policy.cast(), &self.normalizer);
        c.meta.insert("iteration".into(), self.iteration.into());
        c
    }
}
