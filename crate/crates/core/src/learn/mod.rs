//! PPO with GAE over MLP actor-critic networks.

pub mod checkpoint;
pub mod gae;
pub mod mlp;
pub mod pointmass;
pub mod policy;
pub mod ppo;
pub mod rollout;
pub mod train;

use std::path::PathBuf;

pub use checkpoint::Checkpoint;
pub use gae::gae;
pub use mlp::{Activation, Mlp};
pub use pointmass::PointMass;
pub use policy::{ObsNormalizer, Policy};
pub use ppo::{ppo_update, PpoHyper, RolloutBatch};
pub use rollout::{collect_rollouts, Collector, Task, Transition};
pub use train::{IterationReport, TrainConfig, Trainer};

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Mean per-step tracking reward of the deterministic policy over
/// `episodes` fresh point-mass episodes.
pub fn point_mass_score(ckpt: &Checkpoint, seed: u64, episodes: usize) -> f64 {
    let mut total = 0.0;
    let mut steps = 0usize;
    for k in 0..episodes {
        let mut pm = PointMass::new(seed, k as u64);
        for _ in 0..pm.episode_len {
            let a = ckpt.act(&pm.observe());
            let tr = pm.step_auto_reset(&a);
            total += tr.reward;
            steps += 1;
        }
    }
    total / steps as f64
}
