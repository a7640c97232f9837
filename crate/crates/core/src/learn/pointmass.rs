//! One-dimensional velocity-tracking task with the locomotion reward's
//! tracking kernel; small enough to check the trainer end to end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::rollout::{Task, Transition};

#[derive(Debug, Clone)]
pub struct PointMass {
    rng: ChaCha8Rng,
    pub velocity: f64,
    pub command: f64,
    pub step: usize,
    pub episode_len: usize,
    /// Velocity change per step at full action.
    pub gain: f64,
    pub sigma: f64,
}

impl PointMass {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let mut pm = Self {
            rng,
            velocity: 0.0,
            command: 0.0,
            step: 0,
            episode_len: 50,
            gain: 0.5,
            sigma: 0.25,
        };
        pm.reset();
        pm
    }

    pub fn reset(&mut self) {
        self.velocity = self.rng.gen_range(-1.0..=1.0);
        self.command = self.rng.gen_range(-1.0..=1.0);
        self.step = 0;
    }

    pub fn tracking(&self) -> f64 {
        (-(self.velocity - self.command).powi(2) / self.sigma).exp()
    }
}

impl Task for PointMass {
    fn obs_dim(&self) -> usize {
        2
    }

    fn act_dim(&self) -> usize {
        1
    }

    fn term_names(&self) -> Vec<String> {
        vec!["tracking".into()]
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.command, self.velocity]
    }

    fn step_auto_reset(&mut self, action: &[f64]) -> Transition {
        let a = if action[0].is_finite() { action[0].clamp(-1.0, 1.0) } else { 0.0 };
        self.velocity += self.gain * a;
        self.step += 1;
        let track = self.tracking();
        let done = self.step >= self.episode_len;
        if done {
            self.reset();
        }
        Transition {
            obs: self.observe(),
            reward: track,
            done,
            timeout: done,
            terms: vec![track],
        }
    }
}
