//! Gaussian actor-critic and running observation normalization.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp};
use crate::scalar::Real;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Separate actor and critic networks and a state-independent log standard
/// deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<P: Real> {
    pub actor: Mlp<P>,
    pub critic: Mlp<P>,
    pub log_std: Array1<P>,
}

impl<P: Real> Policy<P> {
    pub fn new<R: Rng>(rng: &mut R, obs_dim: usize, act_dim: usize, hidden: &[usize], init_std: f64) -> Self {
        let dims = |out: usize| {
            let mut d = vec![obs_dim];
            d.extend_from_slice(hidden);
            d.push(out);
            d
        };
        Self {
            actor: Mlp::init(rng, &dims(act_dim), Activation::Tanh, 0.01),
            critic: Mlp::init(rng, &dims(1), Activation::Tanh, 1.0),
            log_std: Array1::from_elem(act_dim, P::lit(init_std.ln())),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            actor: self.actor.zeros_like(),
            critic: self.critic.zeros_like(),
            log_std: Array1::zeros(self.log_std.len()),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn params(&self) -> impl Iterator<Item = &P> {
        self.actor.params().chain(self.critic.params()).chain(self.log_std.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut P> {
        self.actor
            .params_mut()
            .chain(self.critic.params_mut())
            .chain(self.log_std.iter_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }

    /// Action means and state values for a batch of (normalized)
    /// observations.
    pub fn evaluate(&self, obs: ArrayView2<'_, P>) -> (Array2<P>, Vec<f64>) {
        let mean = self.actor.forward(obs);
        let v = self.critic.forward(obs);
        (mean, v.iter().map(|x| x.to_f64_lossy()).collect())
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.to_f64_lossy().exp()).collect()
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|l| l.to_f64_lossy() + 0.5 * (LN_2PI + 1.0)).sum()
    }

    pub fn cast<Q: Real>(&self) -> Policy<Q> {
        Policy {
            actor: self.actor.cast(),
            critic: self.critic.cast(),
            log_std: self.log_std.mapv(|v| Q::lit(v.to_f64_lossy())),
        }
    }
}

/// Diagonal-Gaussian log density of `action` given `mean` and `log_std`.
pub fn gaussian_log_prob<P: Real>(action: &[P], mean: &[P], log_std: &[P]) -> f64 {
    let mut lp = 0.0;
    for ((a, m), l) in action.iter().zip(mean).zip(log_std) {
        let l = l.to_f64_lossy();
        let z = (a.to_f64_lossy() - m.to_f64_lossy()) * (-l).exp();
        lp += -0.5 * z * z - l - 0.5 * LN_2PI;
    }
    lp
}

/// Running mean and variance (parallel-merge form), applied as
/// `clip((x − mean)/√(var + ε), ±clip)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
    pub clip: f64,
    pub frozen: bool,
}

pub const NORM_EPS: f64 = 1e-8;

impl ObsNormalizer {
    pub fn new(dim: usize, clip: f64) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: 0.0,
            clip,
            frozen: false,
        }
    }

    pub fn update(&mut self, batch: &[Vec<f64>]) {
        if self.frozen || batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        for j in 0..self.mean.len() {
            let bm = batch.iter().map(|x| x[j]).sum::<f64>() / n;
            let bv = batch.iter().map(|x| (x[j] - bm).powi(2)).sum::<f64>() / n;
            if self.count == 0.0 {
                self.mean[j] = bm;
                self.var[j] = bv;
                continue;
            }
            let total = self.count + n;
            let delta = bm - self.mean[j];
            self.mean[j] += delta * n / total;
            let m2 = self.var[j] * self.count + bv * n + delta * delta * self.count * n / total;
            self.var[j] = m2 / total;
        }
        self.count += n;
    }

    pub fn std(&self) -> Vec<f64> {
        self.var.iter().map(|v| (v + NORM_EPS).sqrt()).collect()
    }

    pub fn apply<P: Real>(&self, x: &[f64], out: &mut [P]) {
        for (j, v) in x.iter().enumerate() {
            let z = (v - self.mean[j]) / (self.var[j] + NORM_EPS).sqrt();
            out[j] = P::lit(z.clamp(-self.clip, self.clip));
        }
    }
}
