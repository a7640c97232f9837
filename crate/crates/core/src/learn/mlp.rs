//! Fully connected network on row-major batches (`[batch, features]`).

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
}

impl Activation {
    #[inline]
    fn apply<P: Real>(self, x: P) -> P {
        match self {
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn grad_from_output<P: Real>(self, y: P) -> P {
        match self {
            Activation::Tanh => P::one() - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<P: Real> {
    /// `[out, in]`
    pub w: Array2<P>,
    pub b: Array1<P>,
}

/// Hidden layers use `activation`; the output layer is affine.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<P: Real> {
    pub layers: Vec<Layer<P>>,
    pub activation: Activation,
}

/// Per-layer activations from a forward pass, input included.
pub struct Cache<P: Real> {
    acts: Vec<Array2<P>>,
}

impl<P: Real> Mlp<P> {
    pub fn zeros(dims: &[usize], activation: Activation) -> Self {
        assert!(dims.len() >= 2, "need input and output sizes");
        let layers = dims
            .windows(2)
            .map(|d| Layer {
                w: Array2::zeros((d[1], d[0])),
                b: Array1::zeros(d[1]),
            })
            .collect();
        Self { layers, activation }
    }

    /// Scaled-Gaussian init (`gain/√fan_in`), zero biases; the output layer
    /// uses `out_gain`.
    pub fn init<R: Rng>(rng: &mut R, dims: &[usize], activation: Activation, out_gain: f64) -> Self {
        let mut net = Self::zeros(dims, activation);
        let n = net.layers.len();
        for (k, layer) in net.layers.iter_mut().enumerate() {
            let fan_in = layer.w.ncols() as f64;
            let gain = if k + 1 == n { out_gain } else { 5.0 / 3.0 };
            let std = gain / fan_in.sqrt();
            layer.w.mapv_inplace(|_| {
                let z: f64 = StandardNormal.sample(rng);
                P::lit(z * std)
            });
        }
        net
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].w.ncols()];
        d.extend(self.layers.iter().map(|l| l.w.nrows()));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").w.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: ArrayView2<'_, P>) -> Array2<P> {
        let mut h = x.to_owned();
        let n = self.layers.len();
        for (k, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.w.t()) + &layer.b;
            if k + 1 < n {
                let act = self.activation;
                h.mapv_inplace(|v| act.apply(v));
            }
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<'_, P>) -> (Array2<P>, Cache<P>) {
        let mut acts = Vec::with_capacity(self.layers.len());
        acts.push(x.to_owned());
        let n = self.layers.len();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut h = acts[k].dot(&layer.w.t()) + &layer.b;
            if k + 1 < n {
                let act = self.activation;
                h.mapv_inplace(|v| act.apply(v));
                acts.push(h);
            } else {
                return (h, Cache { acts });
            }
        }
        unreachable!("loop returns on the last layer")
    }

    /// Accumulates `∂L/∂θ` into `grads` given `∂L/∂output`.
    pub fn backward(&self, cache: &Cache<P>, grad_out: Array2<P>, grads: &mut Mlp<P>) {
        let mut g = grad_out;
        for k in (0..self.layers.len()).rev() {
            let input = &cache.acts[k];
            grads.layers[k].w += &g.t().dot(input);
            grads.layers[k].b += &g.sum_axis(Axis(0));
            if k == 0 {
                break;
            }
            let mut gi = g.dot(&self.layers[k].w);
            let act = self.activation;
            gi.zip_mut_with(input, |d, y| *d *= act.grad_from_output(*y));
            g = gi;
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.dims(), self.activation)
    }

    /// Every parameter, layer by layer, weights row-major then biases.
    pub fn params(&self) -> impl Iterator<Item = &P> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut P> {
        self.layers.iter_mut().flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }

    pub fn cast<Q: Real>(&self) -> Mlp<Q> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    w: l.w.mapv(|v| Q::lit(v.to_f64_lossy())),
                    b: l.b.mapv(|v| Q::lit(v.to_f64_lossy())),
                })
                .collect(),
            activation: self.activation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let net: Mlp<f64> = Mlp::zeros(&[29, 16, 8, 10], Activation::Tanh);
        let x = Array2::from_elem((3, 29), 0.7);
        assert!(net.forward(x.view()).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_linear_layer_selects_slice() {
        let mut net: Mlp<f64> = Mlp::zeros(&[5, 2], Activation::Tanh);
        net.layers[0].w[[0, 1]] = 1.0;
        net.layers[0].w[[1, 3]] = 1.0;
        let x = array![[0.1, 0.2, 0.3, 0.4, 0.5]];
        assert_eq!(net.forward(x.view()), array![[0.2, 0.4]]);
    }

    #[test]
    fn cached_forward_matches_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net: Mlp<f32> = Mlp::init(&mut rng, &[6, 5, 4, 3], Activation::Tanh, 1.0);
        let x = Array2::from_shape_fn((7, 6), |(i, j)| (i as f32 - j as f32) * 0.1);
        assert_eq!(net.forward(x.view()), net.forward_cached(x.view()).0);
        assert_eq!(net.dims(), vec![6, 5, 4, 3]);
        assert_eq!(net.num_params(), 6 * 5 + 5 + 5 * 4 + 4 + 4 * 3 + 3);
    }
}
