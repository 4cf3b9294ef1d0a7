use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Fully connected network with tanh hidden layers and a linear output.
///
/// All weights live in one flat vector; layer `l` stores its `out × in`
/// weight matrix row-major followed by its `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer activations from [`Mlp::forward_cached`]; `acts[0]` is the
/// input and the last entry is the network output.
#[derive(Debug, Clone)]
pub struct MlpCache {
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache has at least the input")
    }
}

impl Mlp {
    /// Weights `~ N(0, gain² / fan_in)`, biases zero. `output_gain` replaces
    /// the unit gain on the last layer.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0));
        let mut params = Vec::with_capacity(Self::count(sizes));
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let gain = if l + 1 == layers { output_gain } else { 1.0 };
            let std = gain / libm::sqrt(fan_in as f64);
            for _ in 0..fan_in * fan_out {
                params.push(std * rng.sample::<f64, _>(StandardNormal));
            }
            params.extend(core::iter::repeat_n(0.0, fan_out));
        }
        Mlp { sizes: sizes.to_vec(), params }
    }

    fn count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Bias vector of the output layer.
    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let out = self.output_dim();
        let len = self.params.len();
        &mut self.params[len - out..]
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut cur = input.to_vec();
        let mut offset = 0;
        let layers = self.sizes.len() - 1;
        for l in 0..layers {
            cur = self.layer(l, offset, &cur, l + 1 < layers);
            offset += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        cur
    }

    pub fn forward_cached(&self, input: &[f64]) -> MlpCache {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.to_vec());
        let mut offset = 0;
        let layers = self.sizes.len() - 1;
        for l in 0..layers {
            let next = self.layer(l, offset, &acts[l], l + 1 < layers);
            acts.push(next);
            offset += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        MlpCache { acts }
    }

    fn layer(&self, l: usize, offset: usize, x: &[f64], hidden: bool) -> Vec<f64> {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.params[offset..offset + n_in * n_out];
        let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        w.chunks_exact(n_in)
            .zip(b)
            .map(|(row, bias)| {
                let z = bias + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
                if hidden {
                    libm::tanh(z)
                } else {
                    z
                }
            })
            .collect()
    }

    /// Accumulate `∂L/∂params` into `grad` given `∂L/∂output`.
    pub fn backward(&self, cache: &MlpCache, d_output: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let layers = self.sizes.len() - 1;
        let mut offsets = vec![0; layers];
        for l in 1..layers {
            offsets[l] = offsets[l - 1] + self.sizes[l - 1] * self.sizes[l] + self.sizes[l];
        }
        let mut delta = d_output.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &cache.acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                row.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for (o, row) in w.chunks_exact(n_in).enumerate() {
                    let d = delta[o];
                    prev.iter_mut().zip(row).for_each(|(p, wv)| *p += d * wv);
                }
                // input of layer l is the tanh output of layer l-1
                prev.iter_mut().zip(input).for_each(|(p, a)| *p *= 1.0 - a * a);
                delta = prev;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derive_rng_stream;

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = derive_rng_stream(4, "mlp");
        let mut net = Mlp::new(&[3, 5, 4, 2], 1.0, &mut rng);
        let x = [0.3, -1.2, 0.8];
        // L = 0.7·out0 − 1.3·out1
        let loss = |n: &Mlp| {
            let o = n.forward(&x);
            0.7 * o[0] - 1.3 * o[1]
        };
        let cache = net.forward_cached(&x);
        assert_eq!(cache.output(), net.forward(&x).as_slice());
        let mut grad = vec![0.0; net.num_params()];
        net.backward(&cache, &[0.7, -1.3], &mut grad);
        for i in 0..net.num_params() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + 1e-6;
            let up = loss(&net);
            net.params_mut()[i] = orig - 1e-6;
            let down = loss(&net);
            net.params_mut()[i] = orig;
            let fd = (up - down) / 2e-6;
            assert!((fd - grad[i]).abs() <= 1e-7 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grad[i]);
        }
    }
}
