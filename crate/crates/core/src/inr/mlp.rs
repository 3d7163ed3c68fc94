//! Fully connected network: ReLU hidden layers and a single sigmoid output.
//!
//! Layer `l` computes `Z = A·W + b` with `W` stored `fan_in × fan_out`
//! row-major, so a batch of points is one GEMM per layer.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::real::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MlpConfig {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Initial output-layer bias; the fresh field is `≈ sigmoid(output_bias)`.
    pub output_bias: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig { hidden_layers: 2, hidden_width: 128, output_bias: 0.0 }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.output_bias.is_finite() {
            return Err(Error::Config(format!("output_bias must be finite, got {}", self.output_bias)));
        }
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(Error::Config(format!(
                "MLP needs at least one hidden layer of positive width, got {}x{}",
                self.hidden_layers, self.hidden_width
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub w: usize,
    pub b: usize,
}

/// Parameter layout of the network inside a flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub offset: usize,
    pub n_params: usize,
    pub output_bias: f64,
}

/// Activations of one batch, kept for the backward pass.
#[derive(Debug, Default, Clone)]
pub struct MlpCache<T> {
    /// Post-ReLU activations of each hidden layer.
    hidden: Vec<Vec<T>>,
    /// Sigmoid outputs.
    out: Vec<T>,
    d_a: Vec<T>,
    d_z: Vec<T>,
}

impl Mlp {
    pub fn new(input: usize, cfg: &MlpConfig, offset: usize) -> Result<Self> {
        cfg.validate()?;
        let mut dims = vec![input];
        dims.extend(core::iter::repeat_n(cfg.hidden_width, cfg.hidden_layers));
        dims.push(1);
        let mut layers = Vec::new();
        let mut at = offset;
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            layers.push(Layer { fan_in, fan_out, w: at, b: at + fan_in * fan_out });
            at += fan_in * fan_out + fan_out;
        }
        Ok(Mlp { layers, offset, n_params: at - offset, output_bias: cfg.output_bias })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    /// Uniform init: `±√(6/fan_in)` for ReLU layers, `±√(6/(fan_in + 1))`
    /// for the output layer; zero hidden biases.
    pub fn init<T: Real>(&self, params: &mut [T], mut uniform: impl FnMut() -> f64) {
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let bound =
                if l == last { (6.0 / (layer.fan_in + 1) as f64).sqrt() } else { (6.0 / layer.fan_in as f64).sqrt() };
            for v in &mut params[layer.w..layer.w + layer.fan_in * layer.fan_out] {
                *v = T::of((2.0 * uniform() - 1.0) * bound);
            }
            let b0 = if l == last { T::of(self.output_bias) } else { T::zero() };
            for v in &mut params[layer.b..layer.b + layer.fan_out] {
                *v = b0;
            }
        }
    }

    /// Evaluates `n` rows of `x` into `out`.
    pub fn forward<T: Real>(&self, params: &[T], x: &[T], n: usize, out: &mut [T], cache: &mut MlpCache<T>) {
        let n_hidden = self.layers.len() - 1;
        cache.hidden.resize_with(n_hidden, Vec::new);
        for (l, layer) in self.layers.iter().enumerate() {
            let w = &params[layer.w..layer.w + layer.fan_in * layer.fan_out];
            let b = &params[layer.b..layer.b + layer.fan_out];
            let (prev, rest) = cache.hidden.split_at_mut(l.min(n_hidden));
            let input: &[T] = if l == 0 { x } else { &prev[l - 1] };
            let z: &mut Vec<T> = if l < n_hidden { &mut rest[0] } else { &mut cache.out };
            z.resize(n * layer.fan_out, T::zero());
            T::gemm(n, layer.fan_in, layer.fan_out, input, false, w, false, z, false);
            if l < n_hidden {
                for row in z.chunks_exact_mut(layer.fan_out) {
                    for (v, &bb) in row.iter_mut().zip(b) {
                        let s = *v + bb;
                        *v = if s > T::zero() { s } else { T::zero() };
                    }
                }
            } else {
                for v in z.iter_mut() {
                    *v = T::one() / (T::one() + (-(*v + b[0])).exp());
                }
            }
        }
        out[..n].copy_from_slice(&cache.out[..n]);
    }

    /// Accumulates parameter gradients for upstream gradient `d_out` and
    /// writes the gradient w.r.t. the input into `d_x`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward<T: Real>(
        &self,
        params: &[T],
        x: &[T],
        n: usize,
        d_out: &[T],
        cache: &mut MlpCache<T>,
        grad: &mut [T],
        d_x: &mut [T],
    ) {
        let MlpCache { hidden, out, d_a, d_z } = cache;
        // Output pre-activation gradient.
        d_z.clear();
        d_z.extend(out[..n].iter().zip(&d_out[..n]).map(|(&y, &g)| g * y * (T::one() - y)));
        for l in (0..self.layers.len()).rev() {
            let layer = self.layers[l];
            let (fi, fo) = (layer.fan_in, layer.fan_out);
            let input: &[T] = if l == 0 { x } else { &hidden[l - 1] };
            T::gemm(fi, n, fo, input, true, d_z, false, &mut grad[layer.w..layer.w + fi * fo], true);
            let gb = &mut grad[layer.b..layer.b + fo];
            for row in d_z.chunks_exact(fo) {
                for (g, &v) in gb.iter_mut().zip(row) {
                    *g += v;
                }
            }
            let w = &params[layer.w..layer.w + fi * fo];
            let target: &mut [T] = if l == 0 {
                &mut d_x[..n * fi]
            } else {
                d_a.resize(n * fi, T::zero());
                d_a
            };
            T::gemm(n, fo, fi, d_z, false, w, true, target, false);
            if l > 0 {
                // Through the ReLU of layer l-1: active where its output is positive.
                for (g, &a) in d_a.iter_mut().zip(hidden[l - 1].iter()) {
                    if a <= T::zero() {
                        *g = T::zero();
                    }
                }
                core::mem::swap(d_a, d_z);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_counts() {
        let m = Mlp::new(32, &MlpConfig::default(), 100).unwrap();
        assert_eq!(m.n_params, 32 * 128 + 128 + 128 * 128 + 128 + 128 + 1);
        assert_eq!(m.layers[0].w, 100);
        assert_eq!(m.layers.len(), 3);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let m = Mlp::new(3, &MlpConfig { hidden_layers: 2, hidden_width: 5, ..MlpConfig::default() }, 0).unwrap();
        let mut p = vec![0.0f64; m.n_params];
        let mut s = 17u64;
        m.init(&mut p, || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        });
        for (k, v) in p.iter_mut().enumerate() {
            *v += 0.01 * k as f64 % 0.07;
        }
        let x = vec![0.3, -0.2, 0.5, 0.1, 0.4, -0.6];
        let mut cache = MlpCache::default();
        let mut y = vec![0.0; 2];
        m.forward(&p, &x, 2, &mut y, &mut cache);
        let mut grad = vec![0.0; m.n_params];
        let mut d_x = vec![0.0; 6];
        m.backward(&p, &x, 2, &[1.0, 1.0], &mut cache, &mut grad, &mut d_x);
        let h = 1e-6;
        for k in 0..6 {
            let eval = |dx: f64| {
                let mut xx = x.clone();
                xx[k] += dx;
                let mut yy = vec![0.0; 2];
                m.forward(&p, &xx, 2, &mut yy, &mut MlpCache::default());
                yy[0] + yy[1]
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            assert!((fd - d_x[k]).abs() < 1e-7, "{k}: {fd} vs {}", d_x[k]);
        }
        for k in 0..m.n_params {
            let eval = |dp: f64| {
                let mut pp = p.clone();
                pp[k] += dp;
                let mut yy = vec![0.0; 2];
                m.forward(&pp, &x, 2, &mut yy, &mut MlpCache::default());
                yy[0] + yy[1]
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-7, "param {k}: {fd} vs {}", grad[k]);
        }
    }
}
