//! A small fully connected network with tanh hidden units, exact
//! reverse-mode gradients, and an Adam optimizer.
//!
//! When built with `seed_input`, the forecaster's random seed `r` is appended
//! to the input of every layer: to the raw features and to each hidden
//! activation. The output layer is linear.
//!
//! Parameters live in one flat vector. Layer `l` maps `n_in = sizes[l] (+1)`
//! inputs to `n_out = sizes[l + 1]` outputs and occupies `n_out * n_in`
//! row-major weights followed by `n_out` biases.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::math::{sigmoid, softplus};
use crate::{Error, Result};

/// Default lower bound added to the softplus scale head.
pub const SIGMA_FLOOR: f64 = 1e-3;

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerShape {
    n_in: usize,
    n_out: usize,
    offset: usize,
}

impl LayerShape {
    fn bias_offset(&self) -> usize {
        self.offset + self.n_in * self.n_out
    }

    fn end(&self) -> usize {
        self.bias_offset() + self.n_out
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    sizes: Vec<usize>,
    seed_input: bool,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
    // Identifies the parameter values a trace was produced with.
    stamp: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.sizes == other.sizes
            && self.seed_input == other.seed_input
            && self.params == other.params
    }
}

fn layer_shapes(sizes: &[usize], seed_input: bool) -> Result<Vec<LayerShape>> {
    if sizes.len() < 3 {
        return Err(Error::config(
            "layer sizes need an input, at least one hidden layer, and an output",
        ));
    }
    if sizes.contains(&0) {
        return Err(Error::config("layer sizes must be at least 1"));
    }
    let extra = usize::from(seed_input);
    let mut offset = 0;
    Ok(sizes
        .windows(2)
        .map(|w| {
            let shape = LayerShape {
                n_in: w[0] + extra,
                n_out: w[1],
                offset,
            };
            offset = shape.end();
            shape
        })
        .collect())
}

/// Number of parameters for `sizes = [d_in, h_1, ..., h_L, d_out]`.
pub fn param_count(sizes: &[usize], seed_input: bool) -> Result<usize> {
    Ok(layer_shapes(sizes, seed_input)?
        .last()
        .map_or(0, LayerShape::end))
}

impl Mlp {
    /// All-zero parameters.
    pub fn zeros(sizes: &[usize], seed_input: bool) -> Result<Self> {
        let layers = layer_shapes(sizes, seed_input)?;
        let count = layers.last().map_or(0, LayerShape::end);
        Ok(Self {
            sizes: sizes.to_vec(),
            seed_input,
            layers,
            params: vec![0.0; count],
            stamp: fresh_stamp(),
        })
    }

    /// Weights drawn from `N(0, 1 / n_in)` (LeCun normal), biases zero.
    pub fn init(sizes: &[usize], seed_input: bool, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes, seed_input)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in net.layers.clone() {
            let normal = Normal::new(0.0, (1.0 / layer.n_in as f64).sqrt())
                .expect("positive standard deviation");
            for w in &mut net.params[layer.offset..layer.bias_offset()] {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(net)
    }

    /// Rebuild from a flat parameter vector, e.g. when loading a checkpoint.
    pub fn from_params(sizes: &[usize], seed_input: bool, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes, seed_input)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::domain("network parameters must be finite"));
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn seed_input(&self) -> bool {
        self.seed_input
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access to the parameters. Invalidates outstanding traces.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.stamp = fresh_stamp();
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn new_trace(&self) -> ForwardTrace {
        let extra = usize::from(self.seed_input);
        ForwardTrace {
            stamp: 0,
            inputs: self.layers.iter().map(|l| vec![0.0; l.n_in]).collect(),
            outputs: vec![0.0; self.output_dim()],
            extra,
        }
    }

    /// Forward pass. `r` is ignored for networks built without `seed_input`.
    pub fn forward(&self, x: &[f64], r: f64) -> Result<ForwardTrace> {
        let mut trace = self.new_trace();
        self.forward_into(&mut trace, x, r)?;
        Ok(trace)
    }

    /// Forward pass reusing the buffers of `trace`.
    pub fn forward_into(&self, trace: &mut ForwardTrace, x: &[f64], r: f64) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) || !r.is_finite() {
            return Err(Error::domain("network inputs must be finite"));
        }
        let fits = trace.inputs.len() == self.layers.len()
            && trace.outputs.len() == self.output_dim()
            && trace
                .inputs
                .iter()
                .zip(&self.layers)
                .all(|(v, l)| v.len() == l.n_in);
        if !fits {
            *trace = self.new_trace();
        }
        let extra = usize::from(self.seed_input);
        trace.inputs[0][..x.len()].copy_from_slice(x);
        if self.seed_input {
            trace.inputs[0][x.len()] = r;
        }
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (w, b) = self.layer_params(layer);
            if l < last {
                let (head, tail) = trace.inputs.split_at_mut(l + 1);
                let input = &head[l];
                let next = &mut tail[0];
                for o in 0..layer.n_out {
                    let row = &w[o * layer.n_in..(o + 1) * layer.n_in];
                    next[o] = (b[o] + dot(row, input)).tanh();
                }
                if extra == 1 {
                    next[layer.n_out] = r;
                }
            } else {
                let input = &trace.inputs[l];
                for o in 0..layer.n_out {
                    let row = &w[o * layer.n_in..(o + 1) * layer.n_in];
                    trace.outputs[o] = b[o] + dot(row, input);
                }
            }
        }
        trace.stamp = self.stamp;
        Ok(())
    }

    fn layer_params(&self, layer: &LayerShape) -> (&[f64], &[f64]) {
        (
            &self.params[layer.offset..layer.bias_offset()],
            &self.params[layer.bias_offset()..layer.end()],
        )
    }

    /// Accumulate into `grad` the gradient of `Σ_k d_out[k] * output_k`
    /// with respect to the parameters.
    pub fn backward(&self, trace: &ForwardTrace, d_out: &[f64], grad: &mut [f64]) -> Result<()> {
        if trace.stamp != self.stamp {
            return Err(Error::Contract(
                "trace was not produced by this network's current parameters".into(),
            ));
        }
        if d_out.len() != self.output_dim() {
            return Err(Error::Shape {
                expected: self.output_dim(),
                got: d_out.len(),
            });
        }
        if grad.len() != self.params.len() {
            return Err(Error::Shape {
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        let mut delta: Vec<f64> = d_out.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.inputs[l];
            let (w, _) = self.layer_params(layer);
            let (gw, gb) = grad[layer.offset..layer.end()].split_at_mut(layer.n_in * layer.n_out);
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let grow = &mut gw[o * layer.n_in..(o + 1) * layer.n_in];
                for (g, &a) in grow.iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l == 0 {
                break;
            }
            // the trailing seed slot of this layer's input is not a unit
            let units = layer.n_in - trace.extra;
            let mut prev = vec![0.0; units];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &w[o * layer.n_in..o * layer.n_in + units];
                for (p, &wv) in prev.iter_mut().zip(row) {
                    *p += d * wv;
                }
            }
            for (p, &a) in prev.iter_mut().zip(input) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
        Ok(())
    }

    /// Forward pass through the Gaussian head: `mu = out[0]`,
    /// `sigma = softplus(out[1]) + sigma_floor`.
    pub fn forward_gaussian(
        &self,
        x: &[f64],
        r: f64,
        sigma_floor: f64,
    ) -> Result<(ForwardTrace, f64, f64)> {
        let trace = self.forward(x, r)?;
        let (mu, sigma) = trace.gaussian(sigma_floor)?;
        Ok((trace, mu, sigma))
    }

    /// Gradient of `d_mu * mu + d_sigma * sigma` through the Gaussian head.
    pub fn backward_gaussian(
        &self,
        trace: &ForwardTrace,
        d_mu: f64,
        d_sigma: f64,
        grad: &mut [f64],
    ) -> Result<()> {
        if self.output_dim() != 2 {
            return Err(Error::Shape {
                expected: 2,
                got: self.output_dim(),
            });
        }
        let d_s = d_sigma * sigmoid(trace.outputs[1]);
        self.backward(trace, &[d_mu, d_s], grad)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    stamp: u64,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
    extra: usize,
}

impl ForwardTrace {
    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    /// Input vector (with the seed slot, if any) fed to layer `l`.
    pub fn layer_input(&self, l: usize) -> &[f64] {
        &self.inputs[l]
    }

    pub fn gaussian(&self, sigma_floor: f64) -> Result<(f64, f64)> {
        if self.outputs.len() != 2 {
            return Err(Error::Shape {
                expected: 2,
                got: self.outputs.len(),
            });
        }
        Ok((self.outputs[0], softplus(self.outputs[1]) + sigma_floor))
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of `params` in place. A non-finite gradient leaves both the
    /// parameters and the optimizer state untouched.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Shape {
                expected: self.m.len(),
                got: grad.len().min(params.len()),
            });
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Training {
                epoch: 0,
                message: format!(
                    "non-finite gradient {} at parameter {i} (Adam step {})",
                    grad[i],
                    self.step + 1
                ),
                last_good: None,
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }

    pub fn step_mlp(&mut self, net: &mut Mlp, grad: &[f64]) -> Result<()> {
        self.step(net.params_mut(), grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_includes_seed_slots() {
        let expected = (4 * 16 + 16) + ((16 + 1) * 16 + 16) + (17 * 2 + 2);
        assert_eq!(param_count(&[3, 16, 16, 2], true).unwrap(), expected);
        assert_eq!(
            Mlp::init(&[3, 16, 16, 2], true, 0).unwrap().num_params(),
            expected
        );
        assert_eq!(
            param_count(&[3, 16, 2], false).unwrap(),
            (3 * 16 + 16) + (16 * 2 + 2)
        );
    }

    #[test]
    fn init_rejects_bad_sizes() {
        assert!(Mlp::init(&[], true, 0).is_err());
        assert!(Mlp::init(&[3, 2], true, 0).is_err());
        assert!(Mlp::init(&[3, 0, 2], true, 0).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let a = Mlp::init(&[3, 8, 8, 2], true, 1).unwrap();
        let b = Mlp::init(&[3, 8, 8, 2], true, 1).unwrap();
        let c = Mlp::init(&[3, 8, 8, 2], true, 2).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
        // biases are zero
        let last = a.layers.last().unwrap();
        assert!(a.params()[last.bias_offset()..last.end()]
            .iter()
            .all(|&b| b == 0.0));
    }

    #[test]
    fn zero_network_outputs() {
        let net = Mlp::zeros(&[3, 4, 2], true).unwrap();
        let (_, mu, sigma) = net
            .forward_gaussian(&[1.0, -2.0, 0.5], 0.3, SIGMA_FLOOR)
            .unwrap();
        assert_eq!(mu, 0.0);
        assert!((sigma - (2f64.ln() + 1e-3)).abs() < 1e-15);
        assert!((sigma - 0.69415).abs() < 1e-5);
    }

    #[test]
    fn seed_reaches_output() {
        let net = Mlp::init(&[2, 16, 16, 2], true, 3).unwrap();
        let a = net.forward(&[0.4, -0.1], 0.2).unwrap();
        let b = net.forward(&[0.4, -0.1], 0.8).unwrap();
        assert_ne!(a.outputs(), b.outputs());
        // the seed slot is present in every layer input
        for l in 0..3 {
            assert_eq!(*a.layer_input(l).last().unwrap(), 0.2);
        }
    }

    #[test]
    fn sigma_respects_floor() {
        let mut net = Mlp::init(&[1, 8, 2], true, 4).unwrap();
        for p in net.params_mut() {
            *p *= 50.0;
        }
        for i in 0..10_000 {
            let x = (i as f64 / 100.0) - 50.0;
            let (_, _, sigma) = net
                .forward_gaussian(&[x], (i % 97) as f64 / 96.0, SIGMA_FLOOR)
                .unwrap();
            assert!(sigma >= SIGMA_FLOOR);
        }
    }

    #[test]
    fn forward_rejects_bad_input() {
        let net = Mlp::init(&[2, 4, 2], true, 0).unwrap();
        assert!(matches!(net.forward(&[1.0], 0.5), Err(Error::Shape { .. })));
        assert!(matches!(
            net.forward(&[1.0, f64::NAN], 0.5),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn stale_trace_is_rejected() {
        let mut net = Mlp::init(&[2, 4, 2], true, 0).unwrap();
        let trace = net.forward(&[1.0, 0.0], 0.5).unwrap();
        net.params_mut()[0] += 1.0;
        let mut grad = vec![0.0; net.num_params()];
        assert!(matches!(
            net.backward(&trace, &[1.0, 0.0], &mut grad),
            Err(Error::Contract(_))
        ));
        let other = Mlp::init(&[2, 4, 2], true, 0).unwrap();
        assert!(other.backward(&trace, &[1.0, 0.0], &mut grad).is_err());
    }

    fn gaussian_objective(net: &Mlp, x: &[f64], r: f64, d_mu: f64, d_sigma: f64) -> f64 {
        let (_, mu, sigma) = net.forward_gaussian(x, r, SIGMA_FLOOR).unwrap();
        d_mu * mu + d_sigma * sigma
    }

    #[test]
    fn backward_matches_finite_differences() {
        let net = Mlp::init(&[3, 5, 4, 2], true, 11).unwrap();
        let x = [0.3, -1.2, 0.8];
        let r = 0.37;
        let (d_mu, d_sigma) = (0.7, -1.3);
        let trace = net.forward(&x, r).unwrap();
        let mut grad = vec![0.0; net.num_params()];
        net.backward_gaussian(&trace, d_mu, d_sigma, &mut grad)
            .unwrap();

        let h = 1e-5;
        for (i, &g) in grad.iter().enumerate() {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            let fd = (gaussian_objective(&plus, &x, r, d_mu, d_sigma)
                - gaussian_objective(&minus, &x, r, d_mu, d_sigma))
                / (2.0 * h);
            let scale = fd.abs().max(g.abs()).max(1e-6);
            assert!((fd - g).abs() / scale < 1e-4, "param {i}: fd {fd} vs {g}");
        }
    }

    #[test]
    fn backward_is_linear() {
        let net = Mlp::init(&[2, 6, 6, 2], true, 5).unwrap();
        let trace = net.forward(&[0.1, 0.9], 0.6).unwrap();
        let mut zero = vec![0.0; net.num_params()];
        net.backward_gaussian(&trace, 0.0, 0.0, &mut zero).unwrap();
        assert!(zero.iter().all(|&g| g == 0.0));

        let mut g1 = vec![0.0; net.num_params()];
        let mut g2 = vec![0.0; net.num_params()];
        net.backward_gaussian(&trace, 1.0, 0.0, &mut g1).unwrap();
        net.backward_gaussian(&trace, 2.0, 0.0, &mut g2).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut params = vec![1.0, -2.0];
        let mut adam = Adam::new(2, 0.1);
        adam.step(&mut params, &[0.0, 0.0]).unwrap();
        assert_eq!(params, vec![1.0, -2.0]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn adam_minimizes_square() {
        // independent scalar Adam written out longhand
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=500 {
            let g = 2.0 * w;
            m = 0.9 * m + (1.0 - 0.9) * g;
            v = 0.999 * v + (1.0 - 0.999) * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        assert!(w.abs() < 1e-2);

        let mut params = vec![1.0];
        let mut adam = Adam::new(1, 0.1);
        for _ in 0..500 {
            let g = [2.0 * params[0]];
            adam.step(&mut params, &g).unwrap();
        }
        assert!(params[0].abs() < 1e-2);
        assert_eq!(params[0], w);
    }

    #[test]
    fn adam_is_deterministic_and_rejects_nan() {
        let run = || {
            let mut p = vec![0.5, 0.25, -1.0];
            let mut adam = Adam::new(3, 0.01);
            for k in 0..20 {
                let g: Vec<f64> = p.iter().map(|x| x * k as f64).collect();
                adam.step(&mut p, &g).unwrap();
            }
            p
        };
        assert_eq!(run(), run());

        let mut p = vec![1.0];
        let mut adam = Adam::new(1, 0.1);
        assert!(matches!(
            adam.step(&mut p, &[f64::NAN]),
            Err(Error::Training { .. })
        ));
        assert_eq!(p, vec![1.0]);
        assert_eq!(adam.steps(), 0);
    }
}
