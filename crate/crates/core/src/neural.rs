//! Dense feed-forward network with ReLU hidden layers, a linear output layer,
//! backpropagation and Adam.
//!
//! Weights are stored input-major: for a layer with `n_in` inputs and `n_out`
//! outputs, `weights[k * n_out + j]` connects input `k` to output `j`. The
//! forward pass is then a sequence of contiguous axpy updates, which matters
//! for the wide output layer (one unit per joint action).

use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    n_in: usize,
    n_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            biases: vec![0.0; n_out],
        }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    #[inline]
    pub fn weight(&self, input: usize, output: usize) -> f64 {
        self.weights[input * self.n_out + output]
    }

    fn row(&self, input: usize) -> &[f64] {
        &self.weights[input * self.n_out..(input + 1) * self.n_out]
    }

    /// `y = b + Σ_k x_k W_k`, accumulated in input order. Zero inputs are
    /// skipped and the rest are applied four rows per pass over `y`; the
    /// left-to-right sum keeps the rounding of one row at a time.
    fn affine_into(&self, x: &[f64], y: &mut Vec<f64>) {
        y.clear();
        y.extend_from_slice(&self.biases);
        let active: Vec<usize> = (0..x.len()).filter(|&k| x[k] != 0.0).collect();
        let mut quads = active.chunks_exact(4);
        for q in &mut quads {
            let (a0, a1, a2, a3) = (x[q[0]], x[q[1]], x[q[2]], x[q[3]]);
            let rows = self.row(q[0]).iter().zip(self.row(q[1])).zip(self.row(q[2])).zip(self.row(q[3]));
            for (yj, (((&w0, &w1), &w2), &w3)) in y.iter_mut().zip(rows) {
                *yj = *yj + a0 * w0 + a1 * w1 + a2 * w2 + a3 * w3;
            }
        }
        for &k in quads.remainder() {
            let xk = x[k];
            for (yj, &w) in y.iter_mut().zip(self.row(k)) {
                *yj += xk * w;
            }
        }
    }

    fn affine_at(&self, x: &[f64], output: usize) -> f64 {
        x.iter()
            .enumerate()
            .fold(self.biases[output], |acc, (k, &xk)| {
                acc + xk * self.weights[k * self.n_out + output]
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Gradient of a scalar loss with respect to every parameter of an [`Mlp`],
/// laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

/// Post-activation outputs of every hidden layer for one input.
#[derive(Debug, Clone, Default)]
pub struct Activations {
    hidden: Vec<Vec<f64>>,
}

impl Activations {
    /// Output of the last hidden layer (the input when there is none).
    fn top<'a>(&'a self, input: &'a [f64]) -> &'a [f64] {
        self.hidden.last().map(Vec::as_slice).unwrap_or(input)
    }
}

fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

impl Mlp {
    /// Glorot-uniform weights in ±√(6/(fan_in+fan_out)), zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.n_in + layer.n_out) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-limit..limit);
            }
        }
        net
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        assert!(sizes.iter().all(|&n| n > 0), "layer sizes must be positive");
        Mlp {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        }
    }

    /// Input width followed by every layer's output width.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.n_out))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").n_out
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|x| x.is_finite()))
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        Ok(())
    }

    /// Runs every hidden layer, leaving their activations in `acts`.
    pub fn forward_hidden(&self, input: &[f64], acts: &mut Activations) -> Result<()> {
        self.check_input(input)?;
        let hidden = self.layers.len() - 1;
        acts.hidden.resize_with(hidden, Vec::new);
        for i in 0..hidden {
            let (done, rest) = acts.hidden.split_at_mut(i);
            let x = done.last().map(Vec::as_slice).unwrap_or(input);
            self.layers[i].affine_into(x, &mut rest[0]);
            relu_in_place(&mut rest[0]);
        }
        Ok(())
    }

    /// All outputs given hidden activations from [`Mlp::forward_hidden`].
    pub fn output_from(&self, input: &[f64], acts: &Activations, out: &mut Vec<f64>) {
        self.layers
            .last()
            .expect("at least one layer")
            .affine_into(acts.top(input), out);
    }

    /// A single output given hidden activations.
    pub fn output_at(&self, input: &[f64], acts: &Activations, output: usize) -> f64 {
        self.layers
            .last()
            .expect("at least one layer")
            .affine_at(acts.top(input), output)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut acts = Activations::default();
        self.forward_hidden(input, &mut acts)?;
        let mut out = Vec::with_capacity(self.output_dim());
        self.output_from(input, &acts, &mut out);
        Ok(out)
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.n_in, l.n_out))
                .collect(),
        }
    }

    /// Gradient of `½ Σ_{j ∈ mask} (target_j − out_j)²`. Outputs outside the
    /// mask contribute nothing.
    pub fn backward(&self, input: &[f64], target: &[f64], action_mask: &[bool]) -> Result<Gradients> {
        let n = self.output_dim();
        for len in [target.len(), action_mask.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        let mut acts = Activations::default();
        self.forward_hidden(input, &mut acts)?;
        let mut out = Vec::new();
        self.output_from(input, &acts, &mut out);
        let delta: Vec<f64> = out
            .iter()
            .zip(target)
            .zip(action_mask)
            .map(|((&o, &t), &m)| if m { o - t } else { 0.0 })
            .collect();
        let mut grads = self.zero_gradients();
        self.backprop(input, &acts, OutputDelta::Dense(&delta), &mut grads);
        Ok(grads)
    }

    /// Adds `δ · ∂out_action/∂θ` to `grads`, the gradient of a loss whose
    /// derivative with respect to output `action` is `delta`.
    pub fn accumulate_output_gradient(
        &self,
        input: &[f64],
        acts: &Activations,
        action: usize,
        delta: f64,
        grads: &mut Gradients,
    ) {
        self.backprop(input, acts, OutputDelta::Single(action, delta), grads);
    }

    fn backprop(&self, input: &[f64], acts: &Activations, out_delta: OutputDelta<'_>, grads: &mut Gradients) {
        let last = self.layers.len() - 1;
        let top = acts.top(input);
        let output_layer = &self.layers[last];
        let g = &mut grads.layers[last];

        // Error signal at the last hidden layer, before its ReLU.
        let mut delta: Vec<f64> = vec![0.0; output_layer.n_in];
        match out_delta {
            OutputDelta::Single(j, d) => {
                g.biases[j] += d;
                for (k, &x) in top.iter().enumerate() {
                    g.weights[k * output_layer.n_out + j] += x * d;
                    delta[k] = output_layer.weight(k, j) * d;
                }
            }
            OutputDelta::Dense(d) => {
                for (gb, &dj) in g.biases.iter_mut().zip(d) {
                    *gb += dj;
                }
                for (k, &x) in top.iter().enumerate() {
                    let row = k * output_layer.n_out..(k + 1) * output_layer.n_out;
                    let mut back = 0.0;
                    for ((gw, &w), &dj) in g.weights[row.clone()]
                        .iter_mut()
                        .zip(&output_layer.weights[row])
                        .zip(d)
                    {
                        *gw += x * dj;
                        back += w * dj;
                    }
                    delta[k] = back;
                }
            }
        }

        for i in (0..last).rev() {
            let layer = &self.layers[i];
            let out = &acts.hidden[i];
            for (d, &o) in delta.iter_mut().zip(out) {
                if o <= 0.0 {
                    *d = 0.0;
                }
            }
            let x = if i == 0 { input } else { &acts.hidden[i - 1] };
            let g = &mut grads.layers[i];
            for (gb, &d) in g.biases.iter_mut().zip(&delta) {
                *gb += d;
            }
            let mut next = vec![0.0; layer.n_in];
            for (k, &xk) in x.iter().enumerate() {
                let row = k * layer.n_out..(k + 1) * layer.n_out;
                let mut back = 0.0;
                for ((gw, &w), &d) in g.weights[row.clone()]
                    .iter_mut()
                    .zip(&layer.weights[row])
                    .zip(&delta)
                {
                    *gw += xk * d;
                    back += w * d;
                }
                next[k] = back;
            }
            delta = next;
        }
    }

    /// Overwrites `dst` with this network's parameters.
    pub fn copy_into(&self, dst: &mut Mlp) -> Result<()> {
        if self.sizes() != dst.sizes() {
            return Err(Error::DimensionMismatch {
                expected: self.num_parameters(),
                actual: dst.num_parameters(),
            });
        }
        for (s, d) in self.layers.iter().zip(&mut dst.layers) {
            d.weights.copy_from_slice(&s.weights);
            d.biases.copy_from_slice(&s.biases);
        }
        Ok(())
    }

    /// Writes a checkpoint: magic, format version, layer count, the
    /// `layers + 1` widths, then each layer's row-major `(n_in, n_out)`
    /// weights followed by its biases. Integers are u32 LE, reals f64 LE.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MLP_MAGIC)?;
        w.write_all(&MLP_VERSION.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for n in self.sizes() {
            w.write_all(&(n as u32).to_le_bytes())?;
        }
        for layer in &self.layers {
            write_f64s(&mut w, &layer.weights)?;
            write_f64s(&mut w, &layer.biases)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MLP_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != MLP_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let n_layers = read_u32(&mut r)? as usize;
        if n_layers == 0 || n_layers > 64 {
            return Err(Error::Checkpoint(format!("implausible layer count {n_layers}")));
        }
        let sizes = (0..=n_layers)
            .map(|_| read_u32(&mut r).map(|n| n as usize))
            .collect::<Result<Vec<_>>>()?;
        if sizes.iter().any(|&n| n == 0 || n > 1 << 24) {
            return Err(Error::Checkpoint(format!("implausible layer sizes {sizes:?}")));
        }
        let mut net = Mlp::zeros(&sizes);
        for layer in &mut net.layers {
            read_f64s(&mut r, &mut layer.weights)?;
            read_f64s(&mut r, &mut layer.biases)?;
        }
        Ok(net)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }
}

enum OutputDelta<'a> {
    Single(usize, f64),
    Dense(&'a [f64]),
}

const MLP_MAGIC: &[u8; 4] = b"FMLP";
const MLP_VERSION: u32 = 1;

pub(crate) fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> std::io::Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, out: &mut [f64]) -> Result<()> {
    let mut b = [0u8; 8];
    for x in out {
        read_exact(r, &mut b)?;
        *x = f64::from_le_bytes(b);
    }
    Ok(())
}

impl Gradients {
    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            for x in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *x *= factor;
            }
        }
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.biases.fill(0.0);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }
}

/// Bias-corrected Adam moments for every parameter of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Vec<Layer>,
    second: Vec<Layer>,
}

impl AdamState {
    pub const DEFAULT_LEARNING_RATE: f64 = 0.001;

    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        let zeros = net.zero_gradients().layers;
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// One Adam update of `net` along `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers.len()
            || self.first.len() != net.layers.len()
            || grads
                .layers
                .iter()
                .zip(&net.layers)
                .any(|(g, l)| g.weights.len() != l.weights.len() || g.biases.len() != l.biases.len())
        {
            return Err(Error::DimensionMismatch {
                expected: net.num_parameters(),
                actual: grads.iter().count(),
            });
        }
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let t = self.step as i32;
        let step_size = self.learning_rate / (1.0 - b1.powi(t));
        let v_correction = 1.0 / (1.0 - b2.powi(t));
        let eps = self.epsilon;

        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                // Moments of rarely-updated output units decay geometrically;
                // flushing them before they turn subnormal keeps this loop fast.
                let m_next = b1 * *m + (1.0 - b1) * g;
                let v_next = b2 * *v + (1.0 - b2) * g * g;
                *m = if m_next.abs() < f64::MIN_POSITIVE { 0.0 } else { m_next };
                *v = if v_next < f64::MIN_POSITIVE { 0.0 } else { v_next };
                *p -= step_size * *m / ((*v * v_correction).sqrt() + eps);
            }
        };
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            update(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights);
            update(&mut layer.biases, &g.biases, &mut m.biases, &mut v.biases);
        }
        Ok(())
    }

    pub fn first_moments(&self) -> impl Iterator<Item = f64> + '_ {
        self.first
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }

    pub fn second_moments(&self) -> impl Iterator<Item = f64> + '_ {
        self.second
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }

    /// Hyperparameters, step counter, then both moment sets in network order.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write_f64s(
            &mut w,
            &[self.learning_rate, self.beta1, self.beta2, self.epsilon],
        )?;
        w.write_all(&self.step.to_le_bytes())?;
        for l in self.first.iter().chain(&self.second) {
            write_f64s(&mut w, &l.weights)?;
            write_f64s(&mut w, &l.biases)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R, net: &Mlp) -> Result<Self> {
        let mut hyper = [0.0; 4];
        read_f64s(&mut r, &mut hyper)?;
        let mut state = AdamState::new(net, hyper[0]);
        state.beta1 = hyper[1];
        state.beta2 = hyper[2];
        state.epsilon = hyper[3];
        state.step = read_u64(&mut r)?;
        for l in state.first.iter_mut().chain(state.second.iter_mut()) {
            read_f64s(&mut r, &mut l.weights)?;
            read_f64s(&mut r, &mut l.biases)?;
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::seeded_rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 5]);
        assert_eq!(net.forward(&[0.3, -2.0, 7.0]).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn single_layer_bias_passthrough() {
        let mut net = Mlp::zeros(&[2, 2]);
        net.layers[0].weights = vec![1.0, 0.0, 0.0, 1.0];
        net.layers[0].biases = vec![0.5, -1.5];
        assert_eq!(net.forward(&[0.0, 0.0]).unwrap(), vec![0.5, -1.5]);
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.5, 0.5]);
    }

    #[test]
    fn golden_forward() {
        // Hand-evaluated: relu(x W1 + b1) W2 + b2 with W stored (n_in, n_out).
        let mut net = Mlp::zeros(&[2, 3, 2]);
        net.layers[0].weights = vec![0.5, -1.0, 0.25, 1.5, 0.75, -0.5];
        net.layers[0].biases = vec![0.1, 0.2, -0.3];
        net.layers[1].weights = vec![1.0, -2.0, 0.5, 0.25, -1.0, 3.0];
        net.layers[1].biases = vec![0.05, -0.05];
        let out = net.forward(&[1.0, 2.0]).unwrap();
        // hidden = relu([3.6, 0.7, -1.05]) = [3.6, 0.7, 0]
        // out = [3.6 + 0.35 + 0.05, -7.2 + 0.175 - 0.05]
        assert!((out[0] - 4.0).abs() < 1e-12);
        assert!((out[1] + 7.075).abs() < 1e-12);
    }

    #[test]
    fn seeded_golden_forward() {
        // Computed with numpy from the checkpoint bytes of this network.
        let net = Mlp::new(&[9, 32, 32, 32, 16], &mut seeded_rng(42));
        let x = [1.0, 2.0 / 3.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0];
        let expected = [
            -0.26247367940690586,
            0.12500200110943746,
            -0.10162494721761207,
            0.07859342131352731,
            -0.19551459446000358,
            -0.03245047425637193,
            0.31195421899524056,
            0.08198191214514979,
            0.28736349051152077,
            -0.5169608441011679,
            0.06730111806319494,
            -0.4634842768725767,
            -0.04281597006131688,
            0.12973258889099046,
            0.2967499033313673,
            -0.07078014232821225,
        ];
        for (o, e) in net.forward(&x).unwrap().iter().zip(expected) {
            assert!((o - e).abs() < 1e-12, "{o} vs {e}");
        }
    }

    #[test]
    fn dimension_mismatch() {
        let net = Mlp::zeros(&[3, 2]);
        assert!(net.forward(&[1.0]).is_err());
        assert!(net.backward(&[1.0, 2.0, 3.0], &[0.0], &[true, false]).is_err());
    }

    #[test]
    fn matching_target_gives_zero_gradient() {
        let net = Mlp::new(&[3, 4, 4, 2], &mut seeded_rng(1));
        let x = [0.2, 0.5, 1.0];
        let out = net.forward(&x).unwrap();
        let g = net.backward(&x, &out, &[true, false]).unwrap();
        assert!(g.iter().all(|v| v == 0.0));
    }

    #[test]
    fn linear_neuron_gradient() {
        let mut net = Mlp::zeros(&[1, 1]);
        net.layers[0].weights = vec![0.7];
        let (x, y) = (2.0, 3.0);
        let g = net.backward(&[x], &[y], &[true]).unwrap();
        assert!((g.layers[0].weights[0] - (0.7 * x - y) * x).abs() < 1e-12);
        assert!((g.layers[0].biases[0] - (0.7 * x - y)).abs() < 1e-12);
    }

    #[test]
    fn masked_outputs_do_not_contribute() {
        let net = Mlp::new(&[2, 3, 3], &mut seeded_rng(3));
        let x = [0.4, 0.9];
        let g = net.backward(&x, &[5.0, -5.0, 9.0], &[false, true, false]).unwrap();
        let out = &g.layers[1];
        for k in 0..3 {
            assert_eq!(out.weights[k * 3], 0.0);
            assert_eq!(out.weights[k * 3 + 2], 0.0);
        }
        assert_eq!(out.biases[0], 0.0);
        assert_ne!(out.biases[1], 0.0);
    }

    #[test]
    fn sparse_path_matches_dense() {
        let net = Mlp::new(&[3, 5, 4, 6], &mut seeded_rng(11));
        let x = [0.1, 0.7, 1.0];
        let out = net.forward(&x).unwrap();
        let mut target = out.clone();
        target[4] += 1.7;
        let mask: Vec<bool> = (0..6).map(|j| j == 4).collect();
        let dense = net.backward(&x, &target, &mask).unwrap();

        let mut acts = Activations::default();
        net.forward_hidden(&x, &mut acts).unwrap();
        assert!((net.output_at(&x, &acts, 4) - out[4]).abs() < 1e-12);
        let mut sparse = net.zero_gradients();
        net.accumulate_output_gradient(&x, &acts, 4, out[4] - target[4], &mut sparse);
        for (a, b) in dense.iter().zip(sparse.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters() {
        let mut net = Mlp::new(&[2, 3, 1], &mut seeded_rng(2));
        let before = net.clone();
        let mut adam = AdamState::new(&net, 0.01);
        let g = net.zero_gradients();
        adam.step(&mut net, &g).unwrap();
        assert_eq!(net, before);
        assert_eq!(adam.step, 1);
        assert!(adam.first_moments().all(|m| m == 0.0));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut net = Mlp::zeros(&[1, 1]);
        let mut adam = AdamState::new(&net, 0.05);
        let mut g = net.zero_gradients();
        g.layers[0].weights[0] = 3.0;
        g.layers[0].biases[0] = -0.002;
        adam.step(&mut net, &g).unwrap();
        assert!((net.layers[0].weights[0] + 0.05).abs() < 1e-6);
        assert!((net.layers[0].biases[0] - 0.05).abs() < 1e-4);
    }

    #[test]
    fn adam_moments_decay_after_gradient_stops() {
        let mut net = Mlp::zeros(&[1, 1]);
        let mut adam = AdamState::new(&net, 0.01);
        let mut g = net.zero_gradients();
        g.layers[0].weights[0] = 1.0;
        adam.step(&mut net, &g).unwrap();
        let m1: Vec<f64> = adam.first_moments().collect();
        let g = net.zero_gradients();
        adam.step(&mut net, &g).unwrap();
        let m2: Vec<f64> = adam.first_moments().collect();
        assert!(m2[0].abs() < m1[0].abs());
    }

    #[test]
    fn adam_minimizes_scalar_quadratic() {
        // f(w) = (w − 3)², w0 = 0, lr 0.1: bias-free single weight on input 1.
        let mut net = Mlp::zeros(&[1, 1]);
        let mut adam = AdamState::new(&net, 0.1);
        for _ in 0..100 {
            let w = net.layers[0].weights[0];
            let mut g = net.zero_gradients();
            g.layers[0].weights[0] = 2.0 * (w - 3.0);
            adam.step(&mut net, &g).unwrap();
        }
        assert!((net.layers[0].weights[0] - 3.0).abs() < 0.1);
    }

    #[test]
    fn copy_then_perturb_diverges() {
        let src = Mlp::new(&[3, 4, 2], &mut seeded_rng(4));
        let mut dst = Mlp::zeros(&[3, 4, 2]);
        src.copy_into(&mut dst).unwrap();
        let x = [0.3, 0.2, 0.1];
        assert_eq!(src.forward(&x).unwrap(), dst.forward(&x).unwrap());
        let mut src = src;
        src.layers[1].biases[0] += 1.0;
        assert_ne!(src.forward(&x).unwrap(), dst.forward(&x).unwrap());
        assert!(src.copy_into(&mut Mlp::zeros(&[3, 5, 2])).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let net = Mlp::new(&[9, 32, 32, 32, 64], &mut seeded_rng(5));
        let bytes = net.to_bytes();
        let back = Mlp::from_bytes(&bytes).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_bytes(), bytes);
        assert!(Mlp::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Mlp::from_bytes(&bad).is_err());
    }

    #[test]
    fn adam_checkpoint_round_trip() {
        let mut net = Mlp::new(&[2, 3, 2], &mut seeded_rng(6));
        let mut adam = AdamState::new(&net, 0.001);
        let g = net.backward(&[0.5, 0.5], &[1.0, 2.0], &[true, true]).unwrap();
        adam.step(&mut net, &g).unwrap();
        let mut buf = Vec::new();
        adam.write_to(&mut buf).unwrap();
        assert_eq!(AdamState::read_from(buf.as_slice(), &net).unwrap(), adam);
    }
}
