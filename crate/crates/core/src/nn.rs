//! Feedforward networks with exact reverse-mode gradients.
//!
//! [`Mlp`] is a dense stack of affine layers with relu on the hidden layers
//! and a linear output. [`Mlp::backward`] returns the exact gradient of the
//! inner product `<output, output_grad>` with respect to every weight and
//! bias, which is all a distance- or regression-style loss needs: compose the
//! loss gradient at the output and pass it in as `output_grad`.
//!
//! [`GeneratorNet`] wraps an `Mlp` as the map `(z, obs) -> action sequence`
//! used by single-step generative policies. The flow-matching baseline wraps
//! the same `Mlp` with a different input layout (see `flow`).

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::tensor::DenseArray;

/// Hidden-layer activation. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

impl Activation {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Gradients for every parameter of an [`Mlp`], in layer order.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub weights: Vec<DenseArray>,
    pub biases: Vec<DenseArray>,
}

impl ParamGrads {
    /// Element-wise `self += other`.
    pub fn accumulate(&mut self, other: &ParamGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += *y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += *y;
            }
        }
    }

    /// Element-wise scale, used to turn an accumulated sum into a mean.
    pub fn scale(&mut self, factor: f64) {
        for a in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            for x in a.data_mut() {
                *x *= factor;
            }
        }
    }
}

/// Per-layer activations of one forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input; `activations[k+1]` is layer k's output.
    activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace holds at least the input")
    }
}

/// A dense feedforward network, f64 throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    /// `weights[k]` has shape `[layer_sizes[k], layer_sizes[k+1]]`, row-major.
    weights: Vec<DenseArray>,
    biases: Vec<DenseArray>,
    activation: Activation,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. Draw order is fixed (layer by
    /// layer, row-major) so a given init stream always yields the same net.
    pub fn init(layer_sizes: &[usize], activation: Activation, rng: &mut StreamRng) -> Result<Self> {
        Self::validate_sizes(layer_sizes)?;
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for k in 0..layer_sizes.len() - 1 {
            let (fan_in, fan_out) = (layer_sizes[k], layer_sizes[k + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.uniform(-limit, limit)).collect();
            weights.push(DenseArray::from_parts_unchecked(vec![fan_in, fan_out], data));
            biases.push(DenseArray::zeros(vec![fan_out]));
        }
        Ok(Self { layer_sizes: layer_sizes.to_vec(), weights, biases, activation })
    }

    /// All-zero parameters; useful for tests and as a checkpoint-load target.
    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        Self::validate_sizes(layer_sizes)?;
        let weights = (0..layer_sizes.len() - 1)
            .map(|k| DenseArray::zeros(vec![layer_sizes[k], layer_sizes[k + 1]]))
            .collect();
        let biases = (0..layer_sizes.len() - 1)
            .map(|k| DenseArray::zeros(vec![layer_sizes[k + 1]]))
            .collect();
        Ok(Self { layer_sizes: layer_sizes.to_vec(), weights, biases, activation })
    }

    fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn weights(&self) -> &[DenseArray] {
        &self.weights
    }

    pub fn biases(&self) -> &[DenseArray] {
        &self.biases
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [DenseArray] {
        &mut self.weights
    }

    pub(crate) fn biases_mut(&mut self) -> &mut [DenseArray] {
        &mut self.biases
    }

    /// Zero-shaped gradient buffers matching this net.
    pub fn zero_grads(&self) -> ParamGrads {
        ParamGrads {
            weights: self.weights.iter().map(|w| DenseArray::zeros(w.shape().to_vec())).collect(),
            biases: self.biases.iter().map(|b| DenseArray::zeros(b.shape().to_vec())).collect(),
        }
    }

    fn check_input(&self, input: &[f64], context: &str) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::dimension(
                format!("{context}: layer 0 input"),
                &[self.input_dim()],
                &[input.len()],
            ));
        }
        Ok(())
    }

    /// Forward pass. Pure: same parameters and input give bit-identical
    /// output on every call.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input, "Mlp::forward")?;
        let mut current = input.to_vec();
        for k in 0..self.num_layers() {
            current = self.layer_forward(k, &current);
        }
        if let Some(i) = current.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("Mlp::forward output element {i}")));
        }
        Ok(current)
    }

    /// Forward pass that keeps every layer's output for [`Mlp::backward`].
    pub fn forward_trace(&self, input: &[f64]) -> Result<ForwardTrace> {
        self.check_input(input, "Mlp::forward_trace")?;
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        activations.push(input.to_vec());
        for k in 0..self.num_layers() {
            let next = self.layer_forward(k, activations.last().unwrap());
            activations.push(next);
        }
        Ok(ForwardTrace { activations })
    }

    fn layer_forward(&self, k: usize, input: &[f64]) -> Vec<f64> {
        let out_dim = self.layer_sizes[k + 1];
        let w = self.weights[k].data();
        let mut out = self.biases[k].data().to_vec();
        for (i, &xi) in input.iter().enumerate() {
            let row = &w[i * out_dim..(i + 1) * out_dim];
            for (o, &wij) in row.iter().enumerate() {
                out[o] += xi * wij;
            }
        }
        if k + 1 < self.layer_sizes.len() - 1 {
            match self.activation {
                Activation::Relu => {
                    for v in &mut out {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
            }
        }
        out
    }

    /// Exact reverse-mode gradients of `<output, output_grad>` w.r.t. every
    /// weight and bias, given the trace of the corresponding forward pass.
    pub fn backward(&self, trace: &ForwardTrace, output_grad: &[f64]) -> Result<ParamGrads> {
        if output_grad.len() != self.output_dim() {
            return Err(Error::dimension("Mlp::backward output_grad", &[self.output_dim()], &[output_grad.len()]));
        }
        let mut grads = self.zero_grads();
        // Gradient w.r.t. the current layer's output, starting at the top.
        let mut upstream = output_grad.to_vec();
        for k in (0..self.num_layers()).rev() {
            let input = &trace.activations[k];
            let output = &trace.activations[k + 1];
            let out_dim = self.layer_sizes[k + 1];
            // Hidden layers: fold the relu mask into the upstream gradient.
            // relu(z) > 0 exactly when z > 0, so the stored activation is
            // enough to recover the mask (zero derivative taken at z == 0).
            if k + 1 < self.layer_sizes.len() - 1 {
                match self.activation {
                    Activation::Relu => {
                        for (g, &a) in upstream.iter_mut().zip(output.iter()) {
                            if a <= 0.0 {
                                *g = 0.0;
                            }
                        }
                    }
                }
            }
            let dw = grads.weights[k].data_mut();
            for (i, &xi) in input.iter().enumerate() {
                let row = &mut dw[i * out_dim..(i + 1) * out_dim];
                for (o, slot) in row.iter_mut().enumerate() {
                    *slot = xi * upstream[o];
                }
            }
            grads.biases[k].data_mut().copy_from_slice(&upstream);
            if k > 0 {
                let w = self.weights[k].data();
                let mut downstream = vec![0.0; self.layer_sizes[k]];
                for (i, slot) in downstream.iter_mut().enumerate() {
                    let row = &w[i * out_dim..(i + 1) * out_dim];
                    let mut acc = 0.0;
                    for (o, &wij) in row.iter().enumerate() {
                        acc += wij * upstream[o];
                    }
                    *slot = acc;
                }
                upstream = downstream;
            }
        }
        Ok(grads)
    }
}

/// The conditional generator: maps a latent vector plus a flattened
/// observation window to a predicted action sequence of shape
/// `[pred_horizon, action_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorNet {
    mlp: Mlp,
    latent_dim: usize,
    obs_dim: usize,
    pred_horizon: usize,
    action_dim: usize,
}

impl GeneratorNet {
    /// `hidden` lists the hidden-layer widths; the input width is
    /// `latent_dim + obs_dim` and the output width `pred_horizon * action_dim`.
    pub fn init(
        latent_dim: usize,
        obs_dim: usize,
        hidden: &[usize],
        pred_horizon: usize,
        action_dim: usize,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(latent_dim + obs_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(pred_horizon * action_dim);
        let mlp = Mlp::init(&sizes, Activation::Relu, rng)?;
        Ok(Self { mlp, latent_dim, obs_dim, pred_horizon, action_dim })
    }

    pub(crate) fn from_mlp(
        mlp: Mlp,
        latent_dim: usize,
        obs_dim: usize,
        pred_horizon: usize,
        action_dim: usize,
    ) -> Result<Self> {
        if mlp.input_dim() != latent_dim + obs_dim {
            return Err(Error::dimension("GeneratorNet input", &[latent_dim + obs_dim], &[mlp.input_dim()]));
        }
        if mlp.output_dim() != pred_horizon * action_dim {
            return Err(Error::dimension(
                "GeneratorNet output",
                &[pred_horizon * action_dim],
                &[mlp.output_dim()],
            ));
        }
        Ok(Self { mlp, latent_dim, obs_dim, pred_horizon, action_dim })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn pred_horizon(&self) -> usize {
        self.pred_horizon
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn stack_input(&self, z: &[f64], obs: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim {
            return Err(Error::dimension("GeneratorNet latent", &[self.latent_dim], &[z.len()]));
        }
        if obs.len() != self.obs_dim {
            return Err(Error::dimension("GeneratorNet observation", &[self.obs_dim], &[obs.len()]));
        }
        let mut input = Vec::with_capacity(z.len() + obs.len());
        input.extend_from_slice(z);
        input.extend_from_slice(obs);
        Ok(input)
    }

    /// One generation: `[pred_horizon, action_dim]` in the net's output space.
    pub fn forward(&self, z: &[f64], obs: &[f64]) -> Result<DenseArray> {
        let input = self.stack_input(z, obs)?;
        let out = self.mlp.forward(&input)?;
        Ok(DenseArray::from_parts_unchecked(vec![self.pred_horizon, self.action_dim], out))
    }

    /// Gradients of `<forward(z, obs), output_grad>` w.r.t. all parameters.
    pub fn backward(&self, z: &[f64], obs: &[f64], output_grad: &DenseArray) -> Result<ParamGrads> {
        if output_grad.shape() != [self.pred_horizon, self.action_dim] {
            return Err(Error::dimension(
                "GeneratorNet backward output_grad",
                &[self.pred_horizon, self.action_dim],
                output_grad.shape(),
            ));
        }
        let input = self.stack_input(z, obs)?;
        let trace = self.mlp.forward_trace(&input)?;
        self.mlp.backward(&trace, output_grad.data())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKind;

    fn rng() -> StreamRng {
        StreamRng::new(42, StreamKind::Init, 0)
    }

    #[test]
    fn zero_weight_net_outputs_last_bias() {
        let mut net = Mlp::zeros(&[3, 4, 2], Activation::Relu).unwrap();
        net.biases_mut()[0].data_mut().copy_from_slice(&[-1.0, 2.0, 0.5, -0.25]);
        net.biases_mut()[1].data_mut().copy_from_slice(&[3.0, -4.0]);
        // Zero weights: every layer outputs its bias (relu'd on hidden layers),
        // so the final output is just the last bias.
        let out = net.forward(&[9.0, -7.0, 3.0]).unwrap();
        assert_eq!(out, vec![3.0, -4.0]);
    }

    #[test]
    fn identity_single_layer_passes_input_through() {
        let mut net = Mlp::zeros(&[3, 3], Activation::Relu).unwrap();
        for i in 0..3 {
            net.weights_mut()[0].data_mut()[i * 3 + i] = 1.0;
        }
        let gen = GeneratorNet::from_mlp(net, 2, 1, 3, 1).unwrap();
        let out = gen.forward(&[1.0, 2.0], &[3.0]).unwrap();
        assert_eq!(out.shape(), &[3, 1]);
        assert_eq!(out.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn forward_matches_hand_matmul_oracle() {
        // Independent oracle: relu(x W1 + b1) W2 + b2 computed index by index.
        let mut r = rng();
        let net = Mlp::init(&[4, 5, 3], Activation::Relu, &mut r).unwrap();
        let x = [0.3, -1.2, 0.8, 2.0];

        let mut hidden = [0.0; 5];
        for j in 0..5 {
            let mut acc = net.biases()[0].data()[j];
            for (i, &xi) in x.iter().enumerate() {
                acc += xi * net.weights()[0].data()[i * 5 + j];
            }
            hidden[j] = acc.max(0.0);
        }
        let mut expect = [0.0; 3];
        for j in 0..3 {
            let mut acc = net.biases()[1].data()[j];
            for (i, &hi) in hidden.iter().enumerate() {
                acc += hi * net.weights()[1].data()[i * 3 + j];
            }
            expect[j] = acc;
        }

        let out = net.forward(&x).unwrap();
        for (a, b) in out.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12, "forward {a} vs oracle {b}");
        }
    }

    #[test]
    fn forward_is_bit_identical_across_calls() {
        let mut r = rng();
        let net = Mlp::init(&[6, 8, 4], Activation::Relu, &mut r).unwrap();
        let x: Vec<f64> = (0..6).map(|i| (i as f64) * 0.37 - 1.0).collect();
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let mut r = rng();
        let net = Mlp::init(&[3, 4, 2], Activation::Relu, &mut r).unwrap();
        let trace = net.forward_trace(&[0.1, 0.2, 0.3]).unwrap();
        let grads = net.backward(&trace, &[0.0, 0.0]).unwrap();
        for g in grads.weights.iter().chain(grads.biases.iter()) {
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn linear_single_weight_gradient() {
        // f(w) = w * x with x = 2: dL/dw = 2 when output_grad = 1.
        let mut net = Mlp::zeros(&[1, 1], Activation::Relu).unwrap();
        net.weights_mut()[0].data_mut()[0] = 0.7;
        let trace = net.forward_trace(&[2.0]).unwrap();
        let grads = net.backward(&trace, &[1.0]).unwrap();
        assert_eq!(grads.weights[0].data()[0], 2.0);
        assert_eq!(grads.biases[0].data()[0], 1.0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut r = rng();
        let mut net = Mlp::init(&[4, 6, 5, 3], Activation::Relu, &mut r).unwrap();
        let x = [0.4, -0.9, 1.3, 0.2];
        let g = [0.7, -0.3, 1.1];

        let trace = net.forward_trace(&x).unwrap();
        let grads = net.backward(&trace, &g).unwrap();

        let loss = |net: &Mlp| -> f64 {
            let out = net.forward(&x).unwrap();
            out.iter().zip(g.iter()).map(|(o, gi)| o * gi).sum()
        };

        let h = 1e-5;
        let mut checked = 0usize;
        for layer in 0..net.num_layers() {
            for idx in (0..net.weights()[layer].len()).step_by(3) {
                let orig = net.weights()[layer].data()[idx];
                net.weights_mut()[layer].data_mut()[idx] = orig + h;
                let up = loss(&net);
                net.weights_mut()[layer].data_mut()[idx] = orig - h;
                let down = loss(&net);
                net.weights_mut()[layer].data_mut()[idx] = orig;
                let fd = (up - down) / (2.0 * h);
                let ad = grads.weights[layer].data()[idx];
                let denom = ad.abs().max(fd.abs()).max(1e-8);
                assert!(
                    ((ad - fd) / denom).abs() < 1e-4,
                    "layer {layer} weight {idx}: ad {ad} vs fd {fd}"
                );
                checked += 1;
            }
        }
        assert!(checked > 20);
    }
}
