//! Rectified-flow baseline.
//!
//! A velocity network is trained to regress the straight-line transport
//! direction between a Gaussian noise sample and the data: draw
//! `x0 ~ N(0, I)` and `t ~ U[0, 1]`, form `x_t = (1-t) x0 + t A`, and fit
//! `v(x_t, obs, t)` to `A - x0` in mean squared error. Sampling integrates
//! the learned field with `k` Euler steps from fresh noise; `k = 1` is the
//! single-network-call setting the comparisons care about.

use std::time::Instant;

use crate::adam::{adam_step, AdamState};
use crate::error::{Error, Result};
use crate::imle::{Demo, EpochStats, Horizons, TrainConfig, TrainingReport};
use crate::nn::{Activation, Mlp, ParamGrads};
use crate::policy::{CandidateSource, Normalizer};
use crate::rng::{StreamKind, StreamRng};
use crate::tensor::DenseArray;

/// A velocity field over action sequences: input is the flattened sequence,
/// the flattened observation window, and the scalar time.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityNet {
    mlp: Mlp,
    obs_dim: usize,
    pred_horizon: usize,
    action_dim: usize,
}

impl VelocityNet {
    pub fn init(
        obs_dim: usize,
        hidden: &[usize],
        pred_horizon: usize,
        action_dim: usize,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        let seq = pred_horizon * action_dim;
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(seq + obs_dim + 1);
        sizes.extend_from_slice(hidden);
        sizes.push(seq);
        let mlp = Mlp::init(&sizes, Activation::Relu, rng)?;
        Ok(Self { mlp, obs_dim, pred_horizon, action_dim })
    }

    pub(crate) fn from_mlp(
        mlp: Mlp,
        obs_dim: usize,
        pred_horizon: usize,
        action_dim: usize,
    ) -> Result<Self> {
        let seq = pred_horizon * action_dim;
        if mlp.input_dim() != seq + obs_dim + 1 {
            return Err(Error::dimension("VelocityNet input", &[seq + obs_dim + 1], &[mlp.input_dim()]));
        }
        if mlp.output_dim() != seq {
            return Err(Error::dimension("VelocityNet output", &[seq], &[mlp.output_dim()]));
        }
        Ok(Self { mlp, obs_dim, pred_horizon, action_dim })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
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

    fn seq_len(&self) -> usize {
        self.pred_horizon * self.action_dim
    }

    fn stack_input(&self, x: &[f64], obs: &[f64], t: f64) -> Result<Vec<f64>> {
        if x.len() != self.seq_len() {
            return Err(Error::dimension("VelocityNet state", &[self.seq_len()], &[x.len()]));
        }
        if obs.len() != self.obs_dim {
            return Err(Error::dimension("VelocityNet observation", &[self.obs_dim], &[obs.len()]));
        }
        let mut input = Vec::with_capacity(x.len() + obs.len() + 1);
        input.extend_from_slice(x);
        input.extend_from_slice(obs);
        input.push(t);
        Ok(input)
    }

    /// Velocity at sequence-state `x`, observation `obs`, time `t`.
    pub fn forward(&self, x: &[f64], obs: &[f64], t: f64) -> Result<Vec<f64>> {
        let input = self.stack_input(x, obs, t)?;
        self.mlp.forward(&input)
    }

    /// Gradients of `<forward(x, obs, t), output_grad>`.
    pub fn backward(&self, x: &[f64], obs: &[f64], t: f64, output_grad: &[f64]) -> Result<ParamGrads> {
        let input = self.stack_input(x, obs, t)?;
        let trace = self.mlp.forward_trace(&input)?;
        self.mlp.backward(&trace, output_grad)
    }
}

/// The loss term with the noise and time fixed, exposed so tests and
/// finite-difference oracles can replay exact draws.
///
/// Returns the mean-squared velocity error and its exact parameter gradients.
pub fn fm_loss_given_noise(
    net: &VelocityNet,
    demo: &Demo,
    x0: &[f64],
    t: f64,
) -> Result<(f64, ParamGrads)> {
    let a = demo.actions.data();
    if x0.len() != a.len() {
        return Err(Error::dimension("fm noise sample", &[a.len()], &[x0.len()]));
    }
    let x_t: Vec<f64> = x0.iter().zip(a).map(|(n, ai)| (1.0 - t) * n + t * ai).collect();
    let predicted = net.forward(&x_t, &demo.observation, t)?;
    let numel = a.len() as f64;
    let mut loss = 0.0;
    let mut output_grad = Vec::with_capacity(a.len());
    for ((p, ai), n) in predicted.iter().zip(a).zip(x0) {
        let target = ai - n;
        let err = p - target;
        loss += err * err;
        output_grad.push(2.0 * err / numel);
    }
    loss /= numel;
    let grads = net.backward(&x_t, &demo.observation, t, &output_grad)?;
    Ok((loss, grads))
}

/// One rectified-flow training term: fresh noise, fresh time, exact gradient.
pub fn fm_loss_and_grad(
    net: &VelocityNet,
    demo: &Demo,
    rng: &mut StreamRng,
) -> Result<(f64, ParamGrads)> {
    let x0: Vec<f64> = (0..demo.actions.len()).map(|_| rng.normal()).collect();
    let t = rng.uniform(0.0, 1.0);
    fm_loss_given_noise(net, demo, &x0, t)
}

/// Draws one action sequence by integrating the velocity field with `k`
/// Euler steps from fresh standard-normal noise.
pub fn fm_sample(net: &VelocityNet, obs: &[f64], k: usize, rng: &mut StreamRng) -> Result<DenseArray> {
    if k == 0 {
        return Err(Error::InvalidConfig("fm_sample requires k >= 1".into()));
    }
    let mut x: Vec<f64> = (0..net.seq_len()).map(|_| rng.normal()).collect();
    let dt = 1.0 / k as f64;
    for i in 0..k {
        let t = i as f64 * dt;
        let v = net.forward(&x, obs, t)?;
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi += dt * vi;
        }
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("fm_sample output element {i}")));
    }
    Ok(DenseArray::from_parts_unchecked(vec![net.pred_horizon, net.action_dim], x))
}

/// Trains a velocity net with the same schedule as the IMLE trainer: one
/// visit per demo per epoch, shuffled, mini-batch mean gradients, one
/// optimizer step per batch. Rejection statistics do not apply and are zero.
pub fn train_velocity(dataset: &[Demo], cfg: &TrainConfig) -> Result<(VelocityNet, TrainingReport)> {
    train_velocity_with(dataset, cfg, |_, _| ())
}

/// [`train_velocity`] with a per-epoch observer.
pub fn train_velocity_with(
    dataset: &[Demo],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &VelocityNet),
) -> Result<(VelocityNet, TrainingReport)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    let action_dim = dataset[0].actions.shape()[1];
    let obs_len = dataset[0].observation.len();

    let mut init_rng = StreamRng::new(cfg.seed, StreamKind::Init, 0);
    let mut net = VelocityNet::init(obs_len, &cfg.hidden, cfg.horizons.pred, action_dim, &mut init_rng)?;
    let mut state = AdamState::new(net.mlp(), cfg.optimizer);
    let mut report = TrainingReport::default();

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut shuffle_rng = StreamRng::for_epoch_item(cfg.seed, StreamKind::Shuffle, epoch, 0);
        shuffle_rng.shuffle(&mut order);

        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut batch_grads = net.mlp().zero_grads();
            for &demo_idx in batch {
                let mut noise_rng =
                    StreamRng::for_epoch_item(cfg.seed, StreamKind::FlowNoise, epoch, demo_idx);
                let (loss, grads) = fm_loss_and_grad(&net, &dataset[demo_idx], &mut noise_rng)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        detail: format!("flow loss became {loss} on demo {demo_idx}"),
                    });
                }
                loss_sum += loss;
                batch_grads.accumulate(&grads);
            }
            batch_grads.scale(1.0 / batch.len() as f64);
            adam_step(net.mlp_mut(), &batch_grads, &mut state)?;
        }

        report.epochs.push(EpochStats {
            epoch,
            mean_loss: loss_sum / dataset.len() as f64,
            mean_rejection_fraction: 0.0,
            fallback_count: 0,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        on_epoch(epoch, &net);
    }
    Ok((net, report))
}

/// A trained velocity net wrapped for receding-horizon rollouts: each
/// candidate is one `k`-step sample, denormalized to raw action units.
#[derive(Debug, Clone)]
pub struct FlowPolicy {
    net: VelocityNet,
    normalizer: Normalizer,
    horizons: Horizons,
    /// Euler steps per sample.
    pub steps: usize,
}

impl FlowPolicy {
    pub fn new(net: VelocityNet, normalizer: Normalizer, horizons: Horizons, steps: usize) -> Result<Self> {
        horizons.validate()?;
        if steps == 0 {
            return Err(Error::InvalidConfig("flow sampling steps must be >= 1".into()));
        }
        if net.pred_horizon() != horizons.pred {
            return Err(Error::dimension(
                "FlowPolicy prediction horizon",
                &[horizons.pred],
                &[net.pred_horizon()],
            ));
        }
        Ok(Self { net, normalizer, horizons, steps })
    }

    pub fn net(&self) -> &VelocityNet {
        &self.net
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }
}

impl CandidateSource for FlowPolicy {
    fn horizons(&self) -> Horizons {
        self.horizons
    }

    fn generate(&self, obs_window: &DenseArray, m: usize, rng: &mut StreamRng) -> Result<Vec<DenseArray>> {
        let mut flat = obs_window.data().to_vec();
        self.normalizer.normalize_obs(&mut flat);
        (0..m)
            .map(|_| {
                let mut traj = fm_sample(&self.net, &flat, self.steps, rng)?;
                self.normalizer.denormalize_actions(traj.data_mut());
                Ok(traj)
            })
            .collect()
    }
}
