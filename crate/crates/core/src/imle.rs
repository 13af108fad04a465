//! Conditional rejection-sampling IMLE training.
//!
//! For every training pair (observation window, action sequence) the trainer
//! draws `m` latent vectors, generates `m` candidate action sequences all
//! conditioned on that pair's observation, discards candidates closer than
//! `epsilon` to the ground-truth sequence, and pulls the nearest surviving
//! candidate toward the ground truth. Minimizing that per-example nearest
//! distance forces every data point to have a generated sample nearby, which
//! is what keeps all behaviour modes represented. The rejection radius stops
//! already-converged candidates from monopolizing selection.
//!
//! Selection (the argmin and the filter) is treated as a piecewise-constant
//! choice: gradients flow only through the selected candidate's forward pass.

use std::ops::Deref;
use std::time::Instant;

use crate::adam::{adam_step, AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::nn::{GeneratorNet, ParamGrads};
use crate::rng::{StreamKind, StreamRng};
use crate::tensor::DenseArray;

/// Distances below this are treated as an exact hit; the pull direction is
/// undefined there, so the gradient is zero.
const ZERO_DISTANCE: f64 = 1e-12;

/// A standard-normal latent sample of fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for LatentVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// One training pair: a flattened window of stacked observations and the
/// ground-truth action sequence `[pred_horizon, action_dim]`. Both sides are
/// stored normalized to `[-1, 1]` per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Demo {
    pub observation: Vec<f64>,
    pub actions: DenseArray,
}

/// Observation / prediction / execution horizons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Horizons {
    /// Stacked past observation frames fed to the net.
    pub obs: usize,
    /// Future actions predicted per generation.
    pub pred: usize,
    /// Actions executed before re-planning.
    pub exec: usize,
}

impl Horizons {
    pub fn validate(&self) -> Result<()> {
        if self.obs == 0 || self.pred == 0 || self.exec == 0 {
            return Err(Error::InvalidConfig("horizons must be positive".into()));
        }
        if self.exec > self.pred {
            return Err(Error::InvalidConfig(format!(
                "execution horizon {} exceeds prediction horizon {}",
                self.exec, self.pred
            )));
        }
        Ok(())
    }
}

impl Default for Horizons {
    fn default() -> Self {
        Self { obs: 2, pred: 16, exec: 8 }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Latents drawn per data point per visit.
    pub num_latents: usize,
    /// Rejection radius in normalized action space.
    pub epsilon: f64,
    /// Latent dimension; `None` means `pred * action_dim`, matching the
    /// generated sequence.
    pub latent_dim: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub horizons: Horizons,
    pub hidden: Vec<usize>,
    pub optimizer: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_latents: 20,
            epsilon: 0.03,
            latent_dim: None,
            epochs: 1000,
            batch_size: 32,
            seed: 0,
            horizons: Horizons::default(),
            hidden: vec![128, 128],
            optimizer: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_latents == 0 {
            return Err(Error::InvalidConfig("num_latents must be >= 1".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig("epsilon must be finite and >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        self.horizons.validate()
    }

    pub fn resolved_latent_dim(&self, action_dim: usize) -> usize {
        self.latent_dim.unwrap_or(self.horizons.pred * action_dim)
    }
}

/// Outcome of rejection filtering plus nearest-neighbour selection over one
/// candidate batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Indices that survived the rejection filter, ascending.
    pub valid_indices: Vec<usize>,
    /// Selected candidate; the argmin over the valid set, or over all
    /// candidates when the valid set is empty.
    pub chosen_index: usize,
    pub distances: Vec<f64>,
    /// True when the valid set was empty and selection fell back to the
    /// unfiltered argmin.
    pub fallback_used: bool,
}

impl SelectionResult {
    /// Fraction of candidates removed by the filter.
    pub fn rejection_fraction(&self) -> f64 {
        let m = self.distances.len();
        (m - self.valid_indices.len()) as f64 / m as f64
    }
}

/// L2 norm of the flattened difference between two equally shaped arrays.
pub fn euclidean_distance(a: &DenseArray, b: &DenseArray) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::dimension("euclidean_distance", a.shape(), b.shape()));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum();
    Ok(sum.sqrt())
}

/// Draws `m` i.i.d. standard-normal latent vectors from `rng`.
pub fn sample_latents(rng: &mut StreamRng, m: usize, latent_dim: usize) -> Result<Vec<LatentVector>> {
    if m == 0 {
        return Err(Error::InvalidConfig("sample_latents requires m >= 1".into()));
    }
    Ok((0..m)
        .map(|_| LatentVector((0..latent_dim).map(|_| rng.normal()).collect()))
        .collect())
}

/// Rejection filter plus nearest-neighbour selection.
///
/// Keeps candidates at distance `>= epsilon`, picks the closest survivor
/// (ties to the lowest index). An empty survivor set falls back to the
/// unfiltered argmin and flags it, so training never stalls on an epsilon
/// that rejects everything — the fallback count exposes the mis-tuning.
pub fn select_candidate(distances: &[f64], epsilon: f64) -> Result<SelectionResult> {
    if distances.is_empty() {
        return Err(Error::Empty("candidate distance list"));
    }
    if let Some(i) = distances.iter().position(|d| !d.is_finite()) {
        return Err(Error::NonFinite(format!("candidate distance {i}")));
    }
    assert!(distances.iter().all(|&d| d >= 0.0), "distances must be non-negative");

    let valid_indices: Vec<usize> =
        (0..distances.len()).filter(|&j| distances[j] >= epsilon).collect();

    let argmin = |indices: &[usize]| -> usize {
        let mut best = indices[0];
        for &j in &indices[1..] {
            if distances[j] < distances[best] {
                best = j;
            }
        }
        best
    };

    let (chosen_index, fallback_used) = if valid_indices.is_empty() {
        let all: Vec<usize> = (0..distances.len()).collect();
        (argmin(&all), true)
    } else {
        (argmin(&valid_indices), false)
    };

    Ok(SelectionResult { valid_indices, chosen_index, distances: distances.to_vec(), fallback_used })
}

/// Generates one candidate per latent, every one conditioned on the same
/// observation vector.
pub fn generate_candidates(
    net: &GeneratorNet,
    latents: &[LatentVector],
    observation: &[f64],
) -> Result<Vec<DenseArray>> {
    latents.iter().map(|z| net.forward(z, observation)).collect()
}

/// One training term for one demo: draws fresh latents, selects a candidate
/// and differentiates the selected distance.
///
/// The returned loss is `distance(demo.actions, candidate[chosen])`; the
/// gradients are exactly those of that distance with the selection frozen.
pub fn imle_loss_and_grad(
    net: &GeneratorNet,
    demo: &Demo,
    cfg: &TrainConfig,
    rng: &mut StreamRng,
) -> Result<(f64, ParamGrads, SelectionResult)> {
    let latents = sample_latents(rng, cfg.num_latents, net.latent_dim())?;
    let candidates = generate_candidates(net, &latents, &demo.observation)?;
    let distances = candidates
        .iter()
        .map(|c| euclidean_distance(&demo.actions, c))
        .collect::<Result<Vec<f64>>>()?;
    let selection = select_candidate(&distances, cfg.epsilon)?;

    let j = selection.chosen_index;
    let loss = selection.distances[j];
    let grads = if loss > ZERO_DISTANCE {
        // d/dy ||y - a|| = (y - a) / ||y - a||, evaluated at the chosen candidate.
        let diff: Vec<f64> = candidates[j]
            .data()
            .iter()
            .zip(demo.actions.data())
            .map(|(y, a)| (y - a) / loss)
            .collect();
        let output_grad =
            DenseArray::from_parts_unchecked(demo.actions.shape().to_vec(), diff);
        net.backward(&latents[j], &demo.observation, &output_grad)?
    } else {
        net.mlp().zero_grads()
    };
    Ok((loss, grads, selection))
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_rejection_fraction: f64,
    pub fallback_count: usize,
    pub wall_ms: f64,
}

/// Loss and selection statistics for a whole training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainingReport {
    pub fn final_mean_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mean_loss)
    }

    /// CSV with one row per epoch. `wall_ms` is the only non-deterministic
    /// column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss,mean_rejection_fraction,fallback_count,wall_ms\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch, e.mean_loss, e.mean_rejection_fraction, e.fallback_count, e.wall_ms
            ));
        }
        out
    }
}

/// Shapes shared by every demo in a dataset.
fn dataset_dims(dataset: &[Demo], horizons: &Horizons) -> Result<(usize, usize)> {
    let first = &dataset[0];
    let action_shape = first.actions.shape().to_vec();
    if action_shape.len() != 2 || action_shape[0] != horizons.pred {
        return Err(Error::dimension(
            "demo action sequence",
            &[horizons.pred],
            &action_shape,
        ));
    }
    let obs_len = first.observation.len();
    for (i, d) in dataset.iter().enumerate() {
        if d.observation.len() != obs_len || d.actions.shape() != action_shape {
            return Err(Error::dimension(
                format!("demo {i} shape"),
                &[obs_len, action_shape[0], action_shape[1]],
                &[d.observation.len(), d.actions.shape()[0], d.actions.shape()[1]],
            ));
        }
    }
    Ok((obs_len, action_shape[1]))
}

/// Trains a generator on `dataset` with the conditional rejection-sampling
/// objective.
///
/// Every epoch visits each demo once in a freshly shuffled order, drawing a
/// fresh latent batch per demo (stream `(epoch, demo-index)`, so any single
/// term can be replayed in isolation). Gradients are averaged over each
/// mini-batch in dataset-index order and applied with one optimizer step.
pub fn train(dataset: &[Demo], cfg: &TrainConfig) -> Result<(GeneratorNet, TrainingReport)> {
    train_with(dataset, cfg, |_, _| ())
}

/// [`train`] with a per-epoch observer, called after each epoch with the
/// zero-based epoch index and the current net (checkpoint cadence, live
/// evaluation).
pub fn train_with(
    dataset: &[Demo],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &GeneratorNet),
) -> Result<(GeneratorNet, TrainingReport)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    let (obs_len, action_dim) = dataset_dims(dataset, &cfg.horizons)?;
    let latent_dim = cfg.resolved_latent_dim(action_dim);

    let mut init_rng = StreamRng::new(cfg.seed, StreamKind::Init, 0);
    let mut net = GeneratorNet::init(
        latent_dim,
        obs_len,
        &cfg.hidden,
        cfg.horizons.pred,
        action_dim,
        &mut init_rng,
    )?;
    let mut state = AdamState::new(net.mlp(), cfg.optimizer);
    let mut report = TrainingReport::default();

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut shuffle_rng = StreamRng::for_epoch_item(cfg.seed, StreamKind::Shuffle, epoch, 0);
        shuffle_rng.shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut rejection_sum = 0.0;
        let mut fallback_count = 0usize;

        for batch in order.chunks(cfg.batch_size) {
            let mut batch_grads = net.mlp().zero_grads();
            for &demo_idx in batch {
                let mut latent_rng =
                    StreamRng::for_epoch_item(cfg.seed, StreamKind::Latents, epoch, demo_idx);
                let (loss, grads, selection) =
                    imle_loss_and_grad(&net, &dataset[demo_idx], cfg, &mut latent_rng)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        detail: format!("loss became {loss} on demo {demo_idx}"),
                    });
                }
                loss_sum += loss;
                rejection_sum += selection.rejection_fraction();
                fallback_count += selection.fallback_used as usize;
                batch_grads.accumulate(&grads);
            }
            batch_grads.scale(1.0 / batch.len() as f64);
            adam_step(net.mlp_mut(), &batch_grads, &mut state)?;
        }

        report.epochs.push(EpochStats {
            epoch,
            mean_loss: loss_sum / dataset.len() as f64,
            mean_rejection_fraction: rejection_sum / dataset.len() as f64,
            fallback_count,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        on_epoch(epoch, &net);
    }
    Ok((net, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKind;

    fn rng(kind: StreamKind, idx: u64) -> StreamRng {
        StreamRng::new(99, kind, idx)
    }

    #[test]
    fn distance_of_equal_arrays_is_zero() {
        let a = DenseArray::new(vec![2, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        assert_eq!(euclidean_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn distance_three_four_five() {
        let a = DenseArray::new(vec![2], vec![0.0, 0.0]).unwrap();
        let b = DenseArray::new(vec![2], vec![3.0, 4.0]).unwrap();
        assert_eq!(euclidean_distance(&a, &b).unwrap(), 5.0);
    }

    #[test]
    fn distance_matches_sum_of_squares_oracle() {
        let mut r = rng(StreamKind::Latents, 0);
        let xs: Vec<f64> = (0..24).map(|_| r.normal()).collect();
        let ys: Vec<f64> = (0..24).map(|_| r.normal()).collect();
        let a = DenseArray::new(vec![4, 6], xs.clone()).unwrap();
        let b = DenseArray::new(vec![4, 6], ys.clone()).unwrap();
        let mut acc = 0.0;
        for i in 0..24 {
            acc += (xs[i] - ys[i]) * (xs[i] - ys[i]);
        }
        let oracle = acc.sqrt();
        assert!((euclidean_distance(&a, &b).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn distance_shape_mismatch_errors() {
        let a = DenseArray::zeros(vec![2, 2]);
        let b = DenseArray::zeros(vec![4]);
        assert!(euclidean_distance(&a, &b).is_err());
    }

    #[test]
    fn sample_latents_rejects_zero() {
        let mut r = rng(StreamKind::Latents, 1);
        assert!(sample_latents(&mut r, 0, 4).is_err());
    }

    #[test]
    fn sample_latents_is_deterministic() {
        let a = sample_latents(&mut rng(StreamKind::Latents, 2), 5, 3).unwrap();
        let b = sample_latents(&mut rng(StreamKind::Latents, 2), 5, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn latent_moments_match_standard_normal() {
        let mut r = rng(StreamKind::Latents, 3);
        let draws = sample_latents(&mut r, 100_000, 1).unwrap();
        let n = draws.len() as f64;
        let mean: f64 = draws.iter().map(|z| z[0]).sum::<f64>() / n;
        let var: f64 = draws.iter().map(|z| (z[0] - mean) * (z[0] - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((0.98..1.02).contains(&var), "var {var}");
    }

    #[test]
    fn select_keeps_at_threshold_and_picks_min_valid() {
        // 0.03 >= epsilon is kept; 0.03 beats 0.05.
        let sel = select_candidate(&[0.01, 0.05, 0.03], 0.03).unwrap();
        assert_eq!(sel.valid_indices, vec![1, 2]);
        assert_eq!(sel.chosen_index, 2);
        assert!(!sel.fallback_used);
    }

    #[test]
    fn select_with_zero_epsilon_is_plain_argmin() {
        let sel = select_candidate(&[0.4, 0.1, 0.2], 0.0).unwrap();
        assert_eq!(sel.valid_indices, vec![0, 1, 2]);
        assert_eq!(sel.chosen_index, 1);
        assert!(!sel.fallback_used);
    }

    #[test]
    fn select_falls_back_when_all_rejected() {
        let sel = select_candidate(&[0.01, 0.02], 0.5).unwrap();
        assert!(sel.valid_indices.is_empty());
        assert_eq!(sel.chosen_index, 0);
        assert!(sel.fallback_used);
    }

    #[test]
    fn select_matches_exhaustive_oracle_on_random_instances() {
        let mut r = rng(StreamKind::Latents, 4);
        for _ in 0..1000 {
            let m = 1 + r.index(12);
            let distances: Vec<f64> = (0..m).map(|_| r.uniform(0.0, 1.0)).collect();
            let epsilon = r.uniform(0.0, 1.0);
            let sel = select_candidate(&distances, epsilon).unwrap();

            // Oracle: plain scan, no shared code with select_candidate.
            let mut oracle_valid = Vec::new();
            for (j, &d) in distances.iter().enumerate() {
                if d >= epsilon {
                    oracle_valid.push(j);
                }
            }
            let pool: Vec<usize> = if oracle_valid.is_empty() {
                (0..m).collect()
            } else {
                oracle_valid.clone()
            };
            let mut best = pool[0];
            for &j in &pool {
                if distances[j] < distances[best] {
                    best = j;
                }
            }
            assert_eq!(sel.valid_indices, oracle_valid);
            assert_eq!(sel.chosen_index, best);
            assert_eq!(sel.fallback_used, oracle_valid.is_empty());
        }
    }

    #[test]
    fn select_rejects_non_finite() {
        assert!(select_candidate(&[0.1, f64::NAN], 0.0).is_err());
        assert!(select_candidate(&[], 0.0).is_err());
    }

    fn tiny_demo(pred: usize) -> Demo {
        let actions: Vec<f64> = (0..pred).map(|i| 0.1 * i as f64 - 0.3).collect();
        Demo {
            observation: vec![0.5, -0.5],
            actions: DenseArray::new(vec![pred, 1], actions).unwrap(),
        }
    }

    fn tiny_cfg(pred: usize) -> TrainConfig {
        TrainConfig {
            num_latents: 4,
            epsilon: 0.0,
            latent_dim: Some(3),
            epochs: 0,
            batch_size: 32,
            seed: 5,
            horizons: Horizons { obs: 2, pred, exec: 1 },
            hidden: vec![8],
            optimizer: AdamConfig::default(),
        }
    }

    fn tiny_net(cfg: &TrainConfig, demo: &Demo) -> GeneratorNet {
        let mut r = rng(StreamKind::Init, 7);
        GeneratorNet::init(
            cfg.resolved_latent_dim(demo.actions.shape()[1]).min(3),
            demo.observation.len(),
            &cfg.hidden,
            cfg.horizons.pred,
            demo.actions.shape()[1],
            &mut r,
        )
        .unwrap()
    }

    #[test]
    fn degenerate_single_latent_loss_is_plain_distance() {
        let demo = tiny_demo(4);
        let mut cfg = tiny_cfg(4);
        cfg.num_latents = 1;
        let net = tiny_net(&cfg, &demo);

        let mut r1 = rng(StreamKind::Latents, 8);
        let (loss, _, sel) = imle_loss_and_grad(&net, &demo, &cfg, &mut r1).unwrap();

        let mut r2 = rng(StreamKind::Latents, 8);
        let latents = sample_latents(&mut r2, 1, net.latent_dim()).unwrap();
        let cand = net.forward(&latents[0], &demo.observation).unwrap();
        let expect = euclidean_distance(&demo.actions, &cand).unwrap();
        assert_eq!(loss, expect);
        assert_eq!(sel.chosen_index, 0);
    }

    #[test]
    fn loss_grad_matches_finite_differences_with_frozen_selection() {
        let demo = tiny_demo(4);
        let cfg = tiny_cfg(4);
        let net = tiny_net(&cfg, &demo);

        let mut r = rng(StreamKind::Latents, 9);
        let (_, grads, sel) = imle_loss_and_grad(&net, &demo, &cfg, &mut r).unwrap();

        // Replay the same latents, freeze the selected index and finite-
        // difference the composed loss along several parameter directions.
        let mut r2 = rng(StreamKind::Latents, 9);
        let latents = sample_latents(&mut r2, cfg.num_latents, net.latent_dim()).unwrap();
        let j = sel.chosen_index;
        let frozen_loss = |n: &GeneratorNet| -> f64 {
            let c = n.forward(&latents[j], &demo.observation).unwrap();
            euclidean_distance(&demo.actions, &c).unwrap()
        };

        let h = 1e-6;
        let mut net_mut = net.clone();
        for layer in 0..net.mlp().num_layers() {
            for idx in (0..net.mlp().weights()[layer].len()).step_by(5) {
                let orig = net.mlp().weights()[layer].data()[idx];
                net_mut.mlp_mut().weights_mut()[layer].data_mut()[idx] = orig + h;
                let up = frozen_loss(&net_mut);
                net_mut.mlp_mut().weights_mut()[layer].data_mut()[idx] = orig - h;
                let down = frozen_loss(&net_mut);
                net_mut.mlp_mut().weights_mut()[layer].data_mut()[idx] = orig;
                let fd = (up - down) / (2.0 * h);
                let ad = grads.weights[layer].data()[idx];
                let denom = ad.abs().max(fd.abs()).max(1e-6);
                assert!(
                    ((ad - fd) / denom).abs() < 1e-4,
                    "layer {layer} idx {idx}: ad {ad} fd {fd}"
                );
            }
        }
    }

    #[test]
    fn candidates_share_the_demo_conditioning() {
        // Replay the latent stream and verify every candidate equals a direct
        // forward with this demo's own observation.
        let demo = tiny_demo(4);
        let cfg = tiny_cfg(4);
        let net = tiny_net(&cfg, &demo);

        let mut r = rng(StreamKind::Latents, 10);
        let (_, _, sel) = imle_loss_and_grad(&net, &demo, &cfg, &mut r).unwrap();

        let mut r2 = rng(StreamKind::Latents, 10);
        let latents = sample_latents(&mut r2, cfg.num_latents, net.latent_dim()).unwrap();
        for (j, z) in latents.iter().enumerate() {
            let cand = net.forward(z, &demo.observation).unwrap();
            let d = euclidean_distance(&demo.actions, &cand).unwrap();
            assert_eq!(d, sel.distances[j], "candidate {j} not conditioned on this demo");
        }
    }

    #[test]
    fn zero_epochs_returns_initialized_net() {
        let demo = tiny_demo(4);
        let cfg = tiny_cfg(4);
        let (net, report) = train(&[demo.clone()], &cfg).unwrap();
        assert!(report.epochs.is_empty());

        // Identical to a net drawn from the same init stream.
        let mut init_rng = StreamRng::new(cfg.seed, StreamKind::Init, 0);
        let fresh = GeneratorNet::init(
            cfg.resolved_latent_dim(1),
            demo.observation.len(),
            &cfg.hidden,
            cfg.horizons.pred,
            1,
            &mut init_rng,
        )
        .unwrap();
        assert_eq!(net, fresh);
    }

    #[test]
    fn train_rejects_empty_dataset() {
        let cfg = tiny_cfg(4);
        assert!(matches!(train(&[], &cfg), Err(Error::Empty(_))));
    }

    #[test]
    fn identical_seeds_give_identical_nets() {
        let demos: Vec<Demo> = (0..3).map(|_| tiny_demo(4)).collect();
        let mut cfg = tiny_cfg(4);
        cfg.epochs = 5;
        let (a, ra) = train(&demos, &cfg).unwrap();
        let (b, rb) = train(&demos, &cfg).unwrap();
        assert_eq!(a, b);
        let strip = |r: &TrainingReport| {
            r.epochs
                .iter()
                .map(|e| (e.epoch, e.mean_loss.to_bits(), e.fallback_count))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&ra), strip(&rb));
    }

    #[test]
    fn single_demo_memorization_drives_loss_down() {
        let demo = tiny_demo(4);
        let mut cfg = tiny_cfg(4);
        cfg.num_latents = 20;
        cfg.epochs = 500;
        cfg.hidden = vec![32];
        let (_, report) = train(&[demo], &cfg).unwrap();
        let final_loss = report.final_mean_loss().unwrap();
        assert!(final_loss < 0.05, "memorization failed: final loss {final_loss}");
    }
}
