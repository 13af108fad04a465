//! Receding-horizon inference around a trained generator.
//!
//! At each re-plan the policy batch-generates `m` candidate action sequences
//! from fresh latents, picks one, executes the first `exec` actions and keeps
//! the full sequence around. Candidate choice is either uniform (episode
//! start, periodic reset, or consistency disabled) or the candidate whose
//! opening segment best matches the unexecuted tail of the previously chosen
//! sequence. The periodic reset re-randomizes every `reset_period` calls so a
//! bad sequence cannot lock the policy in forever.

use crate::error::{Error, Result};
use crate::imle::{euclidean_distance, sample_latents, Horizons};
use crate::nn::GeneratorNet;
use crate::rng::StreamRng;
use crate::tensor::DenseArray;

/// Per-dimension min/max affine map between raw values and `[-1, 1]`.
///
/// Observation stats cover one frame; stacked windows are normalized frame by
/// frame. Action stats cover one action row.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    obs_min: Vec<f64>,
    obs_max: Vec<f64>,
    act_min: Vec<f64>,
    act_max: Vec<f64>,
}

impl Normalizer {
    /// Fits per-dimension ranges over raw frames and action rows. Degenerate
    /// dimensions (max == min) are widened symmetrically so the map stays
    /// invertible.
    pub fn fit<'a>(
        obs_frames: impl Iterator<Item = &'a [f64]>,
        action_rows: impl Iterator<Item = &'a [f64]>,
    ) -> Result<Self> {
        fn ranges<'a>(rows: impl Iterator<Item = &'a [f64]>, what: &'static str) -> Result<(Vec<f64>, Vec<f64>)> {
            let mut min: Vec<f64> = Vec::new();
            let mut max: Vec<f64> = Vec::new();
            for row in rows {
                if min.is_empty() {
                    min = row.to_vec();
                    max = row.to_vec();
                } else {
                    if row.len() != min.len() {
                        return Err(Error::dimension(what, &[min.len()], &[row.len()]));
                    }
                    for (i, &v) in row.iter().enumerate() {
                        min[i] = min[i].min(v);
                        max[i] = max[i].max(v);
                    }
                }
            }
            if min.is_empty() {
                return Err(Error::Empty(what));
            }
            for i in 0..min.len() {
                if max[i] - min[i] < 1e-9 {
                    let c = 0.5 * (max[i] + min[i]);
                    min[i] = c - 0.5;
                    max[i] = c + 0.5;
                }
            }
            Ok((min, max))
        }
        let (obs_min, obs_max) = ranges(obs_frames, "normalizer observation frames")?;
        let (act_min, act_max) = ranges(action_rows, "normalizer action rows")?;
        Ok(Self { obs_min, obs_max, act_min, act_max })
    }

    pub fn from_ranges(
        obs_min: Vec<f64>,
        obs_max: Vec<f64>,
        act_min: Vec<f64>,
        act_max: Vec<f64>,
    ) -> Result<Self> {
        if obs_min.len() != obs_max.len() || act_min.len() != act_max.len() {
            return Err(Error::dimension(
                "Normalizer::from_ranges",
                &[obs_min.len(), act_min.len()],
                &[obs_max.len(), act_max.len()],
            ));
        }
        for (lo, hi) in obs_min.iter().zip(&obs_max).chain(act_min.iter().zip(&act_max)) {
            if !(hi > lo) {
                return Err(Error::InvalidConfig(format!(
                    "normalizer range must have max > min, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { obs_min, obs_max, act_min, act_max })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_min.len()
    }

    pub fn action_dim(&self) -> usize {
        self.act_min.len()
    }

    pub fn obs_ranges(&self) -> (&[f64], &[f64]) {
        (&self.obs_min, &self.obs_max)
    }

    pub fn action_ranges(&self) -> (&[f64], &[f64]) {
        (&self.act_min, &self.act_max)
    }

    fn map(v: f64, lo: f64, hi: f64) -> f64 {
        2.0 * (v - lo) / (hi - lo) - 1.0
    }

    fn unmap(n: f64, lo: f64, hi: f64) -> f64 {
        (n + 1.0) * 0.5 * (hi - lo) + lo
    }

    /// Normalizes a flat window of stacked observation frames in place.
    pub fn normalize_obs(&self, window: &mut [f64]) {
        let d = self.obs_min.len();
        debug_assert_eq!(window.len() % d, 0);
        for (i, v) in window.iter_mut().enumerate() {
            let k = i % d;
            *v = Self::map(*v, self.obs_min[k], self.obs_max[k]);
        }
    }

    /// Normalizes a flat `[steps, action_dim]` action block in place.
    pub fn normalize_actions(&self, block: &mut [f64]) {
        let d = self.act_min.len();
        debug_assert_eq!(block.len() % d, 0);
        for (i, v) in block.iter_mut().enumerate() {
            let k = i % d;
            *v = Self::map(*v, self.act_min[k], self.act_max[k]);
        }
    }

    /// Inverse of [`Normalizer::normalize_actions`].
    pub fn denormalize_actions(&self, block: &mut [f64]) {
        let d = self.act_min.len();
        debug_assert_eq!(block.len() % d, 0);
        for (i, v) in block.iter_mut().enumerate() {
            let k = i % d;
            *v = Self::unmap(*v, self.act_min[k], self.act_max[k]);
        }
    }
}

/// Rolling inference state for one episode: the last `obs` observation
/// frames (the first frame is repeated until enough history exists), the
/// previously chosen trajectory, and the position in the reset cycle.
#[derive(Debug, Clone)]
pub struct HorizonBuffer {
    obs_frames: Vec<Vec<f64>>,
    obs_horizon: usize,
    prev_trajectory: Option<DenseArray>,
    steps_since_reset: usize,
}

impl HorizonBuffer {
    pub fn new(obs_horizon: usize) -> Self {
        assert!(obs_horizon >= 1);
        Self { obs_frames: Vec::new(), obs_horizon, prev_trajectory: None, steps_since_reset: 0 }
    }

    /// Appends one observation frame. The first frame fills the whole window.
    pub fn push_observation(&mut self, frame: Vec<f64>) {
        if self.obs_frames.is_empty() {
            self.obs_frames = vec![frame; self.obs_horizon];
        } else {
            self.obs_frames.remove(0);
            self.obs_frames.push(frame);
        }
    }

    /// The stacked window `[obs_horizon, obs_dim]` in raw units.
    pub fn window(&self) -> Result<DenseArray> {
        if self.obs_frames.is_empty() {
            return Err(Error::Empty("observation buffer"));
        }
        let d = self.obs_frames[0].len();
        let mut data = Vec::with_capacity(self.obs_horizon * d);
        for f in &self.obs_frames {
            data.extend_from_slice(f);
        }
        Ok(DenseArray::from_parts_unchecked(vec![self.obs_horizon, d], data))
    }

    pub fn previous_trajectory(&self) -> Option<&DenseArray> {
        self.prev_trajectory.as_ref()
    }

    pub fn steps_since_reset(&self) -> usize {
        self.steps_since_reset
    }

    /// Clears everything for a new episode.
    pub fn reset(&mut self) {
        self.obs_frames.clear();
        self.prev_trajectory = None;
        self.steps_since_reset = 0;
    }
}

/// Inference-time settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceConfig {
    /// Candidates generated per re-plan.
    pub num_candidates: usize,
    /// Calls between forced uniform re-selection.
    pub reset_period: usize,
    pub consistency_enabled: bool,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { num_candidates: 20, reset_period: 10, consistency_enabled: true, seed: 0 }
    }
}

impl InferenceConfig {
    pub fn validate(&self, horizons: &Horizons) -> Result<()> {
        if self.num_candidates == 0 {
            return Err(Error::InvalidConfig("num_candidates must be >= 1".into()));
        }
        if self.reset_period == 0 {
            return Err(Error::InvalidConfig("reset_period must be >= 1".into()));
        }
        // The overlap compares prev[exec..pred] with candidate[..pred-exec];
        // the two segments describe the same future time steps only when
        // pred == 2 * exec, so consistency selection requires it.
        if self.consistency_enabled && horizons.pred != 2 * horizons.exec {
            return Err(Error::InvalidConfig(format!(
                "temporal consistency requires pred == 2 * exec, got pred={} exec={}",
                horizons.pred, horizons.exec
            )));
        }
        Ok(())
    }
}

/// Anything that can produce candidate trajectories for an observation
/// window. Implemented by [`GeneratorPolicy`]; tests substitute scripted
/// sources.
pub trait CandidateSource {
    fn horizons(&self) -> Horizons;

    /// `m` candidate trajectories `[pred, action_dim]` in raw action units.
    fn generate(&self, obs_window: &DenseArray, m: usize, rng: &mut StreamRng) -> Result<Vec<DenseArray>>;
}

/// A trained generator plus the normalization used at training time.
#[derive(Debug, Clone)]
pub struct GeneratorPolicy {
    net: GeneratorNet,
    normalizer: Normalizer,
    horizons: Horizons,
}

impl GeneratorPolicy {
    pub fn new(net: GeneratorNet, normalizer: Normalizer, horizons: Horizons) -> Result<Self> {
        horizons.validate()?;
        if net.pred_horizon() != horizons.pred {
            return Err(Error::dimension(
                "GeneratorPolicy prediction horizon",
                &[horizons.pred],
                &[net.pred_horizon()],
            ));
        }
        if net.obs_dim() != horizons.obs * normalizer.obs_dim() {
            return Err(Error::dimension(
                "GeneratorPolicy observation width",
                &[horizons.obs * normalizer.obs_dim()],
                &[net.obs_dim()],
            ));
        }
        Ok(Self { net, normalizer, horizons })
    }

    pub fn net(&self) -> &GeneratorNet {
        &self.net
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }
}

impl CandidateSource for GeneratorPolicy {
    fn horizons(&self) -> Horizons {
        self.horizons
    }

    fn generate(&self, obs_window: &DenseArray, m: usize, rng: &mut StreamRng) -> Result<Vec<DenseArray>> {
        generate_batch(&self.net, &self.normalizer, obs_window, m, rng)
    }
}

/// Batch-generates `m` trajectories: normalize the window, push each fresh
/// latent through the net, denormalize each output.
pub fn generate_batch(
    net: &GeneratorNet,
    normalizer: &Normalizer,
    obs_window: &DenseArray,
    m: usize,
    rng: &mut StreamRng,
) -> Result<Vec<DenseArray>> {
    let mut flat = obs_window.data().to_vec();
    normalizer.normalize_obs(&mut flat);
    let latents = sample_latents(rng, m, net.latent_dim())?;
    latents
        .iter()
        .map(|z| {
            let mut traj = net.forward(z, &flat)?;
            normalizer.denormalize_actions(traj.data_mut());
            Ok(traj)
        })
        .collect()
}

/// Picks the candidate whose opening segment best continues `a_prev`.
///
/// Compares `a_prev[exec..pred]` against `candidate[0..pred-exec]` — the two
/// length-`(pred-exec)` blocks that describe the same future time steps —
/// and returns the argmin index with its overlap distance. Ties go to the
/// lowest index.
pub fn select_consistent(
    candidates: &[DenseArray],
    a_prev: &DenseArray,
    horizons: &Horizons,
) -> Result<(usize, f64)> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate list"));
    }
    let overlap_len = horizons.pred - horizons.exec;
    let tail = slice_rows(a_prev, horizons.exec, horizons.pred)?;
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (j, cand) in candidates.iter().enumerate() {
        let head = slice_rows(cand, 0, overlap_len)?;
        let d = euclidean_distance(&tail, &head)?;
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    Ok((best, best_d))
}

/// Copies rows `[from, to)` of a 2-d array.
fn slice_rows(a: &DenseArray, from: usize, to: usize) -> Result<DenseArray> {
    let shape = a.shape();
    if shape.len() != 2 || to > shape[0] || from > to {
        return Err(Error::dimension("slice_rows", &[to], shape));
    }
    let cols = shape[1];
    let data = a.data()[from * cols..to * cols].to_vec();
    Ok(DenseArray::from_parts_unchecked(vec![to - from, cols], data))
}

/// What one re-plan did, for logging and tests.
#[derive(Debug, Clone)]
pub struct ActOutcome {
    /// The first `exec` actions of the chosen trajectory, raw units.
    pub actions: DenseArray,
    pub chosen_index: usize,
    /// True when selection was uniform (episode start, reset tick, or
    /// consistency disabled).
    pub reset_used: bool,
    /// Overlap distance of the chosen candidate, when consistency selected it.
    pub overlap_distance: Option<f64>,
}

/// One re-plan: generate `m` candidates, select, store the chosen trajectory
/// and hand back its executable head.
///
/// Uniform selection is used when consistency is disabled, when no previous
/// trajectory exists, or on every `reset_period`-th call; otherwise the
/// overlap argmin picks the continuation.
pub fn act(
    buffer: &mut HorizonBuffer,
    source: &impl CandidateSource,
    cfg: &InferenceConfig,
    rng: &mut StreamRng,
) -> Result<ActOutcome> {
    let horizons = source.horizons();
    cfg.validate(&horizons)?;
    let window = buffer.window()?;
    let candidates = source.generate(&window, cfg.num_candidates, rng)?;

    let take_uniform = !cfg.consistency_enabled
        || buffer.prev_trajectory.is_none()
        || buffer.steps_since_reset == 0;

    let (chosen_index, reset_used, overlap_distance) = if take_uniform {
        (rng.index(cfg.num_candidates), true, None)
    } else {
        let prev = buffer.prev_trajectory.as_ref().unwrap();
        let (j, d) = select_consistent(&candidates, prev, &horizons)?;
        (j, false, Some(d))
    };

    let chosen = &candidates[chosen_index];
    let actions = slice_rows(chosen, 0, horizons.exec)?;
    buffer.prev_trajectory = Some(chosen.clone());
    buffer.steps_since_reset = (buffer.steps_since_reset + 1) % cfg.reset_period;

    Ok(ActOutcome { actions, chosen_index, reset_used, overlap_distance })
}

/// One row per re-plan, written as CSV for rollout inspection.
#[derive(Debug, Clone, Default)]
pub struct RolloutLog {
    pub rows: Vec<RolloutLogRow>,
}

#[derive(Debug, Clone)]
pub struct RolloutLogRow {
    /// Environment step at which the re-plan happened.
    pub t: usize,
    pub reset_flag: bool,
    pub j_star: usize,
    pub overlap_distance: Option<f64>,
    pub first_action: Vec<f64>,
}

impl RolloutLog {
    pub fn push(&mut self, t: usize, outcome: &ActOutcome) {
        self.rows.push(RolloutLogRow {
            t,
            reset_flag: outcome.reset_used,
            j_star: outcome.chosen_index,
            overlap_distance: outcome.overlap_distance,
            first_action: outcome.actions.row(0).to_vec(),
        });
    }

    pub fn to_csv(&self) -> String {
        let action_dim = self.rows.first().map_or(0, |r| r.first_action.len());
        let mut header = String::from("t,reset_flag,j_star,overlap_distance");
        for k in 0..action_dim {
            header.push_str(&format!(",a{k}"));
        }
        header.push('\n');
        let mut out = header;
        for r in &self.rows {
            let overlap = r.overlap_distance.map_or(String::new(), |d| d.to_string());
            out.push_str(&format!("{},{},{},{}", r.t, r.reset_flag as u8, r.j_star, overlap));
            for a in &r.first_action {
                out.push_str(&format!(",{a}"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKind;

    fn rng(idx: u64) -> StreamRng {
        StreamRng::new(4242, StreamKind::Rollout, idx)
    }

    #[test]
    fn normalize_round_trip_is_identity() {
        let norm = Normalizer::from_ranges(
            vec![0.0, -2.0],
            vec![1.0, 3.0],
            vec![-0.5],
            vec![0.25],
        )
        .unwrap();
        let mut r = rng(0);
        let mut block: Vec<f64> = (0..32).map(|_| r.uniform(-0.5, 0.25)).collect();
        let orig = block.clone();
        norm.normalize_actions(&mut block);
        assert!(block.iter().all(|v| (-1.0 - 1e-9..=1.0 + 1e-9).contains(v)));
        norm.denormalize_actions(&mut block);
        for (a, b) in block.iter().zip(orig.iter()) {
            assert!((a - b).abs() <= 1e-12, "round trip drift {a} vs {b}");
        }
    }

    #[test]
    fn fit_widens_degenerate_dimensions() {
        let frames = [vec![1.0, 2.0], vec![1.0, 5.0]];
        let acts = [vec![0.0], vec![0.0]];
        let norm = Normalizer::fit(
            frames.iter().map(|f| f.as_slice()),
            acts.iter().map(|a| a.as_slice()),
        )
        .unwrap();
        let (lo, hi) = norm.obs_ranges();
        assert!(hi[0] > lo[0]);
        let (alo, ahi) = norm.action_ranges();
        assert!(ahi[0] > alo[0]);
    }

    #[test]
    fn buffer_repeats_first_observation() {
        let mut buf = HorizonBuffer::new(3);
        assert!(buf.window().is_err());
        buf.push_observation(vec![1.0, 2.0]);
        let w = buf.window().unwrap();
        assert_eq!(w.shape(), &[3, 2]);
        assert_eq!(w.data(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        buf.push_observation(vec![3.0, 4.0]);
        let w = buf.window().unwrap();
        assert_eq!(w.data(), &[1.0, 2.0, 1.0, 2.0, 3.0, 4.0]);
    }

    struct Scripted {
        horizons: Horizons,
        /// One candidate set per call; cycled by an internal counter.
        per_call: Vec<Vec<DenseArray>>,
        call: std::cell::Cell<usize>,
    }

    impl CandidateSource for Scripted {
        fn horizons(&self) -> Horizons {
            self.horizons
        }

        fn generate(&self, _w: &DenseArray, m: usize, _rng: &mut StreamRng) -> Result<Vec<DenseArray>> {
            let i = self.call.get();
            self.call.set(i + 1);
            let set = self.per_call[i % self.per_call.len()].clone();
            assert_eq!(set.len(), m);
            Ok(set)
        }
    }

    fn traj(rows: &[f64]) -> DenseArray {
        DenseArray::new(vec![rows.len(), 1], rows.to_vec()).unwrap()
    }

    #[test]
    fn consistent_pick_prefers_exact_continuation() {
        let horizons = Horizons { obs: 1, pred: 4, exec: 2 };
        let prev = traj(&[0.0, 0.1, 0.2, 0.3]);
        // candidate 1 starts exactly with prev's unexecuted tail [0.2, 0.3].
        let cands = vec![
            traj(&[9.0, 9.0, 9.0, 9.0]),
            traj(&[0.2, 0.3, 0.4, 0.5]),
            traj(&[-1.0, 0.0, 1.0, 2.0]),
        ];
        let (j, d) = select_consistent(&cands, &prev, &horizons).unwrap();
        assert_eq!(j, 1);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn consistent_tie_breaks_to_lowest_index() {
        let horizons = Horizons { obs: 1, pred: 4, exec: 2 };
        let prev = traj(&[0.0, 0.0, 0.5, 0.5]);
        let same = traj(&[0.5, 0.5, 0.0, 0.0]);
        let (j, _) = select_consistent(&[same.clone(), same.clone(), same], &prev, &horizons).unwrap();
        assert_eq!(j, 0);
    }

    #[test]
    fn consistent_matches_exhaustive_oracle() {
        let horizons = Horizons { obs: 1, pred: 6, exec: 3 };
        let mut r = rng(1);
        for _ in 0..500 {
            let m = 1 + r.index(8);
            let prev = traj(&(0..6).map(|_| r.uniform(-1.0, 1.0)).collect::<Vec<_>>());
            let cands: Vec<DenseArray> = (0..m)
                .map(|_| traj(&(0..6).map(|_| r.uniform(-1.0, 1.0)).collect::<Vec<_>>()))
                .collect();
            let (j, _) = select_consistent(&cands, &prev, &horizons).unwrap();

            // Oracle: direct elementwise scan.
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, c) in cands.iter().enumerate() {
                let mut acc = 0.0;
                for i in 0..3 {
                    let diff = prev.data()[3 + i] - c.data()[i];
                    acc += diff * diff;
                }
                let d = acc.sqrt();
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            assert_eq!(j, best);
        }
    }

    #[test]
    fn act_trace_matches_hand_simulation() {
        // Candidate 2 always continues the previous pick exactly; candidate 0
        // and 1 are far away. With C = 10 the uniform branch must fire at
        // calls 0, 10 and 20, and the overlap argmin (candidate 2) elsewhere.
        let horizons = Horizons { obs: 1, pred: 4, exec: 2 };
        let constant = |v: f64| traj(&[v, v, v, v]);
        let source = Scripted {
            horizons,
            per_call: vec![vec![constant(5.0), constant(-5.0), constant(5.0)]],
            call: std::cell::Cell::new(0),
        };
        // All candidates constant: candidate 0 and 2 both continue a constant
        // 5.0 trajectory exactly, so the argmin tie-break picks index 0 when
        // prev is 5.0, and index 1 never wins unless prev is -5.0.
        let cfg = InferenceConfig { num_candidates: 3, reset_period: 10, consistency_enabled: true, seed: 0 };
        let mut buf = HorizonBuffer::new(1);
        buf.push_observation(vec![0.0]);
        let mut r = rng(2);

        let mut resets = Vec::new();
        for call in 0..30 {
            let out = act(&mut buf, &source, &cfg, &mut r).unwrap();
            resets.push(out.reset_used);
            if !out.reset_used {
                // Consistent picks must continue the previous constant value:
                // index 0 for prev 5.0, index 1 for prev -5.0.
                assert!(out.overlap_distance == Some(0.0), "call {call}");
            }
        }
        let expected: Vec<bool> = (0..30).map(|c| c % 10 == 0).collect();
        assert_eq!(resets, expected);
    }

    #[test]
    fn reset_fires_exactly_every_c_calls() {
        let horizons = Horizons { obs: 1, pred: 4, exec: 2 };
        let source = Scripted {
            horizons,
            per_call: vec![vec![traj(&[0.0; 4]), traj(&[1.0; 4])]],
            call: std::cell::Cell::new(0),
        };
        let cfg = InferenceConfig { num_candidates: 2, reset_period: 4, consistency_enabled: true, seed: 0 };
        let mut buf = HorizonBuffer::new(1);
        buf.push_observation(vec![0.0]);
        let mut r = rng(3);
        let mut reset_count = 0;
        for _ in 0..40 {
            if act(&mut buf, &source, &cfg, &mut r).unwrap().reset_used {
                reset_count += 1;
            }
        }
        assert_eq!(reset_count, 10);
    }

    #[test]
    fn c_equal_one_is_always_uniform() {
        let horizons = Horizons { obs: 1, pred: 4, exec: 2 };
        let source = Scripted {
            horizons,
            per_call: vec![vec![traj(&[0.0; 4]), traj(&[1.0; 4])]],
            call: std::cell::Cell::new(0),
        };
        let cfg = InferenceConfig { num_candidates: 2, reset_period: 1, consistency_enabled: true, seed: 0 };
        let mut buf = HorizonBuffer::new(1);
        buf.push_observation(vec![0.0]);
        let mut r = rng(4);
        for _ in 0..12 {
            assert!(act(&mut buf, &source, &cfg, &mut r).unwrap().reset_used);
        }
    }

    #[test]
    fn first_call_takes_uniform_path() {
        let horizons = Horizons { obs: 1, pred: 4, exec: 2 };
        let source = Scripted {
            horizons,
            per_call: vec![vec![traj(&[1.0; 4])]],
            call: std::cell::Cell::new(0),
        };
        let cfg = InferenceConfig { num_candidates: 1, reset_period: 10, consistency_enabled: true, seed: 0 };
        let mut buf = HorizonBuffer::new(1);
        buf.push_observation(vec![0.0]);
        let out = act(&mut buf, &source, &cfg, &mut rng(5)).unwrap();
        assert!(out.reset_used);
        assert!(out.overlap_distance.is_none());
    }

    #[test]
    fn consistency_requires_pred_twice_exec() {
        let horizons = Horizons { obs: 1, pred: 5, exec: 2 };
        let cfg = InferenceConfig { num_candidates: 2, reset_period: 10, consistency_enabled: true, seed: 0 };
        assert!(cfg.validate(&horizons).is_err());
        let off = InferenceConfig { consistency_enabled: false, ..cfg };
        assert!(off.validate(&horizons).is_ok());
    }

    #[test]
    fn continuous_chunks_when_exact_continuation_exists() {
        // Whenever a zero-overlap continuation is among the candidates, the
        // executed chunks must chain exactly.
        let horizons = Horizons { obs: 1, pred: 4, exec: 2 };

        struct Continuing {
            horizons: Horizons,
            prev: std::cell::RefCell<Option<DenseArray>>,
        }
        impl CandidateSource for Continuing {
            fn horizons(&self) -> Horizons {
                self.horizons
            }
            fn generate(&self, _w: &DenseArray, m: usize, rng: &mut StreamRng) -> Result<Vec<DenseArray>> {
                let mut cands: Vec<DenseArray> = (0..m)
                    .map(|_| {
                        let vals: Vec<f64> = (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect();
                        DenseArray::new(vec![4, 1], vals).unwrap()
                    })
                    .collect();
                if let Some(prev) = self.prev.borrow().as_ref() {
                    // Overwrite the last candidate with an exact continuation.
                    let mut vals = prev.data()[2..4].to_vec();
                    vals.extend_from_slice(&[0.33, -0.44]);
                    cands[m - 1] = DenseArray::new(vec![4, 1], vals).unwrap();
                }
                Ok(cands)
            }
        }

        let source = Continuing { horizons, prev: std::cell::RefCell::new(None) };
        let cfg = InferenceConfig { num_candidates: 5, reset_period: 1000, consistency_enabled: true, seed: 0 };
        let mut buf = HorizonBuffer::new(1);
        buf.push_observation(vec![0.0]);
        let mut r = rng(6);

        let mut last_tail: Option<Vec<f64>> = None;
        for call in 0..12 {
            let out = act(&mut buf, &source, &cfg, &mut r).unwrap();
            if let Some(tail) = &last_tail {
                assert!(!out.reset_used);
                assert_eq!(out.actions.data(), tail.as_slice(), "chunk discontinuity at call {call}");
            }
            let prev = buf.previous_trajectory().unwrap().clone();
            last_tail = Some(prev.data()[2..4].to_vec());
            *source.prev.borrow_mut() = Some(prev);
        }
    }
}
