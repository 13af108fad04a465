//! Synthetic tasks with analytic mode structure.
//!
//! Two tasks feed the experiments: a one-dimensional branching regression
//! problem whose conditional distribution is bimodal for positive inputs
//! (`toy`), and a deterministic 2-d pushing environment with left/right
//! approach modes (`pushlite`). Both come with scripted demonstrators and
//! exact mode labels, so coverage metrics need no clustering.

pub mod pushlite;
pub mod toy;

use crate::error::{Error, Result};
use crate::imle::Horizons;
use crate::tensor::DenseArray;

/// One recorded episode: per-step (observation frame, action) pairs, the
/// demonstrated mode, and whether the task's success predicate held at the
/// end. `init` keeps the exact initial state so an episode can be replayed.
#[derive(Debug, Clone)]
pub struct Episode {
    pub steps: Vec<(Vec<f64>, Vec<f64>)>,
    pub mode: usize,
    pub success: bool,
    pub init: Option<pushlite::PushLiteState>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// A raw (un-normalized) training window plus the episode it came from.
#[derive(Debug, Clone)]
pub struct RawWindow {
    pub episode: usize,
    /// Flattened `[obs_horizon, obs_dim]` stacked observations.
    pub observation: Vec<f64>,
    /// `[pred_horizon, action_dim]` future actions.
    pub actions: DenseArray,
}

/// Result of sliding-window extraction.
#[derive(Debug, Clone, Default)]
pub struct WindowSet {
    pub windows: Vec<RawWindow>,
    /// Episodes shorter than the prediction horizon, skipped entirely.
    pub skipped_episodes: usize,
}

/// Extracts training windows from episodes.
///
/// A window starting at step `s` stacks the observations at steps
/// `s-obs+1 ..= s` (the first frame repeats before the episode start) and the
/// actions at steps `s ..= s+pred-1`. Starts advance by `stride` from 0 up to
/// `len - pred + exec - 1`; starts past `len - pred` repeat the final action
/// to fill the block, so the tail of the episode still yields one window per
/// executable chunk. Episodes shorter than `pred` are skipped and counted.
pub fn episodes_to_demos(episodes: &[Episode], horizons: &Horizons, stride: usize) -> Result<WindowSet> {
    horizons.validate()?;
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be >= 1".into()));
    }
    let mut set = WindowSet::default();
    for (ep_idx, ep) in episodes.iter().enumerate() {
        let len = ep.len();
        if len < horizons.pred {
            set.skipped_episodes += 1;
            continue;
        }
        let obs_dim = ep.steps[0].0.len();
        let action_dim = ep.steps[0].1.len();
        let last_start = len - horizons.pred + horizons.exec - 1;
        let mut s = 0usize;
        while s <= last_start {
            let mut observation = Vec::with_capacity(horizons.obs * obs_dim);
            for k in 0..horizons.obs {
                // Frames s-obs+1 ..= s, clamped to the episode start.
                let t = (s + k + 1).saturating_sub(horizons.obs);
                observation.extend_from_slice(&ep.steps[t.min(len - 1)].0);
            }
            let mut actions = Vec::with_capacity(horizons.pred * action_dim);
            for k in 0..horizons.pred {
                let t = (s + k).min(len - 1);
                actions.extend_from_slice(&ep.steps[t].1);
            }
            set.windows.push(RawWindow {
                episode: ep_idx,
                observation,
                actions: DenseArray::from_parts_unchecked(vec![horizons.pred, action_dim], actions),
            });
            s += stride;
        }
    }
    Ok(set)
}
