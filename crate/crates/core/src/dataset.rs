//! Dataset files: generated demos plus the statistics needed to train on
//! them.
//!
//! Layout (little-endian, magic `IMLEd1`):
//!
//! ```text
//! 6 bytes   magic "IMLEd1"
//! 1 byte    task tag: 0 toy, 1 pushlite
//! 4 + len   u32 length-prefixed UTF-8 spec summary
//! 8         f64 noise_std of the generating process
//! 3 * 4     u32 horizons: obs, pred, exec
//! 2 * 4     u32 per-frame observation dim, action dim
//! norm      normalization stats, same encoding as checkpoints:
//!           u32 d_o, f64 obs_min[d_o], f64 obs_max[d_o],
//!           u32 d_a, f64 act_min[d_a], f64 act_max[d_a]
//! 4         u32 number of demos
//! per demo  u32 episode id, u32 mode label,
//!           f64 observation[obs * d_o], f64 actions[pred * d_a]
//! ```
//!
//! Demos are stored normalized; the header's stats map them back to raw
//! units.

use std::fs;
use std::path::Path;

use crate::envs::pushlite::{self};
use crate::envs::toy::{gen_toy_branch_dataset, ToyBranchSpec};
use crate::envs::{episodes_to_demos, Episode};
use crate::error::{Error, Result};
use crate::imle::{Demo, Horizons};
use crate::policy::Normalizer;
use crate::rng::{StreamKind, StreamRng};
use crate::tensor::DenseArray;

const MAGIC: &[u8; 6] = b"IMLEd1";

/// Which environment produced a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Toy,
    PushLite,
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Toy => "toy",
            TaskKind::PushLite => "pushlite",
        }
    }

    fn tag(&self) -> u8 {
        match self {
            TaskKind::Toy => 0,
            TaskKind::PushLite => 1,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(TaskKind::Toy),
            1 => Some(TaskKind::PushLite),
            _ => None,
        }
    }
}

/// A normalized training set with its provenance.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub task: TaskKind,
    pub spec_summary: String,
    pub noise_std: f64,
    pub horizons: Horizons,
    pub normalizer: Normalizer,
    pub demos: Vec<Demo>,
    /// Source episode of each demo; toy demos are their own episodes.
    pub episode_ids: Vec<usize>,
    /// Demonstrated mode of each demo's episode.
    pub modes: Vec<usize>,
}

impl Dataset {
    /// Draws a branching-regression dataset and normalizes it.
    pub fn from_toy(spec: &ToyBranchSpec, horizons: Horizons) -> Result<Self> {
        horizons.validate()?;
        let raw = gen_toy_branch_dataset(spec)?;
        let obs_frames: Vec<Vec<f64>> = raw.iter().map(|d| vec![d.x]).collect();
        let act_rows: Vec<Vec<f64>> = raw.iter().map(|d| vec![d.y]).collect();
        let normalizer = Normalizer::fit(
            obs_frames.iter().map(|f| f.as_slice()),
            act_rows.iter().map(|r| r.as_slice()),
        )?;
        let mut demos = Vec::with_capacity(raw.len());
        for d in &raw {
            let mut obs = d.observation(&horizons);
            normalizer.normalize_obs(&mut obs);
            let mut actions = d.actions(&horizons);
            normalizer.normalize_actions(actions.data_mut());
            demos.push(Demo { observation: obs, actions });
        }
        Ok(Self {
            task: TaskKind::Toy,
            spec_summary: format!(
                "task=toy n_demos={} noise_std={} upper_weight={} seed={}",
                spec.n_demos, spec.noise_std, spec.upper_weight, spec.seed
            ),
            noise_std: spec.noise_std,
            horizons,
            normalizer,
            demos,
            episode_ids: (0..raw.len()).collect(),
            modes: raw.iter().map(|d| d.mode).collect(),
        })
    }

    /// Collects scripted pushing episodes (alternating approach sides) and
    /// converts them to normalized windows.
    pub fn from_pushlite(
        n_episodes: usize,
        noise_std: f64,
        stride: usize,
        seed: u64,
        horizons: Horizons,
    ) -> Result<Self> {
        horizons.validate()?;
        if n_episodes == 0 {
            return Err(Error::InvalidConfig("need at least one episode".into()));
        }
        let mut episodes: Vec<Episode> = Vec::with_capacity(n_episodes);
        for i in 0..n_episodes {
            let mut init_rng = StreamRng::new(seed, StreamKind::Episode, i as u64 * 2);
            let init = pushlite::random_init(&mut init_rng);
            let mode = if i % 2 == 0 { pushlite::MODE_LEFT } else { pushlite::MODE_RIGHT };
            let mut jitter_rng = StreamRng::new(seed, StreamKind::Episode, i as u64 * 2 + 1);
            episodes.push(pushlite::scripted_demonstrator(init, mode, noise_std, &mut jitter_rng)?);
        }
        let windows = episodes_to_demos(&episodes, &horizons, stride)?;
        if windows.windows.is_empty() {
            return Err(Error::Empty("window set"));
        }

        // Fit normalization over all raw frames and actions of the episodes,
        // not just the retained windows, so stride does not change the map.
        let normalizer = Normalizer::fit(
            episodes.iter().flat_map(|e| e.steps.iter().map(|(o, _)| o.as_slice())),
            episodes.iter().flat_map(|e| e.steps.iter().map(|(_, a)| a.as_slice())),
        )?;

        let mut demos = Vec::with_capacity(windows.windows.len());
        let mut episode_ids = Vec::with_capacity(windows.windows.len());
        let mut modes = Vec::with_capacity(windows.windows.len());
        for w in &windows.windows {
            let mut obs = w.observation.clone();
            normalizer.normalize_obs(&mut obs);
            let mut actions = w.actions.clone();
            normalizer.normalize_actions(actions.data_mut());
            demos.push(Demo { observation: obs, actions });
            episode_ids.push(w.episode);
            modes.push(episodes[w.episode].mode);
        }
        Ok(Self {
            task: TaskKind::PushLite,
            spec_summary: format!(
                "task=pushlite n_episodes={n_episodes} noise_std={noise_std} stride={stride} seed={seed}"
            ),
            noise_std,
            horizons,
            normalizer,
            demos,
            episode_ids,
            modes,
        })
    }

    pub fn n_episodes(&self) -> usize {
        self.episode_ids.iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Nested subset by episode: a fixed shuffle of episode ids (derived from
    /// `seed` only), then the first `ceil(fraction * n)` episodes. Smaller
    /// fractions are prefixes of larger ones.
    pub fn nested_subset(&self, fraction: f64, seed: u64) -> Result<Dataset> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!("fraction {fraction} outside (0, 1]")));
        }
        let n = self.n_episodes();
        let mut order: Vec<usize> = (0..n).collect();
        StreamRng::new(seed, StreamKind::Dataset, u64::MAX >> 8).shuffle(&mut order);
        let keep = ((fraction * n as f64).ceil() as usize).clamp(1, n);
        let kept: std::collections::HashSet<usize> = order[..keep].iter().copied().collect();

        let mut out = self.clone();
        out.demos.clear();
        out.episode_ids.clear();
        out.modes.clear();
        for i in 0..self.demos.len() {
            if kept.contains(&self.episode_ids[i]) {
                out.demos.push(self.demos[i].clone());
                out.episode_ids.push(self.episode_ids[i]);
                out.modes.push(self.modes[i]);
            }
        }
        out.spec_summary = format!("{} fraction={fraction}", self.spec_summary);
        Ok(out)
    }

    /// Human-readable description with per-mode episode counts.
    pub fn summary(&self) -> String {
        let n_modes = self.modes.iter().copied().max().map_or(1, |m| m + 1);
        let mut episode_mode: std::collections::BTreeMap<usize, usize> = Default::default();
        for (ep, mode) in self.episode_ids.iter().zip(&self.modes) {
            episode_mode.insert(*ep, *mode);
        }
        let mut counts = vec![0usize; n_modes];
        for mode in episode_mode.values() {
            counts[*mode] += 1;
        }
        let mut s = String::new();
        s.push_str(&format!("{}\n", self.spec_summary));
        s.push_str(&format!(
            "demos={} episodes={} obs_dim={} action_dim={}\n",
            self.demos.len(),
            episode_mode.len(),
            self.normalizer.obs_dim(),
            self.normalizer.action_dim()
        ));
        for (m, c) in counts.iter().enumerate() {
            s.push_str(&format!("mode_{m}_episodes={c}\n"));
        }
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(self.task.tag());
        let spec = self.spec_summary.as_bytes();
        out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
        out.extend_from_slice(spec);
        out.extend_from_slice(&self.noise_std.to_le_bytes());
        for v in [self.horizons.obs, self.horizons.pred, self.horizons.exec] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        let d_o = self.normalizer.obs_dim();
        let d_a = self.normalizer.action_dim();
        out.extend_from_slice(&(d_o as u32).to_le_bytes());
        out.extend_from_slice(&(d_a as u32).to_le_bytes());
        let (obs_min, obs_max) = self.normalizer.obs_ranges();
        out.extend_from_slice(&(d_o as u32).to_le_bytes());
        for v in obs_min.iter().chain(obs_max) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let (act_min, act_max) = self.normalizer.action_ranges();
        out.extend_from_slice(&(d_a as u32).to_le_bytes());
        for v in act_min.iter().chain(act_max) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.demos.len() as u32).to_le_bytes());
        for i in 0..self.demos.len() {
            out.extend_from_slice(&(self.episode_ids[i] as u32).to_le_bytes());
            out.extend_from_slice(&(self.modes[i] as u32).to_le_bytes());
            for v in &self.demos[i].observation {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for v in self.demos[i].actions.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let err = |pos: usize, detail: &str| Error::Format {
            path: origin.to_string(),
            detail: format!("{detail} at byte {pos}"),
        };
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            if *pos + n > bytes.len() {
                return Err(err(*pos, "unexpected end of file"));
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        let u32_at = |pos: &mut usize| -> Result<usize> {
            Ok(u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()) as usize)
        };
        let f64_at = |pos: &mut usize| -> Result<f64> {
            Ok(f64::from_le_bytes(take(pos, 8)?.try_into().unwrap()))
        };
        let f64s = |pos: &mut usize, n: usize| -> Result<Vec<f64>> {
            (0..n).map(|_| f64_at(pos)).collect()
        };

        if take(&mut pos, 6)? != MAGIC {
            return Err(err(0, "bad magic"));
        }
        let task = TaskKind::from_tag(take(&mut pos, 1)?[0]).ok_or_else(|| err(6, "unknown task tag"))?;
        let spec_len = u32_at(&mut pos)?;
        let spec_summary = String::from_utf8(take(&mut pos, spec_len)?.to_vec())
            .map_err(|_| err(pos, "spec summary not UTF-8"))?;
        let noise_std = f64_at(&mut pos)?;
        let horizons = Horizons {
            obs: u32_at(&mut pos)?,
            pred: u32_at(&mut pos)?,
            exec: u32_at(&mut pos)?,
        };
        let d_o = u32_at(&mut pos)?;
        let d_a = u32_at(&mut pos)?;
        let d_o2 = u32_at(&mut pos)?;
        if d_o2 != d_o {
            return Err(err(pos, "observation stat dimension mismatch"));
        }
        let obs_min = f64s(&mut pos, d_o)?;
        let obs_max = f64s(&mut pos, d_o)?;
        let d_a2 = u32_at(&mut pos)?;
        if d_a2 != d_a {
            return Err(err(pos, "action stat dimension mismatch"));
        }
        let act_min = f64s(&mut pos, d_a)?;
        let act_max = f64s(&mut pos, d_a)?;
        let normalizer = Normalizer::from_ranges(obs_min, obs_max, act_min, act_max)?;

        let n_demos = u32_at(&mut pos)?;
        let mut demos = Vec::with_capacity(n_demos);
        let mut episode_ids = Vec::with_capacity(n_demos);
        let mut modes = Vec::with_capacity(n_demos);
        for _ in 0..n_demos {
            episode_ids.push(u32_at(&mut pos)?);
            modes.push(u32_at(&mut pos)?);
            let observation = f64s(&mut pos, horizons.obs * d_o)?;
            let actions = DenseArray::new(vec![horizons.pred, d_a], f64s(&mut pos, horizons.pred * d_a)?)?;
            demos.push(Demo { observation, actions });
        }
        if pos != bytes.len() {
            return Err(err(pos, "trailing bytes"));
        }
        Ok(Self {
            task,
            spec_summary,
            noise_std,
            horizons,
            normalizer,
            demos,
            episode_ids,
            modes,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }

    /// CSV export of the demos in raw units, one row per demo with the
    /// flattened observation and action sequence.
    pub fn to_csv(&self) -> String {
        let d_o = self.normalizer.obs_dim() * self.horizons.obs;
        let d_a = self.normalizer.action_dim() * self.horizons.pred;
        let mut header = String::from("episode,mode");
        for i in 0..d_o {
            header.push_str(&format!(",obs{i}"));
        }
        for i in 0..d_a {
            header.push_str(&format!(",act{i}"));
        }
        header.push('\n');
        let mut out = header;
        for i in 0..self.demos.len() {
            let mut obs = self.demos[i].observation.clone();
            let mut acts = self.demos[i].actions.data().to_vec();
            // Export in raw units.
            let mut obs_raw = obs.clone();
            self.denorm_obs(&mut obs_raw);
            obs = obs_raw;
            self.normalizer.denormalize_actions(&mut acts);
            out.push_str(&format!("{},{}", self.episode_ids[i], self.modes[i]));
            for v in obs.iter().chain(acts.iter()) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    fn denorm_obs(&self, window: &mut [f64]) {
        let (lo, hi) = self.normalizer.obs_ranges();
        let d = lo.len();
        for (i, v) in window.iter_mut().enumerate() {
            let k = i % d;
            *v = (*v + 1.0) * 0.5 * (hi[k] - lo[k]) + lo[k];
        }
    }
}
