//! Run configuration: a plain-text `key = value` format with `[sections]`.
//!
//! The format is dependency-free and diff-friendly; parsing is strict
//! (unknown keys or sections are errors) and `parse(serialize(c)) == c`
//! holds for every valid configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::adam::AdamConfig;
use crate::dataset::TaskKind;
use crate::error::{Error, Result};
use crate::imle::{Horizons, TrainConfig};
use crate::policy::InferenceConfig;

/// Which policy a run trains and evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Rejection-sampling IMLE with temporal-consistency inference.
    Imle,
    /// Same training, uniform candidate selection at every re-plan.
    ImleNoConsistency,
    /// Rectified flow sampled with a single Euler step.
    Fm1,
    /// Rectified flow sampled with `fm_steps` Euler steps.
    FmK,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Imle => "imle",
            Method::ImleNoConsistency => "imle_no_consistency",
            Method::Fm1 => "fm1",
            Method::FmK => "fm_k",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "imle" => Ok(Method::Imle),
            "imle_no_consistency" => Ok(Method::ImleNoConsistency),
            "fm1" => Ok(Method::Fm1),
            "fm_k" => Ok(Method::FmK),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }

    pub fn is_flow(&self) -> bool {
        matches!(self, Method::Fm1 | Method::FmK)
    }
}

/// Everything a command needs, parsed from one config file plus CLI
/// overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // [run]
    pub task: TaskKind,
    pub method: Method,
    pub seed: u64,
    pub out: String,
    /// Fraction of the dataset's episodes used for training.
    pub fraction: f64,

    // [task]
    /// Toy demos or pushing episodes to generate.
    pub n_demos: usize,
    pub noise_std: f64,
    /// Upper-branch probability for positive toy conditions.
    pub upper_weight: f64,
    /// Window stride for episode-to-demo extraction.
    pub stride: usize,

    // [train]
    pub epochs: usize,
    pub batch_size: usize,
    pub num_latents: usize,
    pub epsilon: f64,
    /// `None` means the latent matches the action-sequence dimension.
    pub latent_dim: Option<usize>,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_stab: f64,
    pub obs_horizon: usize,
    pub pred_horizon: usize,
    pub exec_horizon: usize,
    /// Save an intermediate checkpoint every this many epochs (0 disables).
    pub checkpoint_every: usize,
    /// Euler steps for `fm_k` sampling.
    pub fm_steps: usize,

    // [inference]
    pub candidates: usize,
    pub reset_period: usize,
    pub consistency: bool,

    // [eval]
    pub eval_episodes: usize,
    pub max_steps: usize,
    pub eval_samples: usize,
    pub min_fraction: f64,
    /// Conditions for mode evaluation: toy x values, or pushing effector x
    /// positions.
    pub grid: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::Toy,
            method: Method::Imle,
            seed: 0,
            out: "runs/out".into(),
            fraction: 1.0,
            n_demos: 20,
            noise_std: 0.01,
            upper_weight: 0.5,
            stride: 1,
            epochs: 1000,
            batch_size: 32,
            num_latents: 20,
            epsilon: 0.03,
            latent_dim: None,
            hidden: vec![128, 128],
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_stab: 1e-8,
            obs_horizon: 2,
            pred_horizon: 16,
            exec_horizon: 8,
            checkpoint_every: 50,
            fm_steps: 100,
            candidates: 20,
            reset_period: 10,
            consistency: true,
            eval_episodes: 50,
            max_steps: 300,
            eval_samples: 200,
            min_fraction: 0.15,
            grid: vec![0.5],
        }
    }
}

impl RunConfig {
    pub fn horizons(&self) -> Horizons {
        Horizons { obs: self.obs_horizon, pred: self.pred_horizon, exec: self.exec_horizon }
    }

    /// The training hyperparameters carried by this run.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            num_latents: self.num_latents,
            epsilon: self.epsilon,
            latent_dim: self.latent_dim,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            horizons: self.horizons(),
            hidden: self.hidden.clone(),
            optimizer: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps_stab: self.eps_stab,
            },
        }
    }

    /// Inference settings for this run; the method decides whether
    /// temporal consistency is active.
    pub fn inference_config(&self) -> InferenceConfig {
        let consistency = match self.method {
            Method::Imle => self.consistency,
            Method::ImleNoConsistency | Method::Fm1 | Method::FmK => false,
        };
        let candidates = if self.method.is_flow() { 1 } else { self.candidates };
        InferenceConfig {
            num_candidates: candidates,
            reset_period: self.reset_period,
            consistency_enabled: consistency,
            seed: self.seed,
        }
    }

    /// Effective Euler step count for flow sampling.
    pub fn flow_steps(&self) -> usize {
        match self.method {
            Method::Fm1 => 1,
            _ => self.fm_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!("fraction {} outside (0, 1]", self.fraction)));
        }
        if self.n_demos < 2 {
            return Err(Error::InvalidConfig("n_demos must be >= 2".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be >= 1".into()));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidConfig("hidden widths must be positive".into()));
        }
        if self.fm_steps == 0 {
            return Err(Error::InvalidConfig("fm_steps must be >= 1".into()));
        }
        if self.eval_samples == 0 || self.eval_episodes == 0 || self.max_steps == 0 {
            return Err(Error::InvalidConfig("evaluation sizes must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.min_fraction) {
            return Err(Error::InvalidConfig("min_fraction must lie in [0, 1]".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidConfig("grid must not be empty".into()));
        }
        self.train_config().validate()?;
        self.inference_config().validate(&self.horizons())?;
        Ok(())
    }

    /// Canonical text form; parsing it reproduces `self` exactly.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "task = {}", self.task.name());
        let _ = writeln!(s, "method = {}", self.method.name());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out = {}", self.out);
        let _ = writeln!(s, "fraction = {}", self.fraction);
        let _ = writeln!(s);
        let _ = writeln!(s, "[task]");
        let _ = writeln!(s, "n_demos = {}", self.n_demos);
        let _ = writeln!(s, "noise_std = {}", self.noise_std);
        let _ = writeln!(s, "upper_weight = {}", self.upper_weight);
        let _ = writeln!(s, "stride = {}", self.stride);
        let _ = writeln!(s);
        let _ = writeln!(s, "[train]");
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "num_latents = {}", self.num_latents);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let latent = self.latent_dim.map_or("auto".to_string(), |v| v.to_string());
        let _ = writeln!(s, "latent_dim = {latent}");
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        let _ = writeln!(s, "hidden = {}", hidden.join(","));
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "beta1 = {}", self.beta1);
        let _ = writeln!(s, "beta2 = {}", self.beta2);
        let _ = writeln!(s, "eps_stab = {}", self.eps_stab);
        let _ = writeln!(s, "obs_horizon = {}", self.obs_horizon);
        let _ = writeln!(s, "pred_horizon = {}", self.pred_horizon);
        let _ = writeln!(s, "exec_horizon = {}", self.exec_horizon);
        let _ = writeln!(s, "checkpoint_every = {}", self.checkpoint_every);
        let _ = writeln!(s, "fm_steps = {}", self.fm_steps);
        let _ = writeln!(s);
        let _ = writeln!(s, "[inference]");
        let _ = writeln!(s, "candidates = {}", self.candidates);
        let _ = writeln!(s, "reset_period = {}", self.reset_period);
        let _ = writeln!(s, "consistency = {}", self.consistency);
        let _ = writeln!(s);
        let _ = writeln!(s, "[eval]");
        let _ = writeln!(s, "episodes = {}", self.eval_episodes);
        let _ = writeln!(s, "max_steps = {}", self.max_steps);
        let _ = writeln!(s, "samples = {}", self.eval_samples);
        let _ = writeln!(s, "min_fraction = {}", self.min_fraction);
        let grid: Vec<String> = self.grid.iter().map(|g| g.to_string()).collect();
        let _ = writeln!(s, "grid = {}", grid.join(","));
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<(String, String), String> = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::InvalidConfig(format!(
                    "line {}: expected 'key = value', got '{raw}'",
                    lineno + 1
                )));
            };
            if section.is_empty() {
                return Err(Error::InvalidConfig(format!("line {}: key outside a section", lineno + 1)));
            }
            let prev = entries.insert(
                (section.clone(), key.trim().to_string()),
                value.trim().to_string(),
            );
            if prev.is_some() {
                return Err(Error::InvalidConfig(format!(
                    "duplicate key '{}' in section [{section}]",
                    key.trim()
                )));
            }
        }

        let mut cfg = RunConfig::default();
        for ((section, key), value) in &entries {
            cfg.apply(section, key, value)?;
        }
        Ok(cfg)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| {
                Error::InvalidConfig(format!("[{section}] {key}: cannot parse '{value}'"))
            })
        }
        match (section, key) {
            ("run", "task") => {
                self.task = match value {
                    "toy" => TaskKind::Toy,
                    "pushlite" => TaskKind::PushLite,
                    other => {
                        return Err(Error::InvalidConfig(format!("unknown task '{other}'")))
                    }
                }
            }
            ("run", "method") => self.method = Method::parse(value)?,
            ("run", "seed") => self.seed = num(section, key, value)?,
            ("run", "out") => self.out = value.to_string(),
            ("run", "fraction") => self.fraction = num(section, key, value)?,
            ("task", "n_demos") => self.n_demos = num(section, key, value)?,
            ("task", "noise_std") => self.noise_std = num(section, key, value)?,
            ("task", "upper_weight") => self.upper_weight = num(section, key, value)?,
            ("task", "stride") => self.stride = num(section, key, value)?,
            ("train", "epochs") => self.epochs = num(section, key, value)?,
            ("train", "batch_size") => self.batch_size = num(section, key, value)?,
            ("train", "num_latents") => self.num_latents = num(section, key, value)?,
            ("train", "epsilon") => self.epsilon = num(section, key, value)?,
            ("train", "latent_dim") => {
                self.latent_dim = if value == "auto" {
                    None
                } else {
                    Some(num(section, key, value)?)
                }
            }
            ("train", "hidden") => self.hidden = parse_list(section, key, value)?,
            ("train", "lr") => self.lr = num(section, key, value)?,
            ("train", "beta1") => self.beta1 = num(section, key, value)?,
            ("train", "beta2") => self.beta2 = num(section, key, value)?,
            ("train", "eps_stab") => self.eps_stab = num(section, key, value)?,
            ("train", "obs_horizon") => self.obs_horizon = num(section, key, value)?,
            ("train", "pred_horizon") => self.pred_horizon = num(section, key, value)?,
            ("train", "exec_horizon") => self.exec_horizon = num(section, key, value)?,
            ("train", "checkpoint_every") => self.checkpoint_every = num(section, key, value)?,
            ("train", "fm_steps") => self.fm_steps = num(section, key, value)?,
            ("inference", "candidates") => self.candidates = num(section, key, value)?,
            ("inference", "reset_period") => self.reset_period = num(section, key, value)?,
            ("inference", "consistency") => self.consistency = num(section, key, value)?,
            ("eval", "episodes") => self.eval_episodes = num(section, key, value)?,
            ("eval", "max_steps") => self.max_steps = num(section, key, value)?,
            ("eval", "samples") => self.eval_samples = num(section, key, value)?,
            ("eval", "min_fraction") => self.min_fraction = num(section, key, value)?,
            ("eval", "grid") => self.grid = parse_list(section, key, value)?,
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "unknown key '{key}' in section [{section}]"
                )))
            }
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// FNV-1a hash of the canonical serialization; stable across runs and
    /// platforms, used to stamp report file names.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.serialize().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

fn parse_list<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|p| {
            p.trim().parse().map_err(|_| {
                Error::InvalidConfig(format!("[{section}] {key}: cannot parse '{p}'"))
            })
        })
        .collect()
}
