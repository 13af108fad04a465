//! Implementations behind the CLI verbs.
//!
//! Each command is a plain function over a [`RunConfig`] so tests and sweeps
//! can drive them without a process boundary. File outputs land in the
//! config's `out` directory; report names carry the config hash and seed.
//! Apart from the wall-time columns of reports, every output byte is a
//! function of (config, seed).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::checkpoint::Checkpoint;
use crate::config::{Method, RunConfig};
use crate::dataset::{Dataset, TaskKind};
use crate::envs::pushlite;
use crate::envs::toy::{self, ToyBranchSpec};
use crate::error::{Error, Result};
use crate::flow::{train_velocity_with, FlowPolicy};
use crate::imle::{train_with, TrainingReport};
use crate::metrics::{
    bench_latency, latency_csv, mode_coverage, nn_distance_symmetric, rollout_success_rate,
    Controller, LatencyReport, ModeReport, PolicyController, RolloutEval,
};
use crate::policy::{CandidateSource, GeneratorPolicy};
use crate::rng::{StreamKind, StreamRng};
use crate::tensor::DenseArray;

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.out);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn stamp(cfg: &RunConfig, name: &str) -> String {
    format!("{name}_c{}_s{}.csv", cfg.hash(), cfg.seed)
}

/// Builds the configured dataset in memory.
pub fn build_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match cfg.task {
        TaskKind::Toy => Dataset::from_toy(
            &ToyBranchSpec {
                n_demos: cfg.n_demos,
                noise_std: cfg.noise_std,
                upper_weight: cfg.upper_weight,
                seed: cfg.seed,
            },
            cfg.horizons(),
        ),
        TaskKind::PushLite => Dataset::from_pushlite(
            cfg.n_demos,
            cfg.noise_std,
            cfg.stride,
            cfg.seed,
            cfg.horizons(),
        ),
    }
}

#[derive(Debug)]
pub struct GenDataOutput {
    pub dataset_path: PathBuf,
    pub summary_path: PathBuf,
    pub n_demos: usize,
    pub n_episodes: usize,
}

/// Generates the dataset file and a human-readable summary. Idempotent given
/// the seed: rerunning writes identical bytes.
pub fn cmd_gen_data(cfg: &RunConfig) -> Result<GenDataOutput> {
    cfg.validate()?;
    let dir = out_dir(cfg)?;
    let ds = build_dataset(cfg)?;
    let dataset_path = dir.join("dataset.bin");
    ds.save(&dataset_path)?;
    let summary_path = dir.join("dataset_summary.txt");
    fs::write(&summary_path, ds.summary())?;
    Ok(GenDataOutput {
        dataset_path,
        summary_path,
        n_demos: ds.demos.len(),
        n_episodes: ds.n_episodes(),
    })
}

/// Trains the configured method on (the configured fraction of) a dataset,
/// entirely in memory. The checkpoint carries the dataset's normalization.
pub fn train_on_dataset(cfg: &RunConfig, dataset: &Dataset) -> Result<(Checkpoint, TrainingReport)> {
    train_on_dataset_with(cfg, dataset, |_, _| ())
}

/// [`train_on_dataset`] with a per-epoch checkpoint observer.
pub fn train_on_dataset_with(
    cfg: &RunConfig,
    dataset: &Dataset,
    mut on_epoch: impl FnMut(usize, &Checkpoint),
) -> Result<(Checkpoint, TrainingReport)> {
    if cfg.horizons() != dataset.horizons {
        return Err(Error::InvalidConfig(format!(
            "config horizons {:?} do not match dataset horizons {:?}",
            cfg.horizons(),
            dataset.horizons
        )));
    }
    let subset = dataset.nested_subset(cfg.fraction, cfg.seed)?;
    let train_cfg = cfg.train_config();
    let horizons = dataset.horizons;
    let normalizer = dataset.normalizer.clone();
    match cfg.method {
        Method::Imle | Method::ImleNoConsistency => {
            let (net, report) = train_with(&subset.demos, &train_cfg, |epoch, net| {
                on_epoch(
                    epoch,
                    &Checkpoint::Generator {
                        net: net.clone(),
                        normalizer: normalizer.clone(),
                        horizons,
                    },
                )
            })?;
            Ok((Checkpoint::Generator { net, normalizer, horizons }, report))
        }
        Method::Fm1 | Method::FmK => {
            let (net, report) = train_velocity_with(&subset.demos, &train_cfg, |epoch, net| {
                on_epoch(
                    epoch,
                    &Checkpoint::Velocity {
                        net: net.clone(),
                        normalizer: normalizer.clone(),
                        horizons,
                    },
                )
            })?;
            Ok((Checkpoint::Velocity { net, normalizer, horizons }, report))
        }
    }
}

#[derive(Debug)]
pub struct TrainOutput {
    pub checkpoint_path: PathBuf,
    pub report_path: PathBuf,
    pub final_mean_loss: f64,
    pub epochs: usize,
}

/// Trains from a dataset file and writes the final checkpoint, periodic
/// checkpoints (per `checkpoint_every`), and the training report CSV.
pub fn cmd_train(cfg: &RunConfig, data: Option<&Path>) -> Result<TrainOutput> {
    cfg.validate()?;
    let dir = out_dir(cfg)?;
    let default_data = dir.join("dataset.bin");
    let data_path = data.unwrap_or(&default_data);
    let dataset = Dataset::load(data_path)?;

    let cadence = cfg.checkpoint_every;
    let mut snapshot_err = None;
    let (checkpoint, report) = train_on_dataset_with(cfg, &dataset, |epoch, ck| {
        if cadence > 0 && (epoch + 1) % cadence == 0 && snapshot_err.is_none() {
            let path = dir.join(format!("checkpoint_ep{:05}.bin", epoch + 1));
            if let Err(e) = ck.save(&path) {
                snapshot_err = Some(e);
            }
        }
    })?;
    if let Some(e) = snapshot_err {
        return Err(e);
    }

    let checkpoint_path = dir.join("checkpoint.bin");
    checkpoint.save(&checkpoint_path)?;
    let report_path = dir.join(stamp(cfg, "train_report"));
    fs::write(&report_path, report.to_csv())?;
    Ok(TrainOutput {
        checkpoint_path,
        report_path,
        final_mean_loss: report.final_mean_loss().unwrap_or(f64::NAN),
        epochs: report.epochs.len(),
    })
}

/// Builds the rollout controller matching the checkpoint kind and method.
fn controller_for(cfg: &RunConfig, checkpoint: &Checkpoint) -> Result<Box<dyn Controller>> {
    match checkpoint {
        Checkpoint::Generator { net, normalizer, horizons } => {
            if cfg.method.is_flow() {
                return Err(Error::InvalidConfig(
                    "flow method configured but checkpoint holds a generator net".into(),
                ));
            }
            let policy = GeneratorPolicy::new(net.clone(), normalizer.clone(), *horizons)?;
            Ok(Box::new(PolicyController { source: policy, cfg: cfg.inference_config() }))
        }
        Checkpoint::Velocity { net, normalizer, horizons } => {
            if !cfg.method.is_flow() {
                return Err(Error::InvalidConfig(
                    "IMLE method configured but checkpoint holds a velocity net".into(),
                ));
            }
            let policy =
                FlowPolicy::new(net.clone(), normalizer.clone(), *horizons, cfg.flow_steps())?;
            Ok(Box::new(PolicyController { source: policy, cfg: cfg.inference_config() }))
        }
    }
}

#[derive(Debug)]
pub struct RolloutOutput {
    pub success_rate: f64,
    pub successes: usize,
    pub episodes: usize,
    pub logs_path: PathBuf,
}

/// Runs seeded evaluation episodes from a checkpoint and writes per-replan
/// logs.
pub fn cmd_rollout(cfg: &RunConfig, checkpoint: &Path) -> Result<RolloutOutput> {
    cfg.validate()?;
    if cfg.task != TaskKind::PushLite {
        return Err(Error::InvalidConfig("rollout is only defined for the pushing task".into()));
    }
    let dir = out_dir(cfg)?;
    let ck = Checkpoint::load(checkpoint)?;
    if ck.normalizer().obs_dim() != pushlite::OBS_DIM {
        return Err(Error::dimension(
            "checkpoint observation frame",
            &[pushlite::OBS_DIM],
            &[ck.normalizer().obs_dim()],
        ));
    }
    let mut controller = controller_for(cfg, &ck)?;
    let eval = rollout_success_rate(controller.as_mut(), cfg.eval_episodes, cfg.max_steps, cfg.seed)?;

    let logs_path = dir.join(stamp(cfg, "rollout_logs"));
    fs::write(&logs_path, rollout_logs_csv(&eval))?;
    Ok(RolloutOutput {
        success_rate: eval.success_rate,
        successes: eval.successes,
        episodes: eval.episodes,
        logs_path,
    })
}

fn rollout_logs_csv(eval: &RolloutEval) -> String {
    let action_dim = eval
        .logs
        .iter()
        .flat_map(|l| l.rows.first())
        .map(|r| r.first_action.len())
        .next()
        .unwrap_or(0);
    let mut out = String::from("episode,t,reset_flag,j_star,overlap_distance");
    for k in 0..action_dim {
        let _ = write!(out, ",a{k}");
    }
    out.push('\n');
    for (ep, log) in eval.logs.iter().enumerate() {
        for r in &log.rows {
            let overlap = r.overlap_distance.map_or(String::new(), |d| d.to_string());
            let _ = write!(out, "{ep},{},{},{},{overlap}", r.t, r.reset_flag as u8, r.j_star);
            for a in &r.first_action {
                let _ = write!(out, ",{a}");
            }
            out.push('\n');
        }
    }
    out
}

/// One sweep cell: a dataset fraction trained with one method.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub fraction: f64,
    pub episodes_used: usize,
    pub method: Method,
    pub success: f64,
    pub final_loss: f64,
}

#[derive(Debug)]
pub struct SweepOutput {
    pub csv_path: PathBuf,
    pub cells: Vec<SweepCell>,
}

/// Dataset-size study: trains the IMLE and single-step flow methods on
/// nested subsets and records the success metric per cell.
///
/// Subsets are prefixes of one fixed shuffled episode order, so the curves
/// are comparable point to point. On the pushing task the metric is the
/// seeded rollout success rate; on the toy task it is the fraction of
/// generated samples that land on a branch across the evaluation grid.
pub fn cmd_sweep_data(cfg: &RunConfig, fractions: &[f64]) -> Result<SweepOutput> {
    cfg.validate()?;
    if fractions.is_empty() {
        return Err(Error::InvalidConfig("fraction list must not be empty".into()));
    }
    let ascending = fractions.windows(2).all(|w| w[0] < w[1]);
    if !ascending || fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(Error::InvalidConfig(
            "fractions must be strictly ascending within (0, 1]".into(),
        ));
    }
    let dir = out_dir(cfg)?;
    let dataset = build_dataset(cfg)?;

    let mut cells = Vec::new();
    for &fraction in fractions {
        for method in [Method::Imle, Method::Fm1] {
            let cell_cfg = RunConfig { method, fraction, ..cfg.clone() };
            let (checkpoint, report) = train_on_dataset(&cell_cfg, &dataset)?;
            let success = evaluate_checkpoint_success(&cell_cfg, &checkpoint)?;
            cells.push(SweepCell {
                fraction,
                episodes_used: ((fraction * dataset.n_episodes() as f64).ceil() as usize)
                    .clamp(1, dataset.n_episodes()),
                method,
                success,
                final_loss: report.final_mean_loss().unwrap_or(f64::NAN),
            });
        }
    }

    let mut csv = String::from("fraction,episodes,method,seed,success,final_loss\n");
    for c in &cells {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            c.fraction,
            c.episodes_used,
            c.method.name(),
            cfg.seed,
            c.success,
            c.final_loss
        );
    }
    let csv_path = dir.join(stamp(cfg, "sweep"));
    fs::write(&csv_path, &csv)?;
    Ok(SweepOutput { csv_path, cells })
}

/// The sweep's per-cell success metric.
pub fn evaluate_checkpoint_success(cfg: &RunConfig, checkpoint: &Checkpoint) -> Result<f64> {
    match cfg.task {
        TaskKind::PushLite => {
            let mut controller = controller_for(cfg, checkpoint)?;
            let eval =
                rollout_success_rate(controller.as_mut(), cfg.eval_episodes, cfg.max_steps, cfg.seed)?;
            Ok(eval.success_rate)
        }
        TaskKind::Toy => {
            let mut on_branch = 0usize;
            let mut total = 0usize;
            for (ci, &x) in cfg.grid.iter().enumerate() {
                let samples = generate_for_condition(cfg, checkpoint, x, ci)?;
                for s in &samples {
                    let mean: f64 = s.data().iter().sum::<f64>() / s.len() as f64;
                    on_branch += toy::on_branch(x, mean, cfg.noise_std) as usize;
                }
                total += samples.len();
            }
            Ok(on_branch as f64 / total as f64)
        }
    }
}

/// Raw-unit observation window for an evaluation condition.
fn condition_window(cfg: &RunConfig, condition: f64) -> DenseArray {
    let h = cfg.horizons();
    match cfg.task {
        TaskKind::Toy => DenseArray::from_parts_unchecked(vec![h.obs, 1], vec![condition; h.obs]),
        TaskKind::PushLite => {
            let state = pushlite::eval_condition_state(condition);
            let frame = pushlite::observe(&state);
            let mut data = Vec::with_capacity(h.obs * frame.len());
            for _ in 0..h.obs {
                data.extend_from_slice(&frame);
            }
            DenseArray::from_parts_unchecked(vec![h.obs, frame.len()], data)
        }
    }
}

fn generate_for_condition(
    cfg: &RunConfig,
    checkpoint: &Checkpoint,
    condition: f64,
    condition_index: usize,
) -> Result<Vec<DenseArray>> {
    let window = condition_window(cfg, condition);
    let mut rng = StreamRng::new(cfg.seed, StreamKind::Eval, condition_index as u64);
    match checkpoint {
        Checkpoint::Generator { net, normalizer, horizons } => {
            let policy = GeneratorPolicy::new(net.clone(), normalizer.clone(), *horizons)?;
            policy.generate(&window, cfg.eval_samples, &mut rng)
        }
        Checkpoint::Velocity { net, normalizer, horizons } => {
            let policy =
                FlowPolicy::new(net.clone(), normalizer.clone(), *horizons, cfg.flow_steps())?;
            policy.generate(&window, cfg.eval_samples, &mut rng)
        }
    }
}

/// A mode report for one evaluation condition.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub condition: f64,
    pub report: ModeReport,
}

#[derive(Debug)]
pub struct EvalModesOutput {
    pub csv_path: PathBuf,
    pub conditions: Vec<ConditionReport>,
}

/// Generates a sample batch per grid condition and reports per-mode counts
/// (plus, on the toy task, the distance to the analytic branches).
pub fn cmd_eval_modes(
    cfg: &RunConfig,
    checkpoint: &Path,
    grid: Option<&[f64]>,
) -> Result<EvalModesOutput> {
    cfg.validate()?;
    let dir = out_dir(cfg)?;
    let ck = Checkpoint::load(checkpoint)?;
    let grid: Vec<f64> = grid.unwrap_or(&cfg.grid).to_vec();
    if grid.is_empty() {
        return Err(Error::InvalidConfig("evaluation grid must not be empty".into()));
    }

    let mut conditions = Vec::new();
    for (ci, &x) in grid.iter().enumerate() {
        let samples = generate_for_condition(cfg, &ck, x, ci)?;
        let mut report = match cfg.task {
            TaskKind::Toy => mode_coverage(
                &samples,
                |s| toy::classify_sample(s, x, cfg.noise_std),
                2,
                cfg.min_fraction,
            )?,
            TaskKind::PushLite => {
                let state = pushlite::eval_condition_state(x);
                mode_coverage(
                    &samples,
                    |s| Some(pushlite::classify_trajectory(&state, s)),
                    2,
                    cfg.min_fraction,
                )?
            }
        };
        if cfg.task == TaskKind::Toy {
            let reference = toy::branch_tiles(x, cfg.pred_horizon);
            report.chamfer = Some(nn_distance_symmetric(&samples, &reference)?);
        }
        conditions.push(ConditionReport { condition: x, report });
    }

    let mut csv = String::from(
        "condition,total,count_mode0,count_mode1,unassigned,frac_mode0,frac_mode1,recall,collapse,chamfer\n",
    );
    for c in &conditions {
        let r = &c.report;
        let chamfer = r.chamfer.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{chamfer}",
            c.condition,
            r.total,
            r.counts[0],
            r.counts[1],
            r.unassigned,
            r.fraction(0),
            r.fraction(1),
            r.recall,
            r.collapse as u8
        );
    }
    let csv_path = dir.join(stamp(cfg, "mode_report"));
    fs::write(&csv_path, &csv)?;
    Ok(EvalModesOutput { csv_path, conditions })
}

#[derive(Debug)]
pub struct BenchOutput {
    pub csv_path: PathBuf,
    pub reports: Vec<LatencyReport>,
    /// Mean 100-step flow time over mean single-forward time.
    pub ratio_fm100_over_imle: f64,
}

/// Times action-sequence generation for a generator checkpoint against a
/// velocity checkpoint sampled with 1 and 100 Euler steps. Thirty timed
/// generations each after three warmups, one thread, no parallelism.
pub fn cmd_bench(cfg: &RunConfig, imle_checkpoint: &Path, fm_checkpoint: &Path) -> Result<BenchOutput> {
    cfg.validate()?;
    let dir = out_dir(cfg)?;
    let imle_ck = Checkpoint::load(imle_checkpoint)?;
    let fm_ck = Checkpoint::load(fm_checkpoint)?;
    let Checkpoint::Generator { net, normalizer, horizons } = &imle_ck else {
        return Err(Error::InvalidConfig("bench expects a generator checkpoint first".into()));
    };
    let Checkpoint::Velocity { net: vnet, normalizer: vnorm, horizons: vhorizons } = &fm_ck else {
        return Err(Error::InvalidConfig("bench expects a velocity checkpoint second".into()));
    };

    let condition = cfg.grid[0];
    let window = condition_window(cfg, condition);
    let gen_policy = GeneratorPolicy::new(net.clone(), normalizer.clone(), *horizons)?;

    let mut reports = Vec::new();
    let mut rng = StreamRng::new(cfg.seed, StreamKind::Bench, 0);
    reports.push(bench_latency("imle", 1, 30, 3, || {
        gen_policy.generate(&window, 1, &mut rng).expect("generation failed");
    }));
    for k in [1usize, 100] {
        let policy = FlowPolicy::new(vnet.clone(), vnorm.clone(), *vhorizons, k)?;
        let mut rng = StreamRng::new(cfg.seed, StreamKind::Bench, k as u64);
        reports.push(bench_latency(&format!("fm{k}"), k, 30, 3, || {
            policy.generate(&window, 1, &mut rng).expect("generation failed");
        }));
    }

    let imle_mean = reports[0].mean_ms;
    let fm100_mean = reports[2].mean_ms;
    let csv = latency_csv(&reports);
    let csv_path = dir.join(stamp(cfg, "latency"));
    fs::write(&csv_path, &csv)?;
    Ok(BenchOutput { csv_path, reports, ratio_fm100_over_imle: fm100_mean / imle_mean })
}
