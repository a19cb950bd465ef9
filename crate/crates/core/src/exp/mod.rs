//! Experiment driver: dataset collection, representation pretraining, DQN
//! training across seeds, aggregation, and the figure-reproduction
//! pipelines behind the command-line interface.
//!
//! Every output file begins with comment lines carrying the crate version
//! and the fully resolved configuration. Seed runs are independent and are
//! scheduled over a worker pool; a run whose output file already exists
//! with a matching configuration header is reused instead of recomputed,
//! which makes long experiment matrices resumable.

use crate::agent::{
    random_policy_curve, train_rl, DqnConfig, FeatureSource, RlOutcome,
};
use crate::gridworld::{self, GridConfig};
use crate::learn::{
    pretrain_with_snapshots, LossRecord, Objective, PretrainConfig,
};
use crate::nn::{checkpoint, DenseNet};
use ndarray::Array2;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub mod stats;
pub mod verify;

pub use verify::{run_verify, run_verify_with, VerifyLine, VerifyOutcome, VerifyTarget};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Snapshot schedule of the latent-visualization study.
pub const FIG4A_SCHEDULE: [usize; 7] = [1, 100, 200, 700, 3000, 10000, 30000];

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("configuration problem: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Check(#[from] crate::check::CheckError),
    #[error(transparent)]
    Learn(#[from] crate::learn::LearnError),
    #[error(transparent)]
    Agent(#[from] crate::agent::AgentError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Dataset(#[from] crate::gridworld::io::DatasetIoError),
}

/// Shared settings for one gridworld experiment family.
#[derive(Debug, Clone)]
pub struct GridExperiment {
    pub grid: GridConfig,
    /// Steps of reward-free uniform-random experience collected per seed.
    pub dataset_steps: usize,
    pub pretrain: PretrainConfig,
    pub dqn: DqnConfig,
}

impl Default for GridExperiment {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            dataset_steps: 20_000,
            pretrain: PretrainConfig::default(),
            dqn: DqnConfig::default(),
        }
    }
}

/// One agent variant of the learning-curve experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentSpec {
    /// Freeze an encoder pretrained with `objective` for `updates` steps.
    Pretrained {
        objective: Objective,
        updates: usize,
    },
    /// Ground-truth cell coordinates.
    Expert,
    /// Coordinates through a per-seed random relabeling of cells.
    Permuted,
    /// End-to-end DQN from raw pixels.
    Visual,
    /// Uniform random behavior, no learning.
    Random,
}

impl AgentSpec {
    /// Stable key used for cache directories and summary file names.
    pub fn key(&self) -> String {
        match self {
            AgentSpec::Pretrained { objective, updates } => {
                format!("{}_{}", objective.name(), updates)
            }
            AgentSpec::Expert => "expert_xy".into(),
            AgentSpec::Permuted => "permuted_xy".into(),
            AgentSpec::Visual => "visual".into(),
            AgentSpec::Random => "random".into(),
        }
    }
}

/// One seed's learning curve.
#[derive(Debug, Clone)]
pub struct SeedCurve {
    pub seed: u64,
    pub rewards: Vec<f64>,
    pub epsilons: Vec<f64>,
}

/// Aggregated curves: raw per-episode mean, the 5-point moving average of
/// the per-seed curves, and a 95% normal-approximation band across seeds
/// around the smoothed values.
#[derive(Debug, Clone)]
pub struct CurveSummary {
    pub n_seeds: usize,
    pub mean: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
}

pub const SMOOTHING_WINDOW: usize = 5;

pub fn summarize_curves(curves: &[SeedCurve]) -> CurveSummary {
    let episodes = curves.first().map_or(0, |c| c.rewards.len());
    let smoothed_per_seed: Vec<Vec<f64>> = curves
        .iter()
        .map(|c| stats::moving_average(&c.rewards, SMOOTHING_WINDOW))
        .collect();
    let mut mean = Vec::with_capacity(episodes);
    let mut smoothed = Vec::with_capacity(episodes);
    let mut ci_lo = Vec::with_capacity(episodes);
    let mut ci_hi = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let raw: Vec<f64> = curves.iter().map(|c| c.rewards[e]).collect();
        let smooth: Vec<f64> = smoothed_per_seed.iter().map(|c| c[e]).collect();
        let m = stats::mean(&smooth);
        let half = stats::ci95_half_width(&smooth);
        mean.push(stats::mean(&raw));
        smoothed.push(m);
        ci_lo.push(m - half);
        ci_hi.push(m + half);
    }
    CurveSummary {
        n_seeds: curves.len(),
        mean,
        smoothed,
        ci_lo,
        ci_hi,
    }
}

/// Runs experiments under an output directory with a bounded worker pool.
pub struct Driver {
    pub exp: GridExperiment,
    pub out_dir: PathBuf,
    pub workers: usize,
}

impl Driver {
    pub fn new(exp: GridExperiment, out_dir: impl Into<PathBuf>, workers: usize) -> Self {
        Self {
            exp,
            out_dir: out_dir.into(),
            workers: workers.max(1),
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool, ExpError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| ExpError::Config(format!("worker pool: {}", e)))
    }

    /// Canonical configuration line for an agent/seed run; stored in the
    /// output header and compared on resume.
    fn agent_config_line(&self, spec: &AgentSpec, seed: u64) -> String {
        let e = &self.exp;
        let mut line = format!(
            "version={} agent={} grid={}x{} obs={}x{} kernel_std={} truncation={} noise_std={} \
             episodes={} max_steps={} lr={} batch={} gamma={} eps_start={} eps_final={} \
             eps_decay={} init_steps={} replay={} target_copy={}",
            VERSION,
            spec.key(),
            e.grid.grid_size,
            e.grid.grid_size,
            e.grid.obs_height,
            e.grid.obs_width,
            e.grid.kernel_std,
            e.grid.kernel_truncation,
            e.grid.noise_std,
            e.dqn.episodes,
            e.dqn.max_steps,
            e.dqn.learning_rate,
            e.dqn.batch_size,
            e.dqn.gamma,
            e.dqn.eps_start,
            e.dqn.eps_final,
            e.dqn.eps_decay_steps,
            e.dqn.init_steps,
            e.dqn.replay_capacity,
            e.dqn.target_copy_period,
        );
        if let AgentSpec::Pretrained { updates, .. } = spec {
            write!(
                line,
                " dataset_steps={} updates={} pre_batch={} pre_lr={} latent={} hidden={} alpha={} beta={} smooth={} d0={}",
                e.dataset_steps,
                updates,
                e.pretrain.batch_size,
                e.pretrain.learning_rate,
                e.pretrain.latent_dim,
                e.pretrain.hidden,
                e.pretrain.alpha,
                e.pretrain.beta,
                e.pretrain.smooth_weight,
                e.pretrain.d0,
            )
            .unwrap();
        }
        write!(line, " seed={}", seed).unwrap();
        line
    }

    fn pretrain_config_for(&self, updates: usize, seed: u64) -> PretrainConfig {
        let mut config = self.exp.pretrain.clone();
        config.updates = updates;
        config.seed = seed;
        config.n_actions = gridworld::N_ACTIONS;
        config
    }

    fn pretrain_config_line(&self, objective: Objective, updates: usize, seed: u64) -> String {
        let e = &self.exp;
        format!(
            "version={} objective={} grid={}x{} obs={}x{} kernel_std={} truncation={} noise_std={} \
             dataset_steps={} updates={} batch={} lr={} latent={} hidden={} alpha={} beta={} smooth={} d0={} seed={}",
            VERSION,
            objective.name(),
            e.grid.grid_size,
            e.grid.grid_size,
            e.grid.obs_height,
            e.grid.obs_width,
            e.grid.kernel_std,
            e.grid.kernel_truncation,
            e.grid.noise_std,
            e.dataset_steps,
            updates,
            e.pretrain.batch_size,
            e.pretrain.learning_rate,
            e.pretrain.latent_dim,
            e.pretrain.hidden,
            e.pretrain.alpha,
            e.pretrain.beta,
            e.pretrain.smooth_weight,
            e.pretrain.d0,
            seed,
        )
    }

    /// Pretrain (or load from cache) the encoder for one objective, update
    /// budget, and seed. The cache stores the checkpoint, the loss trace,
    /// and the configuration it was produced under.
    pub fn pretrained_encoder(
        &self,
        objective: Objective,
        updates: usize,
        seed: u64,
    ) -> Result<DenseNet, ExpError> {
        let dir = self
            .out_dir
            .join("pretrain")
            .join(format!("{}_{}", objective.name(), updates));
        fs::create_dir_all(&dir)?;
        let ckpt = dir.join(format!("seed_{:03}.ckpt", seed));
        let config_path = dir.join(format!("seed_{:03}.config", seed));
        let config_line = self.pretrain_config_line(objective, updates, seed);
        if ckpt.is_file() && config_path.is_file() {
            if fs::read_to_string(&config_path)?.trim() == config_line {
                return Ok(checkpoint::load_net_from_path(&ckpt)?);
            }
        }
        let dataset = gridworld::collect_dataset(&self.exp.grid, self.exp.dataset_steps, seed);
        let config = self.pretrain_config_for(updates, seed);
        let pre = crate::learn::pretrain(objective, &dataset, &config)?;
        checkpoint::save_net_to_path(&pre.encoder, &ckpt)?;
        let loss_path = dir.join(format!("seed_{:03}_loss.csv", seed));
        write_loss_csv(&loss_path, &config_line, &pre.trace)?;
        fs::write(&config_path, format!("{}\n", config_line))?;
        Ok(pre.encoder)
    }

    /// Run (or load) one agent/seed learning curve.
    pub fn agent_seed_curve(&self, spec: &AgentSpec, seed: u64) -> Result<SeedCurve, ExpError> {
        let dir = self.out_dir.join("agents").join(spec.key());
        fs::create_dir_all(&dir)?;
        let path = dir.join(format!("seed_{:03}.csv", seed));
        let config_line = self.agent_config_line(spec, seed);
        if let Some(curve) = read_seed_csv(&path, &config_line)? {
            return Ok(curve);
        }
        let mut dqn = self.exp.dqn.clone();
        dqn.seed = seed;
        let outcome: RlOutcome = match spec {
            AgentSpec::Pretrained { objective, updates } => {
                let encoder = self.pretrained_encoder(*objective, *updates, seed)?;
                train_rl(&self.exp.grid, &FeatureSource::FrozenEncoder(encoder), &dqn)?
            }
            AgentSpec::Expert => train_rl(&self.exp.grid, &FeatureSource::ExpertXy, &dqn)?,
            AgentSpec::Permuted => {
                let perm = gridworld::permute_positions(&self.exp.grid, seed);
                train_rl(&self.exp.grid, &FeatureSource::PermutedXy(perm), &dqn)?
            }
            AgentSpec::Visual => train_rl(&self.exp.grid, &FeatureSource::RawPixels, &dqn)?,
            AgentSpec::Random => random_policy_curve(&self.exp.grid, &dqn),
        };
        let curve = SeedCurve {
            seed,
            rewards: outcome.curve,
            epsilons: outcome.episode_epsilons,
        };
        write_seed_csv(&path, &config_line, &curve)?;
        Ok(curve)
    }

    /// Train across seeds on one fixed frozen encoder (as loaded from a
    /// checkpoint file). The cache key carries a fingerprint of the encoder
    /// parameters so different checkpoints never share cache entries.
    pub fn checkpoint_curves(
        &self,
        encoder: &DenseNet,
        seeds: &[u64],
    ) -> Result<Vec<SeedCurve>, ExpError> {
        if encoder.input_width() != self.exp.grid.obs_dim() {
            return Err(ExpError::Config(format!(
                "checkpoint encoder expects {} inputs but the grid renders {}",
                encoder.input_width(),
                self.exp.grid.obs_dim()
            )));
        }
        let mut bytes = Vec::new();
        checkpoint::save_net(encoder, &mut bytes)?;
        let fingerprint = fnv1a(&bytes);
        let dir = self.out_dir.join("agents").join("frozen_checkpoint");
        fs::create_dir_all(&dir)?;
        let pool = self.pool()?;
        let curves: Result<Vec<SeedCurve>, ExpError> = pool.install(|| {
            seeds
                .par_iter()
                .map(|&seed| {
                    let path = dir.join(format!("seed_{:03}.csv", seed));
                    let config_line = format!(
                        "{} encoder_fingerprint={:016x}",
                        self.agent_config_line(&AgentSpec::Visual, seed),
                        fingerprint
                    )
                    .replace("agent=visual", "agent=frozen_checkpoint");
                    if let Some(curve) = read_seed_csv(&path, &config_line)? {
                        return Ok(curve);
                    }
                    let mut dqn = self.exp.dqn.clone();
                    dqn.seed = seed;
                    let outcome = train_rl(
                        &self.exp.grid,
                        &FeatureSource::FrozenEncoder(encoder.clone()),
                        &dqn,
                    )?;
                    let curve = SeedCurve {
                        seed,
                        rewards: outcome.curve,
                        epsilons: outcome.episode_epsilons,
                    };
                    write_seed_csv(&path, &config_line, &curve)?;
                    Ok(curve)
                })
                .collect()
        });
        let curves = curves?;
        let summary = summarize_curves(&curves);
        let header = format!(
            "version={} agent=frozen_checkpoint encoder_fingerprint={:016x} seeds={}",
            VERSION,
            fingerprint,
            seeds.len()
        );
        write_summary_csv(
            &self.out_dir.join("agents").join("frozen_checkpoint_summary.csv"),
            &header,
            &summary,
        )?;
        Ok(curves)
    }

    /// Run one agent across seeds on the worker pool and write the
    /// aggregated summary CSV. Curves are returned in seed order.
    pub fn agent_curves(&self, spec: &AgentSpec, seeds: &[u64]) -> Result<Vec<SeedCurve>, ExpError> {
        let pool = self.pool()?;
        let curves: Result<Vec<SeedCurve>, ExpError> = pool.install(|| {
            seeds
                .par_iter()
                .map(|&seed| self.agent_seed_curve(spec, seed))
                .collect()
        });
        let curves = curves?;
        let summary = summarize_curves(&curves);
        let path = self
            .out_dir
            .join("agents")
            .join(format!("{}_summary.csv", spec.key()));
        let header = format!(
            "version={} agent={} seeds={}",
            VERSION,
            spec.key(),
            seeds.len()
        );
        write_summary_csv(&path, &header, &summary)?;
        Ok(curves)
    }

    /// The eight-agent learning-curve experiment at the standard 3000
    /// pretraining updates.
    pub fn reproduce_fig4b(&self, seeds: &[u64]) -> Result<Vec<(AgentSpec, Vec<SeedCurve>)>, ExpError> {
        let agents = [
            AgentSpec::Pretrained { objective: Objective::Markov, updates: 3000 },
            AgentSpec::Pretrained { objective: Objective::Inverse, updates: 3000 },
            AgentSpec::Pretrained { objective: Objective::Ratio, updates: 3000 },
            AgentSpec::Pretrained { objective: Objective::Autoencoder, updates: 3000 },
            AgentSpec::Pretrained { objective: Objective::PixelPrediction, updates: 3000 },
            AgentSpec::Expert,
            AgentSpec::Visual,
            AgentSpec::Random,
        ];
        self.run_agent_set(&agents, seeds, "fig4b")
    }

    /// The increased-pretraining variant: the three slow objectives at
    /// 30000 updates alongside their 3000-update counterparts and the
    /// standard reference.
    pub fn reproduce_fig8(&self, seeds: &[u64]) -> Result<Vec<(AgentSpec, Vec<SeedCurve>)>, ExpError> {
        let agents = [
            AgentSpec::Pretrained { objective: Objective::Markov, updates: 3000 },
            AgentSpec::Pretrained { objective: Objective::Ratio, updates: 3000 },
            AgentSpec::Pretrained { objective: Objective::Autoencoder, updates: 3000 },
            AgentSpec::Pretrained { objective: Objective::PixelPrediction, updates: 3000 },
            AgentSpec::Pretrained { objective: Objective::Ratio, updates: 30000 },
            AgentSpec::Pretrained { objective: Objective::Autoencoder, updates: 30000 },
            AgentSpec::Pretrained { objective: Objective::PixelPrediction, updates: 30000 },
        ];
        self.run_agent_set(&agents, seeds, "fig8")
    }

    /// Original versus relabeled coordinate features.
    pub fn reproduce_fig9(&self, seeds: &[u64]) -> Result<Vec<(AgentSpec, Vec<SeedCurve>)>, ExpError> {
        self.run_agent_set(&[AgentSpec::Expert, AgentSpec::Permuted], seeds, "fig9")
    }

    fn run_agent_set(
        &self,
        agents: &[AgentSpec],
        seeds: &[u64],
        figure: &str,
    ) -> Result<Vec<(AgentSpec, Vec<SeedCurve>)>, ExpError> {
        let mut out = Vec::with_capacity(agents.len());
        for spec in agents {
            let curves = self.agent_curves(spec, seeds)?;
            out.push((*spec, curves));
        }
        // Figure directory holds copies of the summaries it needs, so each
        // reproduce target is self-contained.
        let fig_dir = self.out_dir.join(figure);
        fs::create_dir_all(&fig_dir)?;
        for (spec, curves) in &out {
            let summary = summarize_curves(curves);
            let header = format!(
                "version={} figure={} agent={} seeds={}",
                VERSION,
                figure,
                spec.key(),
                seeds.len()
            );
            write_summary_csv(
                &fig_dir.join(format!("summary_{}.csv", spec.key())),
                &header,
                &summary,
            )?;
        }
        Ok(out)
    }

    /// Latent-visualization export: pretrain each objective once per seed
    /// with snapshots on the given checkpoint schedule (the last entry is
    /// the total update budget), encoding a fixed labeled evaluation set at
    /// every snapshot.
    pub fn reproduce_fig4a(&self, seeds: &[u64], schedule: &[usize]) -> Result<(), ExpError> {
        if schedule.is_empty() || schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ExpError::Config(
                "snapshot schedule must be strictly increasing and nonempty".into(),
            ));
        }
        for &seed in seeds {
            for objective in Objective::ALL {
                let dir = self
                    .out_dir
                    .join("fig4a")
                    .join(objective.name())
                    .join(format!("seed_{:03}", seed));
                fs::create_dir_all(&dir)?;
                let done_marker = dir.join("complete");
                let config_line = format!(
                    "{} schedule={:?}",
                    self.pretrain_config_line(objective, *schedule.last().unwrap(), seed),
                    schedule
                );
                if done_marker.is_file() && fs::read_to_string(&done_marker)?.trim() == config_line
                {
                    continue;
                }
                let dataset =
                    gridworld::collect_dataset(&self.exp.grid, self.exp.dataset_steps, seed);
                let config = self.pretrain_config_for(*schedule.last().unwrap(), seed);
                let (eval_obs, eval_cells) = evaluation_renders(&self.exp.grid, 10, seed ^ 0xE7A1);
                let mut snapshot_error = None;
                pretrain_with_snapshots(objective, &dataset, &config, schedule, |step, encoder| {
                    if snapshot_error.is_some() {
                        return;
                    }
                    let result = encoder
                        .forward(&eval_obs)
                        .map_err(ExpError::from)
                        .and_then(|(latents, _)| {
                            write_latents_csv(
                                &dir.join(format!("step_{:05}.csv", step)),
                                &config_line,
                                &self.exp.grid,
                                &eval_cells,
                                &latents,
                            )
                        });
                    if let Err(e) = result {
                        snapshot_error = Some(e);
                    }
                })?;
                if let Some(e) = snapshot_error {
                    return Err(e);
                }
                fs::write(&done_marker, format!("{}\n", config_line))?;
            }
        }
        Ok(())
    }

    /// Collect a dataset to disk with its sidecar header and a debug CSV of
    /// the trajectory.
    pub fn collect_to_files(&self, steps: usize, seed: u64, path: &Path) -> Result<bool, ExpError> {
        let mut grid = self.exp.grid.clone();
        grid.seed = seed;
        let (records, report) = gridworld::collect_dataset_report(&grid, steps, seed);
        gridworld::io::save_dataset(path, &grid, &records)?;
        let csv_path = path.with_extension("csv");
        let mut csv = fs::File::create(&csv_path)?;
        gridworld::io::write_step_csv(&mut csv, &report.positions, &records)?;
        Ok(report.covered)
    }

    /// The `pretrain` command: train one representation and write the
    /// checkpoint, loss trace, and labeled latent embedding of a fresh
    /// evaluation set. Collects a dataset unless one is supplied.
    pub fn pretrain_to_files(
        &self,
        objective: Objective,
        updates: usize,
        seed: u64,
        dir: &Path,
        dataset: Option<Vec<gridworld::Transition>>,
    ) -> Result<(), ExpError> {
        fs::create_dir_all(dir)?;
        let dataset = match dataset {
            Some(d) => d,
            None => gridworld::collect_dataset(&self.exp.grid, self.exp.dataset_steps, seed),
        };
        let config = self.pretrain_config_for(updates, seed);
        let config_line = self.pretrain_config_line(objective, updates, seed);
        let pre = crate::learn::pretrain(objective, &dataset, &config)?;
        checkpoint::save_net_to_path(&pre.encoder, dir.join("checkpoint.bin"))?;
        write_loss_csv(&dir.join("loss.csv"), &config_line, &pre.trace)?;
        let (eval_obs, eval_cells) = evaluation_renders(&self.exp.grid, 10, seed ^ 0xE7A1);
        let (latents, _) = pre.encoder.forward(&eval_obs)?;
        write_latents_csv(
            &dir.join("latents.csv"),
            &config_line,
            &self.exp.grid,
            &eval_cells,
            &latents,
        )?;
        Ok(())
    }
}

/// A deterministic labeled evaluation set: `per_cell` fresh renders of each
/// cell. Returns the observation matrix and each row's cell index.
pub fn evaluation_renders(
    grid: &GridConfig,
    per_cell: usize,
    seed: u64,
) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_cells() * per_cell;
    let mut obs = Array2::zeros((n, grid.obs_dim()));
    let mut cells = Vec::with_capacity(n);
    let mut row = 0;
    for cell in 0..grid.n_cells() {
        for _ in 0..per_cell {
            let rendered = gridworld::render(grid, grid.cell_position(cell), &mut rng);
            for (j, &v) in rendered.iter().enumerate() {
                obs[[row, j]] = v;
            }
            cells.push(cell);
            row += 1;
        }
    }
    (obs, cells)
}

fn file_header(config_line: &str) -> String {
    format!("# markov-abstractions {}\n# config: {}\n", VERSION, config_line)
}

fn write_seed_csv(path: &Path, config_line: &str, curve: &SeedCurve) -> Result<(), ExpError> {
    let mut out = file_header(config_line);
    out.push_str("seed,episode,total_reward,epsilon_end\n");
    for (e, (&r, &eps)) in curve.rewards.iter().zip(&curve.epsilons).enumerate() {
        writeln!(out, "{},{},{},{}", curve.seed, e, r, eps).unwrap();
    }
    write_atomic(path, out.as_bytes())
}

/// Load a per-seed curve if its configuration header matches exactly.
fn read_seed_csv(path: &Path, config_line: &str) -> Result<Option<SeedCurve>, ExpError> {
    if !path.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let _version = lines.next();
    let config = lines.next().unwrap_or_default();
    if config != format!("# config: {}", config_line) {
        return Ok(None);
    }
    let header = lines.next();
    if header != Some("seed,episode,total_reward,epsilon_end") {
        return Ok(None);
    }
    let mut seed = 0;
    let mut rewards = Vec::new();
    let mut epsilons = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let s: u64 = match parts.next().and_then(|v| v.parse().ok()) {
            Some(v) => v,
            None => return Ok(None),
        };
        let _episode = parts.next();
        let reward: f64 = match parts.next().and_then(|v| v.parse().ok()) {
            Some(v) => v,
            None => return Ok(None),
        };
        let eps: f64 = match parts.next().and_then(|v| v.parse().ok()) {
            Some(v) => v,
            None => return Ok(None),
        };
        seed = s;
        rewards.push(reward);
        epsilons.push(eps);
    }
    if rewards.is_empty() {
        return Ok(None);
    }
    Ok(Some(SeedCurve {
        seed,
        rewards,
        epsilons,
    }))
}

fn write_summary_csv(path: &Path, config_line: &str, summary: &CurveSummary) -> Result<(), ExpError> {
    let mut out = file_header(config_line);
    out.push_str("episode,mean_reward,smoothed_mean,ci95_lo,ci95_hi\n");
    for e in 0..summary.mean.len() {
        writeln!(
            out,
            "{},{},{},{},{}",
            e, summary.mean[e], summary.smoothed[e], summary.ci_lo[e], summary.ci_hi[e]
        )
        .unwrap();
    }
    write_atomic(path, out.as_bytes())
}

fn write_loss_csv(path: &Path, config_line: &str, trace: &[LossRecord]) -> Result<(), ExpError> {
    let mut out = file_header(config_line);
    out.push_str("step,loss_total,loss_inv,loss_ratio,loss_smooth\n");
    for r in trace {
        writeln!(out, "{},{},{},{},{}", r.step, r.total, r.inverse, r.ratio, r.smooth).unwrap();
    }
    write_atomic(path, out.as_bytes())
}

fn write_latents_csv(
    path: &Path,
    config_line: &str,
    grid: &GridConfig,
    cells: &[usize],
    latents: &Array2<f64>,
) -> Result<(), ExpError> {
    let mut out = file_header(config_line);
    out.push_str("obs_id,row,col");
    for d in 0..latents.ncols() {
        write!(out, ",z{}", d + 1).unwrap();
    }
    out.push('\n');
    for (i, &cell) in cells.iter().enumerate() {
        let (row, col) = grid.cell_position(cell);
        write!(out, "{},{},{}", i, row, col).unwrap();
        for d in 0..latents.ncols() {
            write!(out, ",{}", latents[[i, d]]).unwrap();
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Write through a temp file and rename, so interrupted runs never leave a
/// plausible-looking partial output behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ExpError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
