//! Command-line driver: verification of abstraction conditions on tabular
//! MDPs, dataset collection, representation pretraining, DQN training, and
//! the figure-reproduction pipelines.
//!
//! Exit codes: 0 on success, 1 when a verification does not match its
//! pinned verdicts, 2 for configuration and usage errors.

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use markov_abstractions::agent::DqnConfig;
use markov_abstractions::exp::{
    run_verify, AgentSpec, Driver, GridExperiment, VerifyTarget, FIG4A_SCHEDULE,
};
use markov_abstractions::gridworld::{self, GridConfig};
use markov_abstractions::learn::{Objective, PretrainConfig};
use markov_abstractions::mdp::text;
use markov_abstractions::nn::checkpoint;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "markov-abstractions", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every abstraction check on a built-in instance (fig3, fig6,
    /// block:<seed>) or on a serialized (mdp, abstraction) pair file.
    Verify {
        /// fig3 | fig6 | block:<seed> | path to a pair document
        target: String,
    },
    /// Collect a reward-free exploration dataset to a binary file with a
    /// text sidecar header and a debug CSV.
    Collect {
        #[arg(long, default_value_t = 20_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Pretrain one representation and write checkpoint.bin, loss.csv, and
    /// latents.csv into the output directory.
    Pretrain {
        /// markov | inv | ratio | autoenc | pixelpred
        #[arg(long)]
        objective: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Gradient updates (3000 standard, 30000 for the long variant).
        #[arg(long, default_value_t = 3000)]
        updates: usize,
        /// Reuse a collected dataset instead of collecting one.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        pretrain: PretrainArgs,
    },
    /// Train DQN agents across seeds on a feature source and aggregate the
    /// learning curves.
    Train {
        /// expert | permuted | visual | random | markov | inv | ratio |
        /// autoenc | pixelpred | checkpoint:<path>
        #[arg(long)]
        features: String,
        /// Pretraining updates for objective-based features.
        #[arg(long, default_value_t = 3000)]
        updates: usize,
        #[arg(long, default_value_t = 30)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        pretrain: PretrainArgs,
        #[command(flatten)]
        dqn: DqnArgs,
    },
    /// Reproduce the CSVs behind one of the named figures.
    Reproduce {
        /// fig4a | fig4b | fig8 | fig9
        figure: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        pretrain: PretrainArgs,
        #[command(flatten)]
        dqn: DqnArgs,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 6)]
    grid_size: usize,
    #[arg(long, default_value_t = 21)]
    obs_height: usize,
    #[arg(long, default_value_t = 12)]
    obs_width: usize,
    #[arg(long, default_value_t = 0.6)]
    kernel_std: f64,
    #[arg(long, default_value_t = 1.0)]
    kernel_truncation: f64,
    #[arg(long, default_value_t = 0.05)]
    noise_std: f64,
    /// Steps of exploration collected per pretraining seed.
    #[arg(long, default_value_t = 20_000)]
    dataset_steps: usize,
}

impl GridArgs {
    fn config(&self) -> GridConfig {
        GridConfig {
            grid_size: self.grid_size,
            obs_height: self.obs_height,
            obs_width: self.obs_width,
            kernel_std: self.kernel_std,
            kernel_truncation: self.kernel_truncation,
            noise_std: self.noise_std,
            seed: 0,
        }
    }
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long = "pretrain-batch-size", default_value_t = 2048)]
    pretrain_batch_size: usize,
    #[arg(long = "pretrain-learning-rate", default_value_t = 0.003)]
    pretrain_learning_rate: f64,
    #[arg(long, default_value_t = 2)]
    latent_dims: usize,
    /// Inverse-loss coefficient (alpha).
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Contrastive-loss coefficient (beta).
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Smoothness-loss coefficient.
    #[arg(long, default_value_t = 0.0)]
    smooth_weight: f64,
    /// Smoothness distance threshold.
    #[arg(long, default_value_t = 0.01)]
    d0: f64,
}

impl PretrainArgs {
    fn config(&self) -> PretrainConfig {
        PretrainConfig {
            batch_size: self.pretrain_batch_size,
            learning_rate: self.pretrain_learning_rate,
            latent_dim: self.latent_dims,
            alpha: self.alpha,
            beta: self.beta,
            smooth_weight: self.smooth_weight,
            d0: self.d0,
            ..PretrainConfig::default()
        }
    }
}

#[derive(Args)]
struct DqnArgs {
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long, default_value_t = 1000)]
    max_steps: usize,
    #[arg(long, default_value_t = 0.003)]
    learning_rate: f64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    eps_start: f64,
    #[arg(long, default_value_t = 0.05)]
    eps_final: f64,
    #[arg(long, default_value_t = 2500)]
    eps_decay: usize,
    #[arg(long, default_value_t = 500)]
    init_steps: usize,
    #[arg(long, default_value_t = 10_000)]
    replay_capacity: usize,
    #[arg(long, default_value_t = 50)]
    target_copy_period: usize,
}

impl DqnArgs {
    fn config(&self) -> DqnConfig {
        DqnConfig {
            episodes: self.episodes,
            max_steps: self.max_steps,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            gamma: self.gamma,
            eps_start: self.eps_start,
            eps_final: self.eps_final,
            eps_decay_steps: self.eps_decay,
            init_steps: self.init_steps,
            replay_capacity: self.replay_capacity,
            target_copy_period: self.target_copy_period,
            seed: 0,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {:#}", err);
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Verify { target } => {
            let target = if let Some(builtin) = VerifyTarget::parse_builtin(&target) {
                builtin
            } else {
                let path = PathBuf::from(&target);
                let content = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading pair document {}", path.display()))?;
                let (mdp, abstraction) =
                    text::parse_pair(&content).context("parsing pair document")?;
                VerifyTarget::Pair(Box::new(mdp), Box::new(abstraction))
            };
            let outcome = run_verify(&target)?;
            print!("{}", outcome.render());
            if outcome.matches_expectations {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("verification did not match the pinned verdicts");
                Ok(ExitCode::from(1))
            }
        }
        Command::Collect {
            steps,
            seed,
            out,
            grid,
        } => {
            let exp = GridExperiment {
                grid: grid.config(),
                dataset_steps: grid.dataset_steps,
                ..GridExperiment::default()
            };
            let parent = out
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(std::path::Path::new("."));
            let driver = Driver::new(exp, parent, 1);
            let covered = driver.collect_to_files(steps, seed, &out)?;
            if !covered {
                eprintln!("warning: the random walk did not visit every cell");
            }
            println!("wrote {} and sidecar header", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Pretrain {
            objective,
            out,
            seed,
            updates,
            dataset,
            grid,
            pretrain,
        } => {
            let objective = Objective::parse(&objective)
                .ok_or_else(|| anyhow!("unknown objective {:?}", objective))?;
            let exp = GridExperiment {
                grid: grid.config(),
                dataset_steps: grid.dataset_steps,
                pretrain: pretrain.config(),
                ..GridExperiment::default()
            };
            let records = match dataset {
                Some(path) => {
                    let (header_config, records) = gridworld::io::load_dataset(&path)
                        .with_context(|| format!("loading dataset {}", path.display()))?;
                    if header_config.obs_dim() != exp.grid.obs_dim() {
                        return Err(anyhow!(
                            "dataset observations are {}-dimensional but the grid expects {}",
                            header_config.obs_dim(),
                            exp.grid.obs_dim()
                        ));
                    }
                    Some(records)
                }
                None => None,
            };
            let driver = Driver::new(exp, &out, 1);
            driver.pretrain_to_files(objective, updates, seed, &out, records)?;
            println!(
                "wrote checkpoint.bin, loss.csv, latents.csv under {}",
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Train {
            features,
            updates,
            seeds,
            seed_offset,
            out,
            workers,
            grid,
            pretrain,
            dqn,
        } => {
            let exp = GridExperiment {
                grid: grid.config(),
                dataset_steps: grid.dataset_steps,
                pretrain: pretrain.config(),
                dqn: dqn.config(),
            };
            let driver = Driver::new(exp, &out, workers);
            let seed_list: Vec<u64> = (0..seeds as u64).map(|s| s + seed_offset).collect();
            if let Some(path) = features.strip_prefix("checkpoint:") {
                let encoder = checkpoint::load_net_from_path(path)
                    .with_context(|| format!("loading frozen encoder checkpoint {}", path))?;
                let curves = driver.checkpoint_curves(&encoder, &seed_list)?;
                println!(
                    "trained {} seeds on the frozen checkpoint; summaries under {}",
                    curves.len(),
                    out.display()
                );
                return Ok(ExitCode::SUCCESS);
            }
            let spec = match features.as_str() {
                "expert" | "expert_xy" => AgentSpec::Expert,
                "permuted" | "permuted_xy" => AgentSpec::Permuted,
                "visual" | "pixels" => AgentSpec::Visual,
                "random" => AgentSpec::Random,
                name => {
                    let objective = Objective::parse(name)
                        .ok_or_else(|| anyhow!("unknown feature source {:?}", name))?;
                    AgentSpec::Pretrained { objective, updates }
                }
            };
            let curves = driver.agent_curves(&spec, &seed_list)?;
            println!(
                "trained {} seeds for agent {}; summaries under {}",
                curves.len(),
                spec.key(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Reproduce {
            figure,
            out,
            seeds,
            seed_offset,
            workers,
            grid,
            pretrain,
            dqn,
        } => {
            let exp = GridExperiment {
                grid: grid.config(),
                dataset_steps: grid.dataset_steps,
                pretrain: pretrain.config(),
                dqn: dqn.config(),
            };
            let driver = Driver::new(exp, &out, workers);
            let seed_list: Vec<u64> = (0..seeds as u64).map(|s| s + seed_offset).collect();
            match figure.as_str() {
                "fig4a" => driver.reproduce_fig4a(&seed_list, &FIG4A_SCHEDULE)?,
                "fig4b" => {
                    driver.reproduce_fig4b(&seed_list)?;
                }
                "fig8" => {
                    driver.reproduce_fig8(&seed_list)?;
                }
                "fig9" => {
                    driver.reproduce_fig9(&seed_list)?;
                }
                other => return Err(anyhow!("unknown figure {:?}", other)),
            }
            println!("figure outputs written under {}", out.join(&figure).display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
