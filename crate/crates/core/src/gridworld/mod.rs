//! The visual gridworld: discrete navigation on a small grid observed
//! through noisy rendered images.
//!
//! Each cell maps to a blob on a fixed lattice of anchor pixels; rendering
//! upsamples the one-hot cell indicator onto the canvas, smooths it with a
//! truncated gaussian kernel (widths measured in cells), and adds per-pixel
//! gaussian noise. Rendering is injective over cells at zero noise. The
//! reward-free mode has no rewards or terminal states; goal mode pays -1
//! per step until the goal cell is reached, then resets to a random
//! non-goal cell.

use crate::mdp::{Abstraction, TabularMdp};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub mod io;

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const N_ACTIONS: usize = 4;

/// Rendering and layout parameters.
///
/// The published experiment fixes only the flattened observation size; the
/// blob lattice, kernel widths, and noise level here are artifact defaults,
/// and every result file records them in its header.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub grid_size: usize,
    pub obs_height: usize,
    pub obs_width: usize,
    /// Gaussian kernel standard deviation, in cell widths.
    pub kernel_std: f64,
    /// Kernel support half-width, in cell widths.
    pub kernel_truncation: f64,
    /// Standard deviation of the per-pixel additive noise.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            grid_size: 6,
            obs_height: 21,
            obs_width: 12,
            kernel_std: 0.6,
            kernel_truncation: 1.0,
            noise_std: 0.05,
            seed: 0,
        }
    }
}

impl GridConfig {
    pub fn obs_dim(&self) -> usize {
        self.obs_height * self.obs_width
    }

    pub fn n_cells(&self) -> usize {
        self.grid_size * self.grid_size
    }

    pub fn cell_index(&self, position: (usize, usize)) -> usize {
        position.0 * self.grid_size + position.1
    }

    pub fn cell_position(&self, index: usize) -> (usize, usize) {
        (index / self.grid_size, index % self.grid_size)
    }

    fn anchor(&self, position: (usize, usize)) -> (usize, usize) {
        (
            lattice_anchor(self.obs_height, self.grid_size, position.0),
            lattice_anchor(self.obs_width, self.grid_size, position.1),
        )
    }
}

/// Anchor pixel for one axis: integer spacing `dim / cells`, centered.
fn lattice_anchor(dim: usize, cells: usize, index: usize) -> usize {
    let spacing = (dim / cells).max(1);
    let offset = (dim - spacing * (cells - 1)) / 2;
    offset + spacing * index
}

/// Environment state: the agent's cell, the goal (absent in reward-free
/// mode), and the step count within the current episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridState {
    pub position: (usize, usize),
    pub goal: Option<(usize, usize)>,
    pub steps_in_episode: usize,
}

impl GridState {
    pub fn reward_free(position: (usize, usize)) -> Self {
        Self {
            position,
            goal: None,
            steps_in_episode: 0,
        }
    }

    pub fn with_goal(position: (usize, usize), goal: (usize, usize)) -> Self {
        assert_ne!(position, goal, "episodes never start on the goal");
        Self {
            position,
            goal: Some(goal),
            steps_in_episode: 0,
        }
    }
}

/// One observed step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// Render the observation for a cell: deterministic blob placement plus
/// per-pixel gaussian noise drawn from `rng`.
pub fn render(config: &GridConfig, position: (usize, usize), rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut obs = render_noiseless(config, position);
    if config.noise_std > 0.0 {
        let noise = Normal::new(0.0, config.noise_std).expect("finite noise std");
        for v in &mut obs {
            *v += noise.sample(rng);
        }
    }
    obs
}

/// The deterministic part of [`render`].
pub fn render_noiseless(config: &GridConfig, position: (usize, usize)) -> Vec<f64> {
    assert!(
        position.0 < config.grid_size && position.1 < config.grid_size,
        "position {:?} outside the {size}x{size} grid",
        position,
        size = config.grid_size,
    );
    let (anchor_r, anchor_c) = config.anchor(position);
    let spacing_r = (config.obs_height / config.grid_size).max(1) as f64;
    let spacing_c = (config.obs_width / config.grid_size).max(1) as f64;
    let mut obs = vec![0.0; config.obs_dim()];
    for r in 0..config.obs_height {
        let dr = (r as f64 - anchor_r as f64) / spacing_r;
        if dr.abs() > config.kernel_truncation {
            continue;
        }
        for c in 0..config.obs_width {
            let dc = (c as f64 - anchor_c as f64) / spacing_c;
            if dc.abs() > config.kernel_truncation {
                continue;
            }
            let scaled =
                (dr / config.kernel_std).powi(2) + (dc / config.kernel_std).powi(2);
            obs[r * config.obs_width + c] = (-0.5 * scaled).exp();
        }
    }
    obs
}

fn moved(config: &GridConfig, position: (usize, usize), action: usize) -> (usize, usize) {
    let (r, c) = position;
    match action {
        UP => (r.saturating_sub(1), c),
        DOWN => ((r + 1).min(config.grid_size - 1), c),
        LEFT => (r, c.saturating_sub(1)),
        RIGHT => (r, (c + 1).min(config.grid_size - 1)),
        _ => panic!("action {} out of range", action),
    }
}

/// Uniformly random non-goal starting cell.
pub fn reset_state(
    config: &GridConfig,
    goal: Option<(usize, usize)>,
    rng: &mut ChaCha8Rng,
) -> GridState {
    loop {
        let position = (
            rng.gen_range(0..config.grid_size),
            rng.gen_range(0..config.grid_size),
        );
        if Some(position) != goal {
            return GridState {
                position,
                goal,
                steps_in_episode: 0,
            };
        }
    }
}

/// Advance the environment one step. Walls self-loop. In goal mode every
/// step pays -1; reaching the goal ends the episode and the returned state
/// is already reset to a random non-goal cell. The transition's
/// observations are rendered here with fresh noise.
pub fn step(
    state: &GridState,
    config: &GridConfig,
    action: usize,
    rng: &mut ChaCha8Rng,
) -> (Transition, GridState) {
    let obs = render(config, state.position, rng);
    step_with_obs(state, config, obs, action, rng)
}

/// [`step`] reusing an observation already rendered for the current state,
/// so the stored transition carries exactly what the agent acted on.
pub fn step_with_obs(
    state: &GridState,
    config: &GridConfig,
    obs: Vec<f64>,
    action: usize,
    rng: &mut ChaCha8Rng,
) -> (Transition, GridState) {
    let next_position = moved(config, state.position, action);
    let next_obs = render(config, next_position, rng);
    let (reward, done) = match state.goal {
        None => (0.0, false),
        Some(goal) => (-1.0, next_position == goal),
    };
    let transition = Transition {
        obs,
        action,
        reward,
        next_obs,
        done,
    };
    let new_state = if done {
        reset_state(config, state.goal, rng)
    } else {
        GridState {
            position: next_position,
            goal: state.goal,
            steps_in_episode: state.steps_in_episode + 1,
        }
    };
    (transition, new_state)
}

/// Dynamics-only step for agents that never look at observations: returns
/// the reward, the episode-end flag, and the new state, without rendering.
pub fn step_unobserved(
    state: &GridState,
    config: &GridConfig,
    action: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, bool, GridState) {
    let next_position = moved(config, state.position, action);
    let (reward, done) = match state.goal {
        None => (0.0, false),
        Some(goal) => (-1.0, next_position == goal),
    };
    let new_state = if done {
        reset_state(config, state.goal, rng)
    } else {
        GridState {
            position: next_position,
            goal: state.goal,
            steps_in_episode: state.steps_in_episode + 1,
        }
    };
    (reward, done, new_state)
}

/// Summary of a collected dataset, for coverage checks and debug export.
#[derive(Debug, Clone)]
pub struct DatasetReport {
    /// Cell occupied at every step (before the action), plus the final cell.
    pub positions: Vec<(usize, usize)>,
    pub cells_visited: usize,
    /// Whether every cell appeared at least once.
    pub covered: bool,
}

/// Collect a reward-free dataset under the uniform random policy.
/// Deterministic given `seed`. Consecutive steps share the intermediate
/// observation: the next-observation of step `i` is the observation of
/// step `i + 1`, as a single environment rollout would produce.
pub fn collect_dataset(config: &GridConfig, n_steps: usize, seed: u64) -> Vec<Transition> {
    collect_dataset_report(config, n_steps, seed).0
}

/// [`collect_dataset`] plus the coverage report.
pub fn collect_dataset_report(
    config: &GridConfig,
    n_steps: usize,
    seed: u64,
) -> (Vec<Transition>, DatasetReport) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = reset_state(config, None, &mut rng);
    let mut transitions = Vec::with_capacity(n_steps);
    let mut positions = Vec::with_capacity(n_steps + 1);
    let mut seen = vec![false; config.n_cells()];
    let mut obs = render(config, state.position, &mut rng);
    for _ in 0..n_steps {
        positions.push(state.position);
        seen[config.cell_index(state.position)] = true;
        let action = rng.gen_range(0..N_ACTIONS);
        let next_position = moved(config, state.position, action);
        let next_obs = render(config, next_position, &mut rng);
        transitions.push(Transition {
            obs: std::mem::replace(&mut obs, next_obs.clone()),
            action,
            reward: 0.0,
            next_obs,
            done: false,
        });
        state = GridState {
            position: next_position,
            goal: None,
            steps_in_episode: state.steps_in_episode + 1,
        };
    }
    positions.push(state.position);
    seen[config.cell_index(state.position)] = true;
    let cells_visited = seen.iter().filter(|&&s| s).count();
    let report = DatasetReport {
        positions,
        cells_visited,
        covered: cells_visited == config.n_cells(),
    };
    (transitions, report)
}

/// The exact tabular counterpart of the pixel environment: one state per
/// cell, deterministic moves with wall self-loops, uniform initial
/// distribution, zero rewards. The paired abstraction is cell identity,
/// which is the ground-truth Markov abstraction of the pixel process.
pub fn tabular_twin(config: &GridConfig) -> (TabularMdp, Abstraction) {
    let n = config.n_cells();
    let mut transition = vec![0.0; n * N_ACTIONS * n];
    for cell in 0..n {
        let position = config.cell_position(cell);
        for action in 0..N_ACTIONS {
            let target = config.cell_index(moved(config, position, action));
            transition[(cell * N_ACTIONS + action) * n + target] = 1.0;
        }
    }
    let reward = vec![0.0; n * N_ACTIONS * n];
    let initial = vec![1.0 / n as f64; n];
    let mdp = TabularMdp::new(n, N_ACTIONS, transition, reward, 0.9, initial)
        .expect("valid by construction");
    (mdp, Abstraction::identity(n))
}

/// A bijective relabeling of grid cells, applied to the coordinate features
/// given to the expert-feature agent. Dynamics are untouched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionPermutation {
    forward: Vec<usize>,
    grid_size: usize,
}

impl PositionPermutation {
    pub fn identity(grid_size: usize) -> Self {
        Self {
            forward: (0..grid_size * grid_size).collect(),
            grid_size,
        }
    }

    pub fn apply_cell(&self, cell: usize) -> usize {
        self.forward[cell]
    }

    pub fn apply(&self, position: (usize, usize)) -> (usize, usize) {
        let cell = self.forward[position.0 * self.grid_size + position.1];
        (cell / self.grid_size, cell % self.grid_size)
    }

    pub fn mapping(&self) -> &[usize] {
        &self.forward
    }
}

/// Sample a uniformly random cell relabeling.
pub fn permute_positions(config: &GridConfig, seed: u64) -> PositionPermutation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut forward: Vec<usize> = (0..config.n_cells()).collect();
    for i in (1..forward.len()).rev() {
        let j = rng.gen_range(0..=i);
        forward.swap(i, j);
    }
    PositionPermutation {
        forward,
        grid_size: config.grid_size,
    }
}

#[cfg(test)]
mod tests;
