//! DQN with a ring replay buffer and a periodically copied target network,
//! running on frozen pretrained encoders, expert coordinates, permuted
//! coordinates, or raw pixels end to end.

use crate::gridworld::{self, GridConfig, PositionPermutation, N_ACTIONS};
use crate::nn::{
    adam_step, Activation, AdamParams, AdamState, DenseNet, NnError,
};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("configuration problem: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// One stored transition, already in feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTransition {
    pub features: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_features: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<StoredTransition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer needs positive capacity");
        Self {
            capacity,
            storage: Vec::with_capacity(capacity),
            next: 0,
        }
    }

    pub fn push(&mut self, transition: StoredTransition) {
        if self.storage.len() < self.capacity {
            self.storage.push(transition);
        } else {
            self.storage[self.next] = transition;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Uniform index sample with replacement.
    pub fn sample_indices(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..self.storage.len())).collect()
    }

    pub fn get(&self, index: usize) -> &StoredTransition {
        &self.storage[index]
    }
}

/// DQN hyperparameters. Defaults are the published table: 100 episodes of
/// at most 1000 steps, Adam at 0.003 on batches of 16, discount 0.9,
/// epsilon annealed linearly from 1.0 to 0.05 over 2500 steps, 500 random
/// initialization steps, a 10000-slot buffer, and a target copy every 50
/// steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub episodes: usize,
    pub max_steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_final: f64,
    pub eps_decay_steps: usize,
    pub init_steps: usize,
    pub replay_capacity: usize,
    pub target_copy_period: usize,
    pub seed: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            max_steps: 1000,
            learning_rate: 0.003,
            batch_size: 16,
            gamma: 0.9,
            eps_start: 1.0,
            eps_final: 0.05,
            eps_decay_steps: 2500,
            init_steps: 500,
            replay_capacity: 10000,
            target_copy_period: 50,
            seed: 0,
        }
    }
}

/// Exploration probability after `step` learning steps: linear from
/// `eps_start` to `eps_final` over `eps_decay_steps`, constant afterwards.
pub fn epsilon_at(config: &DqnConfig, step: usize) -> f64 {
    if step >= config.eps_decay_steps {
        return config.eps_final;
    }
    let frac = step as f64 / config.eps_decay_steps as f64;
    config.eps_start + (config.eps_final - config.eps_start) * frac
}

/// Epsilon-greedy action: uniform with probability `epsilon`, otherwise the
/// greedy action with lowest-index tie-breaking.
pub fn act(qnet: &DenseNet, features: &[f64], epsilon: f64, rng: &mut ChaCha8Rng) -> usize {
    let n_actions = qnet.output_width();
    if rng.gen_range(0.0..1.0) < epsilon {
        return rng.gen_range(0..n_actions);
    }
    let batch = Array2::from_shape_vec((1, features.len()), features.to_vec())
        .expect("row vector shape");
    let (q, _) = qnet.forward(&batch).expect("feature width matches network");
    let mut best = 0;
    for a in 1..n_actions {
        if q[[0, a]] > q[[0, best]] {
            best = a;
        }
    }
    best
}

/// Copy the online network's parameters into the target network.
pub fn sync_target(qnet: &DenseNet, target: &mut DenseNet) {
    *target = qnet.clone();
}

/// One TD update on a sampled batch: targets are
/// `r + gamma * (1 - done) * max_a' targetQ(s', a')`, loss is the mean
/// squared TD error on the taken actions, optimized with one Adam step.
/// The target network is untouched. Returns the TD loss.
pub fn dqn_update(
    qnet: &mut DenseNet,
    target_net: &DenseNet,
    batch: &[&StoredTransition],
    gamma: f64,
    opt: &mut AdamState,
) -> Result<f64, AgentError> {
    if batch.is_empty() {
        return Err(AgentError::Config("empty update batch".into()));
    }
    let n = batch.len();
    let d = batch[0].features.len();
    let mut s = Array2::zeros((n, d));
    let mut s_next = Array2::zeros((n, d));
    for (i, t) in batch.iter().enumerate() {
        if t.features.len() != d || t.next_features.len() != d {
            return Err(AgentError::Config("ragged feature widths in batch".into()));
        }
        for j in 0..d {
            s[[i, j]] = t.features[j];
            s_next[[i, j]] = t.next_features[j];
        }
    }
    let (q_next, _) = target_net.forward(&s_next)?;
    let (q, cache) = qnet.forward(&s)?;
    let mut grad = Array2::zeros(q.dim());
    let mut loss = 0.0;
    for (i, t) in batch.iter().enumerate() {
        let bootstrap = if t.done {
            0.0
        } else {
            let row = q_next.row(i);
            gamma * row.fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        };
        let target = t.reward + bootstrap;
        let td = q[[i, t.action]] - target;
        loss += td * td;
        grad[[i, t.action]] = 2.0 * td / n as f64;
    }
    let grads = qnet.backward_params(&cache, &grad)?;
    adam_step(qnet, &grads, opt)?;
    Ok(loss / n as f64)
}

/// Where the DQN's input features come from.
#[derive(Debug, Clone)]
pub enum FeatureSource {
    /// A pretrained encoder applied to observations; never updated by RL.
    FrozenEncoder(DenseNet),
    /// Ground-truth cell coordinates.
    ExpertXy,
    /// Ground-truth coordinates passed through a fixed cell relabeling.
    PermutedXy(PositionPermutation),
    /// Raw pixels; the encoder is part of the Q-network and trains with it.
    RawPixels,
}

impl FeatureSource {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureSource::FrozenEncoder(_) => "frozen_encoder",
            FeatureSource::ExpertXy => "expert_xy",
            FeatureSource::PermutedXy(_) => "permuted_xy",
            FeatureSource::RawPixels => "raw_pixels",
        }
    }

    pub fn output_dim(&self, obs_dim: usize) -> usize {
        match self {
            FeatureSource::FrozenEncoder(enc) => enc.output_width(),
            FeatureSource::ExpertXy | FeatureSource::PermutedXy(_) => 2,
            FeatureSource::RawPixels => obs_dim,
        }
    }

    fn extract(&self, obs: &[f64], position: (usize, usize)) -> Result<Vec<f64>, AgentError> {
        match self {
            FeatureSource::FrozenEncoder(enc) => {
                if obs.len() != enc.input_width() {
                    return Err(AgentError::Config(format!(
                        "encoder expects {} inputs, observation has {}",
                        enc.input_width(),
                        obs.len()
                    )));
                }
                let batch = Array2::from_shape_vec((1, obs.len()), obs.to_vec())
                    .expect("row vector shape");
                let (z, _) = enc.forward(&batch)?;
                Ok(z.row(0).to_vec())
            }
            FeatureSource::ExpertXy => Ok(vec![position.0 as f64, position.1 as f64]),
            FeatureSource::PermutedXy(perm) => {
                let (r, c) = perm.apply(position);
                Ok(vec![r as f64, c as f64])
            }
            FeatureSource::RawPixels => Ok(obs.to_vec()),
        }
    }
}

/// Q-network for a feature width: `features -> 32 relu -> actions`. Raw
/// pixels prepend the standard encoder and train it jointly.
fn build_qnet(
    source: &FeatureSource,
    obs_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DenseNet, AgentError> {
    let net = match source {
        FeatureSource::RawPixels => DenseNet::random(
            &[obs_dim, 32, 2, 32, N_ACTIONS],
            &[
                Activation::Tanh,
                Activation::Tanh,
                Activation::Relu,
                Activation::Identity,
            ],
            rng,
        )?,
        other => DenseNet::random(
            &[other.output_dim(obs_dim), 32, N_ACTIONS],
            &[Activation::Relu, Activation::Identity],
            rng,
        )?,
    };
    Ok(net)
}

/// Result of one training run.
#[derive(Debug, Clone)]
pub struct RlOutcome {
    /// Total reward per episode, one entry per configured episode.
    pub curve: Vec<f64>,
    /// Exploration probability in effect when each episode ended.
    pub episode_epsilons: Vec<f64>,
    pub qnet: DenseNet,
    /// Environment steps taken during the learning phase.
    pub env_steps: usize,
    /// Target-network copies performed (one per copy period).
    pub target_syncs: usize,
    /// The goal cell drawn for this run.
    pub goal: (usize, usize),
}

/// Train DQN on the goal-mode gridworld. Deterministic given the config
/// seed: the goal placement, network initialization, exploration, noise,
/// and replay sampling all derive from it.
pub fn train_rl(
    grid: &GridConfig,
    source: &FeatureSource,
    config: &DqnConfig,
) -> Result<RlOutcome, AgentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let goal = (
        rng.gen_range(0..grid.grid_size),
        rng.gen_range(0..grid.grid_size),
    );
    let mut qnet = build_qnet(source, grid.obs_dim(), &mut rng)?;
    let mut target_net = qnet.clone();
    let mut opt = AdamState::new(&qnet, AdamParams::with_learning_rate(config.learning_rate));
    let mut buffer = ReplayBuffer::new(config.replay_capacity);
    let mut state = gridworld::reset_state(grid, Some(goal), &mut rng);

    // Buffer prefill under the uniform random policy; no learning yet.
    for _ in 0..config.init_steps {
        let obs = gridworld::render(grid, state.position, &mut rng);
        let features = source.extract(&obs, state.position)?;
        let action = rng.gen_range(0..N_ACTIONS);
        let (transition, next_state) =
            gridworld::step_with_obs(&state, grid, obs, action, &mut rng);
        store(&mut buffer, source, features, &transition, next_state, goal)?;
        state = if next_state.steps_in_episode >= config.max_steps {
            gridworld::reset_state(grid, Some(goal), &mut rng)
        } else {
            next_state
        };
    }

    let mut curve = Vec::with_capacity(config.episodes);
    let mut episode_epsilons = Vec::with_capacity(config.episodes);
    let mut learn_step = 0usize;
    let mut target_syncs = 0usize;
    state = gridworld::reset_state(grid, Some(goal), &mut rng);
    for _ in 0..config.episodes {
        let mut episode_reward = 0.0;
        loop {
            let obs = gridworld::render(grid, state.position, &mut rng);
            let features = source.extract(&obs, state.position)?;
            let epsilon = epsilon_at(config, learn_step);
            let action = act(&qnet, &features, epsilon, &mut rng);
            let (transition, next_state) =
                gridworld::step_with_obs(&state, grid, obs, action, &mut rng);
            episode_reward += transition.reward;
            store(&mut buffer, source, features, &transition, next_state, goal)?;
            if buffer.len() >= config.batch_size {
                let indices = buffer.sample_indices(&mut rng, config.batch_size);
                let batch: Vec<&StoredTransition> =
                    indices.iter().map(|&i| buffer.get(i)).collect();
                dqn_update(&mut qnet, &target_net, &batch, config.gamma, &mut opt)?;
            }
            learn_step += 1;
            if learn_step % config.target_copy_period == 0 {
                sync_target(&qnet, &mut target_net);
                target_syncs += 1;
            }
            let done = transition.done;
            let truncated = !done && next_state.steps_in_episode >= config.max_steps;
            state = if truncated {
                gridworld::reset_state(grid, Some(goal), &mut rng)
            } else {
                next_state
            };
            if done || truncated {
                break;
            }
        }
        curve.push(episode_reward);
        episode_epsilons.push(epsilon_at(config, learn_step));
    }
    Ok(RlOutcome {
        curve,
        episode_epsilons,
        qnet,
        env_steps: learn_step,
        target_syncs,
        goal,
    })
}

/// The uniform-random baseline: the same episode structure with epsilon
/// pinned to one and no learning. Deterministic per seed. The baseline
/// never looks at observations, so nothing is rendered.
pub fn random_policy_curve(grid: &GridConfig, config: &DqnConfig) -> RlOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let goal = (
        rng.gen_range(0..grid.grid_size),
        rng.gen_range(0..grid.grid_size),
    );
    let mut state = gridworld::reset_state(grid, Some(goal), &mut rng);
    let mut curve = Vec::with_capacity(config.episodes);
    let mut env_steps = 0usize;
    for _ in 0..config.episodes {
        let mut episode_reward = 0.0;
        loop {
            let action = rng.gen_range(0..N_ACTIONS);
            let (reward, done, next_state) =
                gridworld::step_unobserved(&state, grid, action, &mut rng);
            episode_reward += reward;
            env_steps += 1;
            let truncated = !done && next_state.steps_in_episode >= config.max_steps;
            state = if truncated {
                gridworld::reset_state(grid, Some(goal), &mut rng)
            } else {
                next_state
            };
            if done || truncated {
                break;
            }
        }
        curve.push(episode_reward);
    }
    let placeholder = DenseNet::random(
        &[1, N_ACTIONS],
        &[Activation::Identity],
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .expect("trivial network");
    RlOutcome {
        curve,
        episode_epsilons: vec![1.0; config.episodes],
        qnet: placeholder,
        env_steps,
        target_syncs: 0,
        goal,
    }
}

/// Store a transition in feature space. The next-state position is the cell
/// actually reached, which on goal arrival is the goal itself rather than
/// the reset cell.
fn store(
    buffer: &mut ReplayBuffer,
    source: &FeatureSource,
    features: Vec<f64>,
    transition: &gridworld::Transition,
    next_state: gridworld::GridState,
    goal: (usize, usize),
) -> Result<(), AgentError> {
    let reached = if transition.done {
        goal
    } else {
        next_state.position
    };
    let next_features = source.extract(&transition.next_obs, reached)?;
    buffer.push(StoredTransition {
        features,
        action: transition.action,
        reward: transition.reward,
        next_features,
        done: transition.done,
    });
    Ok(())
}
