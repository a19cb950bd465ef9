//! Offline pretraining loop over a collected transition dataset.

use super::{
    autoencoder_loss, decoder_net, fused_markov_step, pixel_prediction_loss, AbstractionModel,
    ExperienceBatch, LearnError, MarkovLossTerms,
};
use crate::gridworld::Transition;
use crate::nn::{adam_step, AdamParams, AdamState, DenseNet};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which objective drives pretraining.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Markov,
    Inverse,
    Ratio,
    Autoencoder,
    PixelPrediction,
}

impl Objective {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "markov" => Some(Self::Markov),
            "inv" | "inverse" => Some(Self::Inverse),
            "ratio" => Some(Self::Ratio),
            "autoenc" | "autoencoder" => Some(Self::Autoencoder),
            "pixelpred" | "pixel-prediction" => Some(Self::PixelPrediction),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Markov => "markov",
            Self::Inverse => "inv",
            Self::Ratio => "ratio",
            Self::Autoencoder => "autoenc",
            Self::PixelPrediction => "pixelpred",
        }
    }

    pub const ALL: [Objective; 5] = [
        Self::Markov,
        Self::Inverse,
        Self::Ratio,
        Self::Autoencoder,
        Self::PixelPrediction,
    ];
}

/// Pretraining hyperparameters. Defaults follow the offline experiment
/// settings: 3000 Adam updates at learning rate 0.003 on batches of 2048,
/// a 2-dimensional latent space, unit loss coefficients, and no smoothness
/// term.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub updates: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub latent_dim: usize,
    pub hidden: usize,
    pub n_actions: usize,
    pub alpha: f64,
    pub beta: f64,
    pub smooth_weight: f64,
    pub d0: f64,
    /// Minibatches are drawn uniformly with replacement when true (the
    /// pinned default), or by reshuffled epochs when false.
    pub sample_with_replacement: bool,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            updates: 3000,
            batch_size: 2048,
            learning_rate: 0.003,
            seed: 0,
            latent_dim: 2,
            hidden: 32,
            n_actions: 4,
            alpha: 1.0,
            beta: 1.0,
            smooth_weight: 0.0,
            d0: 0.01,
            sample_with_replacement: true,
        }
    }
}

/// One row of the loss trace CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub total: f64,
    pub inverse: f64,
    pub ratio: f64,
    pub smooth: f64,
}

impl From<(usize, MarkovLossTerms)> for LossRecord {
    fn from((step, t): (usize, MarkovLossTerms)) -> Self {
        Self {
            step,
            total: t.total,
            inverse: t.inverse,
            ratio: t.ratio,
            smooth: t.smooth,
        }
    }
}

/// Heads trained alongside the encoder, kept for estimator queries and
/// checkpointing.
#[derive(Debug, Clone)]
pub enum TrainedHeads {
    InverseContrast {
        inverse: DenseNet,
        contrast: DenseNet,
    },
    Decoder(DenseNet),
}

/// A pretrained representation: the frozen-ready encoder, its heads, and
/// the per-update loss trace.
#[derive(Debug, Clone)]
pub struct Pretrained {
    pub objective: Objective,
    pub encoder: DenseNet,
    pub heads: TrainedHeads,
    pub trace: Vec<LossRecord>,
}

/// Train a representation offline on a transition dataset. Deterministic
/// given the config seed; the loss trace has one entry per update, so zero
/// updates returns the freshly initialized model unchanged.
pub fn pretrain(
    objective: Objective,
    dataset: &[Transition],
    config: &PretrainConfig,
) -> Result<Pretrained, LearnError> {
    pretrain_with_snapshots(objective, dataset, config, &[], |_, _| {})
}

/// [`pretrain`] with encoder snapshots: `on_snapshot(step, encoder)` fires
/// after completing each update listed in `snapshot_steps` (1-based).
pub fn pretrain_with_snapshots(
    objective: Objective,
    dataset: &[Transition],
    config: &PretrainConfig,
    snapshot_steps: &[usize],
    mut on_snapshot: impl FnMut(usize, &DenseNet),
) -> Result<Pretrained, LearnError> {
    if dataset.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let obs_dim = dataset[0].obs.len();
    if dataset
        .iter()
        .any(|t| t.obs.len() != obs_dim || t.next_obs.len() != obs_dim)
    {
        return Err(LearnError::Batch("ragged observation dimensions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // The encoder is always drawn first so that every objective starts from
    // the same initialization for a given seed.
    let mut model = AbstractionModel::new(
        obs_dim,
        config.hidden,
        config.latent_dim,
        config.n_actions,
        &mut rng,
    )?;
    model.alpha = config.alpha;
    model.beta = config.beta;
    model.smooth_weight = config.smooth_weight;
    model.d0 = config.d0;
    match objective {
        Objective::Markov => {}
        Objective::Inverse => model.beta = 0.0,
        Objective::Ratio => model.alpha = 0.0,
        Objective::Autoencoder | Objective::PixelPrediction => {}
    }
    let mut decoder = match objective {
        Objective::Autoencoder | Objective::PixelPrediction => Some(decoder_net(
            obs_dim,
            config.hidden,
            config.latent_dim,
            &mut rng,
        )?),
        _ => None,
    };

    let adam = AdamParams::with_learning_rate(config.learning_rate);
    let mut opt_encoder = AdamState::new(&model.encoder, adam);
    let mut opt_inverse = AdamState::new(&model.inverse_head, adam);
    let mut opt_contrast = AdamState::new(&model.contrast_head, adam);
    let mut opt_decoder = decoder.as_ref().map(|d| AdamState::new(d, adam));

    let batch_size = config.batch_size.min(dataset.len());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut cursor = usize::MAX; // forces an initial shuffle in epoch mode
    let mut trace = Vec::with_capacity(config.updates);

    for step in 1..=config.updates {
        let mut indices = Vec::with_capacity(batch_size);
        if config.sample_with_replacement {
            for _ in 0..batch_size {
                indices.push(rng.gen_range(0..dataset.len()));
            }
        } else {
            for _ in 0..batch_size {
                if cursor >= dataset.len() {
                    for i in (1..order.len()).rev() {
                        let j = rng.gen_range(0..=i);
                        order.swap(i, j);
                    }
                    cursor = 0;
                }
                indices.push(order[cursor]);
                cursor += 1;
            }
        }
        let batch = gather_batch(dataset, &indices, config.n_actions)?;

        let terms = match objective {
            Objective::Markov | Objective::Inverse | Objective::Ratio => {
                let marginal_anchors: Vec<usize> = if model.beta != 0.0 {
                    (0..batch.len()).map(|_| rng.gen_range(0..batch.len())).collect()
                } else {
                    Vec::new()
                };
                fused_markov_step(
                    &mut model,
                    &batch,
                    &marginal_anchors,
                    &mut opt_encoder,
                    &mut opt_inverse,
                    &mut opt_contrast,
                )?
            }
            Objective::Autoencoder | Objective::PixelPrediction => {
                let dec = decoder.as_mut().expect("decoder exists for baselines");
                let (loss, enc_grads, dec_grads) = if objective == Objective::Autoencoder {
                    autoencoder_loss(&model.encoder, dec, &batch)?
                } else {
                    pixel_prediction_loss(&model.encoder, dec, &batch)?
                };
                adam_step(&mut model.encoder, &enc_grads, &mut opt_encoder)?;
                adam_step(dec, &dec_grads, opt_decoder.as_mut().unwrap())?;
                MarkovLossTerms {
                    total: loss,
                    inverse: 0.0,
                    ratio: 0.0,
                    smooth: 0.0,
                }
            }
        };
        trace.push(LossRecord::from((step, terms)));
        if snapshot_steps.contains(&step) {
            on_snapshot(step, &model.encoder);
        }
    }

    let heads = match decoder {
        Some(dec) => TrainedHeads::Decoder(dec),
        None => TrainedHeads::InverseContrast {
            inverse: model.inverse_head.clone(),
            contrast: model.contrast_head.clone(),
        },
    };
    Ok(Pretrained {
        objective,
        encoder: model.encoder,
        heads,
        trace,
    })
}

fn gather_batch(
    dataset: &[Transition],
    indices: &[usize],
    n_actions: usize,
) -> Result<ExperienceBatch, LearnError> {
    let obs_dim = dataset[0].obs.len();
    let mut obs = Array2::zeros((indices.len(), obs_dim));
    let mut next_obs = Array2::zeros((indices.len(), obs_dim));
    let mut actions = Vec::with_capacity(indices.len());
    for (row, &idx) in indices.iter().enumerate() {
        let t = &dataset[idx];
        for (j, &v) in t.obs.iter().enumerate() {
            obs[[row, j]] = v;
        }
        for (j, &v) in t.next_obs.iter().enumerate() {
            next_obs[[row, j]] = v;
        }
        actions.push(t.action);
    }
    ExperienceBatch::new(obs, actions, next_obs, n_actions)
}
