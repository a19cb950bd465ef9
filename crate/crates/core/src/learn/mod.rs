//! Representation-learning objectives: the inverse-model loss, the
//! contrastive density-ratio loss, the latent smoothness penalty, their
//! weighted combination, and the autoencoder / pixel-prediction baselines.
//!
//! A shared encoder maps observations to latent codes; an inverse head
//! predicts the action connecting two consecutive codes, and a contrastive
//! head discriminates real transition pairs from pairs whose conditioning
//! observation was shuffled. Head inputs are ordered `(phi(x'), phi(x))` —
//! next-state code first — throughout; transposing them silently changes
//! nothing about the losses but breaks checkpoint compatibility, so the
//! order is fixed here once.

use crate::nn::{
    adam_step, bce, cross_entropy_logits, mse, Activation, AdamState, DenseNet, GradBuffer,
    NnError, PROB_CLAMP,
};
use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub mod pretrain;

pub use pretrain::{pretrain, pretrain_with_snapshots, LossRecord, Objective, Pretrained, PretrainConfig, TrainedHeads};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("batch problem: {0}")]
    Batch(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// A batch of `(x, a, x')` experience tuples as dense rows.
#[derive(Debug, Clone)]
pub struct ExperienceBatch {
    pub obs: Array2<f64>,
    pub actions: Vec<usize>,
    pub next_obs: Array2<f64>,
}

impl ExperienceBatch {
    pub fn new(
        obs: Array2<f64>,
        actions: Vec<usize>,
        next_obs: Array2<f64>,
        n_actions: usize,
    ) -> Result<Self, LearnError> {
        if obs.nrows() == 0 {
            return Err(LearnError::EmptyDataset);
        }
        if obs.dim() != next_obs.dim() || obs.nrows() != actions.len() {
            return Err(LearnError::Batch(format!(
                "obs {:?}, next_obs {:?}, {} actions",
                obs.dim(),
                next_obs.dim(),
                actions.len()
            )));
        }
        if let Some(a) = actions.iter().find(|&&a| a >= n_actions) {
            return Err(LearnError::Batch(format!(
                "action {} out of range for {} actions",
                a, n_actions
            )));
        }
        if obs.iter().chain(next_obs.iter()).any(|v| !v.is_finite()) {
            return Err(LearnError::Batch("non-finite observation".into()));
        }
        Ok(Self {
            obs,
            actions,
            next_obs,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Conditional-versus-marginal sample pairs for the contrastive loss.
/// The first `n_conditional` rows keep their true `(x, x')` pairing and are
/// labeled 1; the remaining `n_marginal` rows pair a real next-observation
/// with an independently drawn conditioning observation and are labeled 0.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch {
    pub anchor: Array2<f64>,
    pub candidate: Array2<f64>,
    pub labels: Vec<f64>,
    pub n_conditional: usize,
    pub n_marginal: usize,
}

/// Build a contrastive batch from experience. Conditional rows are the
/// first `n_c` true pairs; marginal rows redraw the anchor uniformly from
/// the batch, with replacement, so self-pairings are allowed. A batch of
/// size one therefore degenerates to marginal == conditional, which is
/// expected.
pub fn make_contrastive_batch(
    batch: &ExperienceBatch,
    n_c: usize,
    n_m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ContrastiveBatch, LearnError> {
    let n = batch.len();
    if n < n_c.max(n_m) {
        return Err(LearnError::Batch(format!(
            "batch of {} cannot supply {} conditional / {} marginal rows",
            n, n_c, n_m
        )));
    }
    let d = batch.obs.ncols();
    let mut anchor = Array2::zeros((n_c + n_m, d));
    let mut candidate = Array2::zeros((n_c + n_m, d));
    for i in 0..n_c {
        anchor.row_mut(i).assign(&batch.obs.row(i));
        candidate.row_mut(i).assign(&batch.next_obs.row(i));
    }
    for j in 0..n_m {
        let shuffled = rng.gen_range(0..n);
        anchor.row_mut(n_c + j).assign(&batch.obs.row(shuffled));
        candidate.row_mut(n_c + j).assign(&batch.next_obs.row(j));
    }
    let mut labels = vec![1.0; n_c];
    labels.extend(std::iter::repeat(0.0).take(n_m));
    Ok(ContrastiveBatch {
        anchor,
        candidate,
        labels,
        n_conditional: n_c,
        n_marginal: n_m,
    })
}

/// The encoder plus both heads, with the loss weights that combine them.
#[derive(Debug, Clone)]
pub struct AbstractionModel {
    pub encoder: DenseNet,
    pub inverse_head: DenseNet,
    pub contrast_head: DenseNet,
    pub alpha: f64,
    pub beta: f64,
    pub smooth_weight: f64,
    pub d0: f64,
}

impl AbstractionModel {
    /// Standard architecture: encoder `obs_dim -> hidden tanh -> latent
    /// tanh`, inverse head `2·latent -> hidden tanh -> n_actions` logits,
    /// contrastive head `2·latent -> hidden tanh -> 1` sigmoid.
    pub fn new(
        obs_dim: usize,
        hidden: usize,
        latent_dim: usize,
        n_actions: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, LearnError> {
        let encoder = DenseNet::random(
            &[obs_dim, hidden, latent_dim],
            &[Activation::Tanh, Activation::Tanh],
            rng,
        )?;
        let inverse_head = DenseNet::random(
            &[2 * latent_dim, hidden, n_actions],
            &[Activation::Tanh, Activation::Identity],
            rng,
        )?;
        let contrast_head = DenseNet::random(
            &[2 * latent_dim, hidden, 1],
            &[Activation::Tanh, Activation::Sigmoid],
            rng,
        )?;
        Ok(Self {
            encoder,
            inverse_head,
            contrast_head,
            alpha: 1.0,
            beta: 1.0,
            smooth_weight: 0.0,
            d0: 0.01,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_width()
    }

    /// Encode a batch of observations without keeping the cache.
    pub fn encode(&self, obs: &Array2<f64>) -> Result<Array2<f64>, LearnError> {
        Ok(self.encoder.forward(obs)?.0)
    }
}

/// Gradients for the model's three networks. Losses that do not touch a
/// head leave its buffer zeroed.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub encoder: GradBuffer,
    pub inverse: GradBuffer,
    pub contrast: GradBuffer,
}

impl ModelGrads {
    fn zeros_like(model: &AbstractionModel) -> Self {
        Self {
            encoder: GradBuffer::zeros_like(&model.encoder),
            inverse: GradBuffer::zeros_like(&model.inverse_head),
            contrast: GradBuffer::zeros_like(&model.contrast_head),
        }
    }

    fn add_scaled(&mut self, other: &ModelGrads, scale: f64) {
        self.encoder.add_scaled(&other.encoder, scale);
        self.inverse.add_scaled(&other.inverse, scale);
        self.contrast.add_scaled(&other.contrast, scale);
    }
}

fn hcat(left: &Array2<f64>, right: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[left.view(), right.view()]).expect("row counts match")
}

/// Inverse-model loss: mean cross-entropy of the inverse head's action
/// prediction on `(phi(x'), phi(x))`, with gradients for the encoder and
/// the head.
pub fn inverse_loss(
    model: &AbstractionModel,
    batch: &ExperienceBatch,
) -> Result<(f64, ModelGrads), LearnError> {
    let (z, cache_x) = model.encoder.forward(&batch.obs)?;
    let (z_next, cache_xn) = model.encoder.forward(&batch.next_obs)?;
    let latent = model.latent_dim();
    let input = hcat(&z_next, &z);
    let (logits, cache_f) = model.inverse_head.forward(&input)?;
    let (loss, dlogits) = cross_entropy_logits(&logits, &batch.actions)?;
    let (head_grads, dinput) = model.inverse_head.backward(&cache_f, &dlogits)?;
    let dz_next = dinput.slice(s![.., ..latent]).to_owned();
    let dz = dinput.slice(s![.., latent..]).to_owned();
    let mut grads = ModelGrads::zeros_like(model);
    grads.inverse = head_grads;
    grads.encoder = model.encoder.backward_params(&cache_xn, &dz_next)?;
    let from_x = model.encoder.backward_params(&cache_x, &dz)?;
    grads.encoder.add_scaled(&from_x, 1.0);
    Ok((loss, grads))
}

/// Contrastive density-ratio loss: binary cross-entropy of the contrastive
/// head's conditional-vs-marginal prediction on latent pairs.
pub fn ratio_loss(
    model: &AbstractionModel,
    cbatch: &ContrastiveBatch,
) -> Result<(f64, ModelGrads), LearnError> {
    let (z_anchor, cache_a) = model.encoder.forward(&cbatch.anchor)?;
    let (z_cand, cache_c) = model.encoder.forward(&cbatch.candidate)?;
    let latent = model.latent_dim();
    let input = hcat(&z_cand, &z_anchor);
    let (out, cache_g) = model.contrast_head.forward(&input)?;
    let probs = out.column(0).to_owned();
    let (loss, dprobs) = bce(&probs, &cbatch.labels)?;
    let dout = dprobs.insert_axis(Axis(1));
    let (head_grads, dinput) = model.contrast_head.backward(&cache_g, &dout)?;
    let dz_cand = dinput.slice(s![.., ..latent]).to_owned();
    let dz_anchor = dinput.slice(s![.., latent..]).to_owned();
    let mut grads = ModelGrads::zeros_like(model);
    grads.contrast = head_grads;
    grads.encoder = model.encoder.backward_params(&cache_c, &dz_cand)?;
    let from_anchor = model.encoder.backward_params(&cache_a, &dz_anchor)?;
    grads.encoder.add_scaled(&from_anchor, 1.0);
    Ok((loss, grads))
}

/// A density-ratio estimate recovered from the trained classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEstimate {
    pub value: f64,
    /// True when the classifier output saturated against the probability
    /// clamp, so the estimate is a capped lower bound.
    pub saturated: bool,
}

/// Estimate `Pr(x'|x) / Pr(x')` for one pair from the contrastive head:
/// `(n_m / n_c) * g / (1 - g)`.
pub fn density_ratio_estimate(
    model: &AbstractionModel,
    obs: &[f64],
    next_obs: &[f64],
    n_c: usize,
    n_m: usize,
) -> Result<RatioEstimate, LearnError> {
    let anchor = Array2::from_shape_vec((1, obs.len()), obs.to_vec())
        .map_err(|e| LearnError::Batch(e.to_string()))?;
    let cand = Array2::from_shape_vec((1, next_obs.len()), next_obs.to_vec())
        .map_err(|e| LearnError::Batch(e.to_string()))?;
    let z_anchor = model.encode(&anchor)?;
    let z_cand = model.encode(&cand)?;
    let input = hcat(&z_cand, &z_anchor);
    let (out, _) = model.contrast_head.forward(&input)?;
    let g = out[[0, 0]];
    let scale = n_m as f64 / n_c as f64;
    if g >= 1.0 - PROB_CLAMP {
        let capped = 1.0 - PROB_CLAMP;
        return Ok(RatioEstimate {
            value: scale * capped / (1.0 - capped),
            saturated: true,
        });
    }
    Ok(RatioEstimate {
        value: scale * g / (1.0 - g),
        saturated: false,
    })
}

/// Latent smoothness penalty: mean squared hinge on the distance between
/// consecutive latent codes beyond `d0`. Gradients flow to the encoder
/// only.
pub fn smoothness_loss(
    model: &AbstractionModel,
    batch: &ExperienceBatch,
) -> Result<(f64, ModelGrads), LearnError> {
    let (z, cache_x) = model.encoder.forward(&batch.obs)?;
    let (z_next, cache_xn) = model.encoder.forward(&batch.next_obs)?;
    let (loss, dz, dz_next) = smoothness_from_latents(&z, &z_next, model.d0);
    let mut grads = ModelGrads::zeros_like(model);
    grads.encoder = model.encoder.backward_params(&cache_xn, &dz_next)?;
    let from_x = model.encoder.backward_params(&cache_x, &dz)?;
    grads.encoder.add_scaled(&from_x, 1.0);
    Ok((loss, grads))
}

/// Hinge-squared smoothness terms computed directly on latent codes.
/// Returns the loss and gradients with respect to `z` and `z_next`.
fn smoothness_from_latents(
    z: &Array2<f64>,
    z_next: &Array2<f64>,
    d0: f64,
) -> (f64, Array2<f64>, Array2<f64>) {
    let n = z.nrows();
    let mut dz = Array2::zeros(z.dim());
    let mut dz_next = Array2::zeros(z.dim());
    let mut loss = 0.0;
    for i in 0..n {
        let diff = &z_next.row(i) - &z.row(i);
        let dist = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        let hinge = dist - d0;
        if hinge <= 0.0 {
            continue;
        }
        loss += hinge * hinge;
        // d(hinge^2)/dz' = 2 * hinge * (z' - z) / dist; dist > d0 > 0 here.
        let coeff = 2.0 * hinge / (dist * n as f64);
        for (j, &d) in diff.iter().enumerate() {
            dz_next[[i, j]] += coeff * d;
            dz[[i, j]] -= coeff * d;
        }
    }
    (loss / n as f64, dz, dz_next)
}

/// Component values of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovLossTerms {
    pub total: f64,
    pub inverse: f64,
    pub ratio: f64,
    pub smooth: f64,
}

/// Weighted combination `alpha * L_inv + beta * L_ratio +
/// smooth_weight * L_smooth`, with the matching combined gradients.
/// Components with zero weight are skipped entirely, which is what the
/// inverse-only and ratio-only ablations rely on.
pub fn markov_loss(
    model: &AbstractionModel,
    batch: &ExperienceBatch,
    cbatch: &ContrastiveBatch,
) -> Result<(MarkovLossTerms, ModelGrads), LearnError> {
    let mut grads = ModelGrads::zeros_like(model);
    let mut terms = MarkovLossTerms {
        total: 0.0,
        inverse: 0.0,
        ratio: 0.0,
        smooth: 0.0,
    };
    if model.alpha != 0.0 {
        let (loss, g) = inverse_loss(model, batch)?;
        terms.inverse = loss;
        grads.add_scaled(&g, model.alpha);
    }
    if model.beta != 0.0 {
        let (loss, g) = ratio_loss(model, cbatch)?;
        terms.ratio = loss;
        grads.add_scaled(&g, model.beta);
    }
    if model.smooth_weight != 0.0 {
        let (loss, g) = smoothness_loss(model, batch)?;
        terms.smooth = loss;
        grads.add_scaled(&g, model.smooth_weight);
    }
    terms.total =
        model.alpha * terms.inverse + model.beta * terms.ratio + model.smooth_weight * terms.smooth;
    Ok((terms, grads))
}

/// Reconstruction baseline: mean squared error of `decoder(encoder(x))`
/// against `x`.
pub fn autoencoder_loss(
    encoder: &DenseNet,
    decoder: &DenseNet,
    batch: &ExperienceBatch,
) -> Result<(f64, GradBuffer, GradBuffer), LearnError> {
    reconstruction_loss(encoder, decoder, &batch.obs, &batch.obs)
}

/// Prediction baseline: mean squared error of `decoder(encoder(x))`
/// against the next observation.
pub fn pixel_prediction_loss(
    encoder: &DenseNet,
    decoder: &DenseNet,
    batch: &ExperienceBatch,
) -> Result<(f64, GradBuffer, GradBuffer), LearnError> {
    reconstruction_loss(encoder, decoder, &batch.obs, &batch.next_obs)
}

fn reconstruction_loss(
    encoder: &DenseNet,
    decoder: &DenseNet,
    input: &Array2<f64>,
    target: &Array2<f64>,
) -> Result<(f64, GradBuffer, GradBuffer), LearnError> {
    let (z, cache_enc) = encoder.forward(input)?;
    let (recon, cache_dec) = decoder.forward(&z)?;
    let (loss, drecon) = mse(&recon, target)?;
    let (dec_grads, dz) = decoder.backward(&cache_dec, &drecon)?;
    let enc_grads = encoder.backward_params(&cache_enc, &dz)?;
    Ok((loss, enc_grads, dec_grads))
}

/// The standard decoder architecture: `latent -> hidden tanh -> obs_dim
/// tanh`.
pub fn decoder_net(
    obs_dim: usize,
    hidden: usize,
    latent_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DenseNet, LearnError> {
    Ok(DenseNet::random(
        &[latent_dim, hidden, obs_dim],
        &[Activation::Tanh, Activation::Tanh],
        rng,
    )?)
}

/// One fused training step of the combined objective on an experience
/// batch.
///
/// Encodes the batch once and reuses the codes across the inverse,
/// contrastive, and smoothness terms; `marginal_anchors[j]` names the batch
/// row whose observation anchors the j-th marginal pair, exactly as
/// [`make_contrastive_batch`] would pair them with `n_c = n_m = batch
/// size`. Produces the same loss values and gradients as [`markov_loss`] on
/// the equivalent contrastive batch, and performs the Adam updates.
pub(crate) fn fused_markov_step(
    model: &mut AbstractionModel,
    batch: &ExperienceBatch,
    marginal_anchors: &[usize],
    opt_encoder: &mut AdamState,
    opt_inverse: &mut AdamState,
    opt_contrast: &mut AdamState,
) -> Result<MarkovLossTerms, LearnError> {
    let n = batch.len();
    let latent = model.latent_dim();
    let (z, cache_x) = model.encoder.forward(&batch.obs)?;
    let (z_next, cache_xn) = model.encoder.forward(&batch.next_obs)?;
    let mut dz = Array2::zeros((n, latent));
    let mut dz_next = Array2::zeros((n, latent));
    let mut terms = MarkovLossTerms {
        total: 0.0,
        inverse: 0.0,
        ratio: 0.0,
        smooth: 0.0,
    };

    let mut inverse_grads = None;
    if model.alpha != 0.0 {
        let input = hcat(&z_next, &z);
        let (logits, cache_f) = model.inverse_head.forward(&input)?;
        let (loss, dlogits) = cross_entropy_logits(&logits, &batch.actions)?;
        let (head_grads, dinput) = model.inverse_head.backward(&cache_f, &dlogits)?;
        terms.inverse = loss;
        dz_next.scaled_add(model.alpha, &dinput.slice(s![.., ..latent]));
        dz.scaled_add(model.alpha, &dinput.slice(s![.., latent..]));
        inverse_grads = Some(head_grads);
    }

    let mut contrast_grads = None;
    if model.beta != 0.0 {
        if marginal_anchors.len() != n {
            return Err(LearnError::Batch(format!(
                "{} marginal anchors for a batch of {}",
                marginal_anchors.len(),
                n
            )));
        }
        // Rows 0..n are true pairs; rows n..2n pair next-observations with
        // shuffled anchors, all through the already-computed codes.
        let mut input = Array2::zeros((2 * n, 2 * latent));
        for i in 0..n {
            input
                .slice_mut(s![i, ..latent])
                .assign(&z_next.row(i));
            input.slice_mut(s![i, latent..]).assign(&z.row(i));
            input
                .slice_mut(s![n + i, ..latent])
                .assign(&z_next.row(i));
            input
                .slice_mut(s![n + i, latent..])
                .assign(&z.row(marginal_anchors[i]));
        }
        let mut labels = vec![1.0; n];
        labels.extend(std::iter::repeat(0.0).take(n));
        let (out, cache_g) = model.contrast_head.forward(&input)?;
        let probs = out.column(0).to_owned();
        let (loss, dprobs) = bce(&probs, &labels)?;
        let dout = dprobs.insert_axis(Axis(1));
        let (head_grads, dinput) = model.contrast_head.backward(&cache_g, &dout)?;
        terms.ratio = loss;
        for i in 0..n {
            for j in 0..latent {
                dz_next[[i, j]] +=
                    model.beta * (dinput[[i, j]] + dinput[[n + i, j]]);
                dz[[i, j]] += model.beta * dinput[[i, latent + j]];
                dz[[marginal_anchors[i], j]] += model.beta * dinput[[n + i, latent + j]];
            }
        }
        contrast_grads = Some(head_grads);
    }

    if model.smooth_weight != 0.0 {
        let (loss, sdz, sdz_next) = smoothness_from_latents(&z, &z_next, model.d0);
        terms.smooth = loss;
        dz.scaled_add(model.smooth_weight, &sdz);
        dz_next.scaled_add(model.smooth_weight, &sdz_next);
    }

    terms.total =
        model.alpha * terms.inverse + model.beta * terms.ratio + model.smooth_weight * terms.smooth;

    let mut encoder_grads = model.encoder.backward_params(&cache_x, &dz)?;
    let from_next = model.encoder.backward_params(&cache_xn, &dz_next)?;
    encoder_grads.add_scaled(&from_next, 1.0);
    adam_step(&mut model.encoder, &encoder_grads, opt_encoder)?;
    if let Some(mut g) = inverse_grads {
        g.scale(model.alpha);
        adam_step(&mut model.inverse_head, &g, opt_inverse)?;
    }
    if let Some(mut g) = contrast_grads {
        g.scale(model.beta);
        adam_step(&mut model.contrast_head, &g, opt_contrast)?;
    }
    Ok(terms)
}

/// Per-dimension variance of a latent code matrix; the collapse guard used
/// by the evaluation suites.
pub fn latent_variance(latents: &Array2<f64>) -> Array1<f64> {
    let n = latents.nrows().max(1) as f64;
    let mean = latents.mean_axis(Axis(0)).unwrap();
    let mut var = Array1::zeros(latents.ncols());
    for row in latents.rows() {
        for (j, &v) in row.iter().enumerate() {
            let d = v - mean[j];
            var[j] += d * d;
        }
    }
    var.mapv_inplace(|v| v / n);
    var
}

/// 1-nearest-neighbor classification accuracy of `queries` against a
/// labeled reference set, in latent space.
pub fn knn_accuracy(
    reference: &Array2<f64>,
    reference_labels: &[usize],
    queries: &Array2<f64>,
    query_labels: &[usize],
) -> f64 {
    assert_eq!(reference.nrows(), reference_labels.len());
    assert_eq!(queries.nrows(), query_labels.len());
    let mut correct = 0usize;
    for (q, &label) in queries.rows().into_iter().zip(query_labels) {
        let mut best = f64::INFINITY;
        let mut best_label = usize::MAX;
        for (r, &rl) in reference.rows().into_iter().zip(reference_labels) {
            let dist: f64 = q
                .iter()
                .zip(r.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist < best {
                best = dist;
                best_label = rl;
            }
        }
        if best_label == label {
            correct += 1;
        }
    }
    correct as f64 / query_labels.len().max(1) as f64
}
