//! Markov state abstractions: exact analysis on tabular MDPs and
//! representation learning from pixel observations.
//!
//! The crate has two halves that meet in the middle:
//!
//! * **Exact side** — [`mdp`] holds tabular MDPs, abstractions, policies, and
//!   the belief / abstract-dynamics quantities they induce; [`check`] turns
//!   those into decision procedures (Markov abstraction, inverse-model and
//!   density-ratio conditions, kinematic inseparability) plus builders for
//!   the reference counterexample MDPs and randomized test instances.
//! * **Learned side** — [`nn`] is a minimal dense-network training stack
//!   (reverse-mode gradients, Adam, the usual losses); [`learn`] implements
//!   the inverse-model, contrastive density-ratio, and smoothness objectives
//!   along with the autoencoder / pixel-prediction baselines and the offline
//!   pretraining loop; [`gridworld`] renders the visual navigation domain;
//!   [`agent`] is a DQN that runs on frozen encoders, expert features, or raw
//!   pixels.
//!
//! [`exp`] drives experiments end to end (dataset collection, pretraining,
//! RL training, aggregation) and backs the command-line interface.

pub mod agent;
pub mod check;
pub mod exp;
pub mod gridworld;
pub mod learn;
pub mod mdp;
pub mod nn;
