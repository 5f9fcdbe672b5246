#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

//! # dnspn-core
//!
//! A fully-connected backbone with a differentiable decision forest attached
//! after every layer, trained end to end while a soft, log-shaped magnitude
//! mask prunes the backbone connections.
//!
//! Everything in this crate is pure computation over [`Matrix`] values and an
//! explicit [`RngState`]; it needs `alloc` but not `std`. File formats and the
//! command-line runner live in the `dnspn` crate.
//!
//! ## Layout
//! - [`matrix`], [`rng`]: dense `f64` arithmetic and the deterministic random source.
//! - [`network`]: dense ReLU backbone, forward trace, reverse-mode gradients.
//! - [`forest`]: sigmoid-routed soft trees with softmax leaf distributions.
//! - [`pruning`]: soft (log) masks, the three-band hard mask baseline, mask gradients.
//! - [`ensemble`]: mean fusion of per-layer head predictions.
//! - [`training`]: losses, Adam, the train step, `fit` and `predict`.
//! - [`data`]: synthetic Linear-k / Quadratic-k generators, splitting, scaling.
//! - [`metrics`]: accuracy, ROC-AUC, MSE.

extern crate alloc;

pub mod data;
pub mod ensemble;
pub mod error;
pub mod forest;
pub mod matrix;
pub mod metrics;
pub mod network;
pub mod pruning;
pub mod rng;
pub mod training;

pub use data::{Dataset, SyntheticKind, SyntheticSpec, Targets};
pub use error::{Error, Result};
pub use forest::{ForestConfig, ForestHead, HeadKind, RoutingProbs};
pub use matrix::Matrix;
pub use metrics::EvalReport;
pub use network::{Activation, DenseLayer, ForwardTrace, NetworkSpec};
pub use pruning::{LayerStats, PruneConfig, PruneMode, PrunedLayer};
pub use rng::RngState;
pub use training::{Model, ModelConfig, Task, TrainConfig, TrainHistory};
