//! Small from-scratch neural toolkit: dense layers, the 5→3→5 autoencoder
//! with its value head, multi-head graph attention, two losses, two
//! optimisers and a checksummed parameter file.
//!
//! Gradients are written out by hand. Every model exposes its parameters as
//! an ordered list of matrices and returns gradients in the same order.

mod autoencoder;
pub mod gat;
pub mod loss;
mod matrix;
pub mod optim;
pub mod persist;

use thiserror::Error;

pub use autoencoder::{score, AeTrace, Autoencoder, Dense, ScoreSample, ScoredAutoencoder, ValueHead, AE_INPUT, AE_LATENT};
pub use gat::{GatArch, GatNetwork, GatOutput, GraphSample};
pub use loss::LossKind;
pub use matrix::Matrix;
pub use optim::{OptimizerKind, OptimizerState};
pub use persist::ModelBundle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("adjacency is not symmetric at ({0}, {1})")]
    AsymmetricAdjacency(usize, usize),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("incompatible model file: {0}")]
    VersionMismatch(String),
    #[error("model file checksum mismatch")]
    ChecksumMismatch,
}

/// `(tanh(v) + 1) / 2`, mapping a raw score into `(0, 1)`.
#[inline]
pub fn squash(v: f64) -> f64 {
    (v.tanh() + 1.0) / 2.0
}

#[inline]
pub fn squash_grad(v: f64) -> f64 {
    let t = v.tanh();
    (1.0 - t * t) / 2.0
}

/// A model with hand-written gradients.
pub trait Trainable {
    type Sample;

    fn parameters(&self) -> Vec<&Matrix>;
    fn parameters_mut(&mut self) -> Vec<&mut Matrix>;

    /// Mean loss over `batch` and its gradient for every parameter.
    fn loss_and_grad(&self, batch: &[Self::Sample], kind: LossKind) -> Result<(f64, Vec<Matrix>), NeuralError>;
}

/// One optimiser update on `batch`. Returns the loss before the update.
pub fn train_step<M: Trainable>(model: &mut M, batch: &[M::Sample], kind: LossKind, opt: &mut OptimizerState) -> Result<f64, NeuralError> {
    let (loss, grads) = model.loss_and_grad(batch, kind)?;
    opt.apply(model.parameters_mut(), &grads);
    Ok(loss)
}
