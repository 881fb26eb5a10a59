//! Top-K sparse autoencoder.
//!
//! `z = TopK(ReLU(W_enc·h + b))`, `ĥ = Σ_i z_i·D_i`, with no decoder bias and
//! unit-norm dictionary rows. Training minimizes mean squared reconstruction
//! error plus an optional ℓ1 penalty with Adam.

mod adam;
mod checkpoint;
mod loss;
mod model;
mod train;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointManifest, DICTIONARY_FILE, ENC_BIAS_FILE, ENC_WEIGHT_FILE,
    MANIFEST_FILE,
};
pub use loss::{sae_loss, sae_loss_and_grad, Gradients, LossParts};
pub use model::{decode_with, normalize_rows, top_k_positive, SaeParams, SparseCode};
pub use train::{
    dead_feature_report, epoch_batches, train, train_from, write_loss_csv, LossRecord, SaeShape, TrainConfig,
    TrainOutcome,
};
