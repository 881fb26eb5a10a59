//! Sparse-autoencoder concept analysis for multimodal embedding models.
//!
//! Activation shards feed a Top-K SAE; its codes drive per-concept
//! statistics (energy, modality score, bridge score, retrieval attribution),
//! the attribution picks atoms whose span is projected out of embeddings,
//! and a cosine retrieval harness measures the effect. [`synth`] generates
//! planted-truth data for all of it.

pub mod error;
pub mod intervention;
pub mod metrics;
pub mod retrieval;
pub mod sae;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
pub use intervention::{
    build_removal_subspace, load_subspace, remove_and_normalize, save_subspace, RankPolicy, RemovalSubspace,
    DEFAULT_REMOVAL_FRACTION,
};
pub use metrics::{concept_stats, ConceptStats, PairWeighting};
pub use ndarray;
pub use retrieval::{cosine_rank, recall_at_k, run_task, RetrievalReport, RetrievalTask, TaskSpec};
pub use sae::{SaeParams, SparseCode, TrainConfig};
pub use store::{ActivationShard, Modality, PooledEmbedding, PoolingStrategy, TokenMeta, TokenRole};
pub use synth::{gen_paired_corpus, SynthSpec};

/// Derives an independent stream seed from a master seed and a stage label.
///
/// The label is hashed with 64-bit FNV-1a, xored into the master seed and
/// finalized with SplitMix64.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = (seed ^ h).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
