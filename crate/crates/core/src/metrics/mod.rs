//! Concept statistics over sparse codes: energy, modality score, bridge
//! score, retrieval attribution, plus top-set overlap and export helpers.
//!
//! `M` below is the `c × c` Gram matrix of dictionary atoms, so that
//! `zᵀ M z′ = ⟨decode(z), decode(z′)⟩`.

mod density;
mod export;
mod scores;
mod sets;

pub use density::{modality_density_export, silverman_bandwidth, FALLBACK_BANDWIDTH};
pub use export::{write_stats_csv, write_two_column_csv, TopSetReport, STATS_HEADER};
pub use scores::{
    bridge_matrix, bridge_per_concept, concept_stats, dictionary_gram, energy, modality_score, retrieval_attribution,
    BridgeScores, CodeCollection, ConceptStats, PairWeighting, PairedCodes, DEFAULT_ACTIVITY_EPSILON,
};
pub use sets::{cumulative_energy_curve, fraction_count, jaccard, rank_by_score, top_fraction};
