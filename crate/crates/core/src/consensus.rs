//! Per-text semantic dimension selection from multilingual consensus.
//!
//! A dimension is part of the consensus set `I(x)` when it is strictly
//! positive in every pooled language. Consensus dimensions are ranked by
//! their mean activation over the pool and the top `k` form `S(x)`.
//!
//! Ranking is by mean descending with ties going to the lower index. When no
//! dimension survives the consensus, every dimension is ranked instead and
//! the outcome is flagged as a fallback.

use std::cmp::Ordering;

use crate::error::Result;
use crate::vector::{self, ActivationVector, Language, MultilingualRecord, SemanticDimensionSet, SimilarityConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusStats {
    pub m_used: usize,
    pub consensus_size: usize,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusOutcome {
    pub consensus_indices: Vec<usize>,
    pub mean_activation: ActivationVector,
    pub semantic_set: SemanticDimensionSet,
    pub stats: ConsensusStats,
}

/// Dimensions strictly positive under every language of `pool`, ascending.
pub fn consensus_indices(record: &MultilingualRecord, pool: &[Language]) -> Result<Vec<usize>> {
    let vectors = record.pooled(pool)?;
    Ok((0..record.dim())
        .filter(|&j| vectors.iter().all(|v| v.values()[j] > 0.0))
        .collect())
}

/// Mean activation over the pool; the same computation as [`vector::mean_vector`].
pub fn mean_activation(record: &MultilingualRecord, pool: &[Language]) -> Result<ActivationVector> {
    vector::mean_vector(record, pool)
}

/// Indices of the `k` largest `scores[j]` among `candidates`, returned ascending.
pub fn top_k_indices(scores: &[f32], candidates: impl IntoIterator<Item = usize>, k: usize) -> Vec<usize> {
    let mut ranked: Vec<usize> = candidates.into_iter().collect();
    ranked.sort_unstable_by(|&a, &b| rank_order(scores, a, b));
    ranked.truncate(k);
    ranked.sort_unstable();
    ranked
}

fn rank_order(scores: &[f32], a: usize, b: usize) -> Ordering {
    scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

pub fn semantic_set(record: &MultilingualRecord, config: &SimilarityConfig) -> Result<ConsensusOutcome> {
    config.validate()?;
    let pool = &config.language_pool;
    let consensus = consensus_indices(record, pool)?;
    let mean = mean_activation(record, pool)?;
    let fallback_used = consensus.is_empty();
    let indices = if fallback_used {
        top_k_indices(mean.values(), 0..record.dim(), config.k)
    } else {
        top_k_indices(mean.values(), consensus.iter().copied(), config.k)
    };
    let semantic_set = SemanticDimensionSet::new(indices, record.dim(), config.k, fallback_used)?;
    Ok(ConsensusOutcome {
        stats: ConsensusStats {
            m_used: record.pooled(pool)?.len(),
            consensus_size: consensus.len(),
            fallback_used,
        },
        consensus_indices: consensus,
        mean_activation: mean,
        semantic_set,
    })
}
