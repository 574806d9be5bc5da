//! Pair scoring over the joint semantic set `U(x, y) = S(x) ∪ S(y)`.
//!
//! The representation vector of each text is built over all `d` dimensions
//! and restricted to `U` afterwards, which is what lets [`PreparedText`] be
//! cached and reused across pairs.

use crate::consensus;
use crate::error::{DysemError, Result};
use crate::vector::{self, ActivationVector, MultilingualRecord, SemanticDimensionSet, SimilarityConfig, VectorMode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSimilarity {
    pub score: f64,
    pub joint_set_size: usize,
    pub fallback_flags: (bool, bool),
}

/// Sorted union of two dimension sets.
pub fn joint_set(sx: &SemanticDimensionSet, sy: &SemanticDimensionSet) -> Result<Vec<usize>> {
    if sx.dim() != sy.dim() {
        return Err(DysemError::DimMismatch {
            expected: sx.dim(),
            found: sy.dim(),
        });
    }
    let (a, b) = (sx.indices(), sy.indices());
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    Ok(out)
}

/// The vector a text is scored with: its source rendering or the pool mean.
pub fn representation_vector(record: &MultilingualRecord, config: &SimilarityConfig) -> Result<ActivationVector> {
    match config.vector_mode {
        VectorMode::Source => Ok(record.source().clone()),
        VectorMode::Mean => vector::mean_vector(record, &config.language_pool),
    }
}

/// Everything a text contributes to pair scoring, computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedText {
    pub text_id: String,
    pub representation: ActivationVector,
    pub semantic_set: SemanticDimensionSet,
}

impl PreparedText {
    pub fn new(record: &MultilingualRecord, config: &SimilarityConfig) -> Result<Self> {
        check_component(record, config)?;
        if config.vector_mode == VectorMode::Mean {
            // the whole pool must be present even if only the mean is used
            record.pooled(&config.language_pool)?;
        }
        let outcome = consensus::semantic_set(record, config)?;
        Ok(PreparedText {
            text_id: record.text_id().to_string(),
            representation: representation_vector(record, config)?,
            semantic_set: outcome.semantic_set,
        })
    }

    pub fn from_parts(
        text_id: impl Into<String>,
        representation: ActivationVector,
        semantic_set: SemanticDimensionSet,
    ) -> Result<Self> {
        if semantic_set.dim() != representation.dim() {
            return Err(DysemError::DimMismatch {
                expected: representation.dim(),
                found: semantic_set.dim(),
            });
        }
        Ok(PreparedText {
            text_id: text_id.into(),
            representation,
            semantic_set,
        })
    }

    pub fn dim(&self) -> usize {
        self.representation.dim()
    }
}

/// Restricted cosine between two prepared texts.
pub fn score_prepared(x: &PreparedText, y: &PreparedText) -> Result<PairSimilarity> {
    if x.representation.component() != y.representation.component() {
        return Err(DysemError::ComponentMismatch {
            expected: x.representation.component().to_string(),
            found: y.representation.component().to_string(),
        });
    }
    let joint = joint_set(&x.semantic_set, &y.semantic_set)?;
    let vx = vector::restrict(x.representation.values(), &joint)?;
    let vy = vector::restrict(y.representation.values(), &joint)?;
    Ok(PairSimilarity {
        score: vector::cosine(&vx, &vy)?,
        joint_set_size: joint.len(),
        fallback_flags: (x.semantic_set.fallback_used(), y.semantic_set.fallback_used()),
    })
}

pub fn pair_similarity(
    rx: &MultilingualRecord,
    ry: &MultilingualRecord,
    config: &SimilarityConfig,
) -> Result<PairSimilarity> {
    if rx.dim() != ry.dim() {
        return Err(DysemError::DimMismatch {
            expected: rx.dim(),
            found: ry.dim(),
        });
    }
    let x = PreparedText::new(rx, config)?;
    let y = PreparedText::new(ry, config)?;
    score_prepared(&x, &y)
}

pub(crate) fn check_component(record: &MultilingualRecord, config: &SimilarityConfig) -> Result<()> {
    if record.component() != config.component {
        return Err(DysemError::ComponentMismatch {
            expected: config.component.to_string(),
            found: record.component().to_string(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::ComponentKind;

    fn set(idx: &[usize], dim: usize) -> SemanticDimensionSet {
        SemanticDimensionSet::new(idx.to_vec(), dim, idx.len().max(1), false).unwrap()
    }

    #[test]
    fn union_examples() {
        assert_eq!(joint_set(&set(&[1, 3, 5], 8), &set(&[2, 3, 4], 8)).unwrap(), vec![1, 2, 3, 4, 5]);
        let s = set(&[0, 4, 6], 8);
        assert_eq!(joint_set(&s, &s).unwrap(), s.indices());
        let a: Vec<usize> = (0..1024).collect();
        let b: Vec<usize> = (1024..2048).collect();
        assert_eq!(joint_set(&set(&a, 4096), &set(&b, 4096)).unwrap().len(), 2048);
        assert!(matches!(
            joint_set(&set(&[1], 4), &set(&[1], 5)),
            Err(DysemError::DimMismatch { .. })
        ));
    }

    fn record(id: &str, entries: Vec<(&str, Vec<f32>)>) -> MultilingualRecord {
        MultilingualRecord::from_values(id, "en", ComponentKind::AttnCumulative, entries).unwrap()
    }

    fn config(k: usize, mode: VectorMode, pool: &[&str]) -> SimilarityConfig {
        SimilarityConfig::new(k, mode, ComponentKind::AttnCumulative, pool.iter().map(|s| s.to_string()).collect())
            .unwrap()
    }

    #[test]
    fn self_pair_scores_one() {
        let r = record("a", vec![("en", vec![0.3, -0.2, 1.5, 0.7]), ("fr", vec![0.1, 0.4, 1.0, 0.2])]);
        let c = config(2, VectorMode::Mean, &["en", "fr"]);
        let s = pair_similarity(&r, &r, &c).unwrap();
        assert!((s.score - 1.0).abs() < 1e-12);
        assert_eq!(s.joint_set_size, 2);
    }

    #[test]
    fn full_budget_matches_full_cosine() {
        let x = record("x", vec![("en", vec![0.3, 0.2, 1.5, 0.7])]);
        let y = record("y", vec![("en", vec![1.1, 0.4, 0.2, 0.9])]);
        let c = config(4, VectorMode::Source, &["en"]);
        let s = pair_similarity(&x, &y, &c).unwrap();
        assert_eq!(s.joint_set_size, 4);
        assert_eq!(s.score, vector::cosine(x.source().values(), y.source().values()).unwrap());
    }

    #[test]
    fn source_and_singleton_mean_agree() {
        let r = record("a", vec![("en", vec![0.3, -0.2, 1.5]), ("fr", vec![0.1, 0.4, 1.0])]);
        let src = representation_vector(&r, &config(2, VectorMode::Source, &["en"])).unwrap();
        let mean = representation_vector(&r, &config(2, VectorMode::Mean, &["en"])).unwrap();
        assert_eq!(src, mean);
        assert_eq!(&src, r.source());
    }

    #[test]
    fn mixed_components_are_rejected() {
        let x = record("x", vec![("en", vec![1.0, 2.0])]);
        let y = x.retag(ComponentKind::Hidden);
        let c = config(1, VectorMode::Source, &["en"]);
        assert!(matches!(pair_similarity(&x, &y, &c), Err(DysemError::ComponentMismatch { .. })));
    }

    #[test]
    fn zero_restricted_vectors_score_zero() {
        let x = record("x", vec![("en", vec![-1.0, 0.0, 0.0])]);
        let y = record("y", vec![("en", vec![-2.0, 0.0, 0.0])]);
        // both fall back to dims {1, 2}, where both vectors are zero
        let s = pair_similarity(&x, &y, &config(2, VectorMode::Source, &["en"])).unwrap();
        assert_eq!(s.score, 0.0);
        assert_eq!(s.fallback_flags, (true, true));
    }
}
