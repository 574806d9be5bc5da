//! Semantic textual similarity from transformer-internal activations.
//!
//! Each text arrives as one activation vector per language rendering. The
//! dimensions that are positive in every rendering form a consensus set;
//! the `k` of them with the highest mean activation become the text's
//! semantic dimension set `S(x)`. A pair is scored by cosine similarity
//! restricted to `S(x) ∪ S(y)`.
//!
//! ```
//! use dysem::{pair_similarity, ComponentKind, MultilingualRecord, SimilarityConfig, VectorMode};
//!
//! let c = ComponentKind::AttnCumulative;
//! let x = MultilingualRecord::from_values("x", "en", c, vec![
//!     ("en", vec![0.9, -0.3, 0.4, 0.1]),
//!     ("fr", vec![0.8, 0.2, 0.5, -0.1]),
//! ])?;
//! let y = MultilingualRecord::from_values("y", "en", c, vec![
//!     ("en", vec![1.1, 0.7, -0.2, 0.3]),
//!     ("fr", vec![0.7, 0.6, -0.4, 0.2]),
//! ])?;
//! let config = SimilarityConfig::new(2, VectorMode::Mean, c, vec!["en".into(), "fr".into()])?;
//! let sim = pair_similarity(&x, &y, &config)?;
//! assert_eq!(sim.joint_set_size, 3);
//! # Ok::<(), dysem::DysemError>(())
//! ```

pub mod cli;
pub mod consensus;
pub mod error;
pub mod eval;
pub mod similarity;
pub mod store;
pub mod synth;
pub mod tinylm;
pub mod vector;

pub use consensus::{consensus_indices, mean_activation, semantic_set, ConsensusOutcome};
pub use error::{DysemError, Result};
pub use eval::{evaluate, spearman_x100, EvalPair, EvalReport};
pub use similarity::{joint_set, pair_similarity, representation_vector, PairSimilarity, PreparedText};
pub use store::{read_bundle, write_bundle, BundleHeader, SimilarityIndex};
pub use vector::{
    cosine, mean_vector, restrict, ActivationVector, ComponentKind, Language, MultilingualRecord,
    SemanticDimensionSet, SimilarityConfig, VectorMode,
};
