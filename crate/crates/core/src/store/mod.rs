//! Serialization of activation bundles and evaluation pairs, and the
//! dimension-set-caching similarity index.

mod bundle;
mod index;
mod pairs;

pub use bundle::{
    read_bundle, read_bundle_from, write_bundle, write_bundle_to, Bundle, BundleHeader, IndexMeta, PromptMode,
    BUNDLE_FORMAT, BUNDLE_VERSION, DEFAULT_TEMPLATE,
};
pub use index::{IndexEntry, IndexHit, SimilarityIndex, REPRESENTATION_TAG};
pub use pairs::{format_pairs_tsv, load_pairs_tsv, parse_pairs_tsv};
