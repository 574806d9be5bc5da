//! Exact similarity index that caches each entry's representation vector
//! and semantic dimension set.
//!
//! A query computes its own `S(x)` once and then, for every entry, forms the
//! joint set with the cached `S(y)` and scores the restricted vectors. Entries
//! are never re-derived from their renderings at query time.
//!
//! On disk an index is a bundle (one `_repr` rendering per entry, header
//! carrying the similarity settings) plus a sidecar JSONL of semantic sets:
//!
//! ```text
//! {"fallback_used":false,"indices":[3,17,40],"k_budget":1024,"text_id":"s1"}
//! ```

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bundle::{read_bundle, write_bundle, BundleHeader, IndexMeta};
use crate::error::{DysemError, Result};
use crate::similarity::{self, PreparedText};
use crate::vector::{MultilingualRecord, SemanticDimensionSet, SimilarityConfig};

/// Language tag under which persisted representation vectors are stored.
pub const REPRESENTATION_TAG: &str = "_repr";

/// An index entry: cached representation and `S(y)`.
pub type IndexEntry = PreparedText;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexHit {
    pub text_id: String,
    pub score: f64,
    pub joint_set_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SetLine {
    text_id: String,
    indices: Vec<usize>,
    k_budget: usize,
    fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityIndex {
    config: SimilarityConfig,
    dim: Option<usize>,
    entries: BTreeMap<String, IndexEntry>,
}

impl SimilarityIndex {
    pub fn new(config: SimilarityConfig) -> Result<Self> {
        config.validate()?;
        Ok(SimilarityIndex {
            config,
            dim: None,
            entries: BTreeMap::new(),
        })
    }

    pub fn build(records: &[MultilingualRecord], config: &SimilarityConfig) -> Result<Self> {
        let mut index = SimilarityIndex::new(config.clone())?;
        let prepared: Vec<IndexEntry> = records
            .par_iter()
            .map(|r| PreparedText::new(r, config))
            .collect::<Result<_>>()?;
        for entry in prepared {
            index.add_entry(entry)?;
        }
        Ok(index)
    }

    pub fn insert(&mut self, record: &MultilingualRecord) -> Result<()> {
        let entry = PreparedText::new(record, &self.config)?;
        self.add_entry(entry)
    }

    fn add_entry(&mut self, entry: IndexEntry) -> Result<()> {
        match self.dim {
            Some(d) if d != entry.dim() => {
                return Err(DysemError::DimMismatch {
                    expected: d,
                    found: entry.dim(),
                })
            }
            _ => self.dim = Some(entry.dim()),
        }
        if self.entries.contains_key(&entry.text_id) {
            return Err(DysemError::DuplicateTextId(entry.text_id));
        }
        self.entries.insert(entry.text_id.clone(), entry);
        Ok(())
    }

    pub fn config(&self) -> &SimilarityConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &IndexEntry> {
        self.entries.values()
    }

    /// Top `top_n` entries by score, ties broken by ascending text id.
    pub fn query(&self, query: &MultilingualRecord, config: &SimilarityConfig, top_n: usize) -> Result<Vec<IndexHit>> {
        if config != &self.config {
            return Err(DysemError::ConfigMismatch(
                "query settings differ from the index settings".into(),
            ));
        }
        if self.entries.is_empty() {
            return Err(DysemError::EmptyIndex);
        }
        if let Some(d) = self.dim.filter(|&d| d != query.dim()) {
            return Err(DysemError::DimMismatch {
                expected: d,
                found: query.dim(),
            });
        }
        let q = PreparedText::new(query, config)?;
        self.query_prepared(&q, top_n)
    }

    pub fn query_prepared(&self, q: &PreparedText, top_n: usize) -> Result<Vec<IndexHit>> {
        let entries: Vec<&IndexEntry> = self.entries.values().collect();
        let mut hits: Vec<IndexHit> = entries
            .par_iter()
            .map(|e| {
                let s = similarity::score_prepared(q, e)?;
                Ok(IndexHit {
                    text_id: e.text_id.clone(),
                    score: s.score,
                    joint_set_size: s.joint_set_size,
                })
            })
            .collect::<Result<_>>()?;
        hits.sort_by(rank_hits);
        hits.truncate(top_n);
        Ok(hits)
    }

    /// Writes the index bundle and semantic-set sidecar. `provenance`
    /// supplies model, prompt mode and template for the header.
    pub fn save(&self, bundle_path: impl AsRef<Path>, sets_path: impl AsRef<Path>, provenance: &BundleHeader) -> Result<()> {
        let dim = self.dim.unwrap_or(provenance.dim);
        let header = BundleHeader {
            dim,
            component: self.config.component,
            layer: match self.config.component.layer() {
                Some(l) => Some(l),
                None => provenance.layer.filter(|_| provenance.component == self.config.component),
            },
            index: Some(IndexMeta {
                k: self.config.k,
                vector_mode: self.config.vector_mode,
                language_pool: self.config.language_pool.clone(),
            }),
            ..provenance.clone()
        };
        let records: Vec<MultilingualRecord> = self
            .entries
            .values()
            .map(|e| {
                let entries = BTreeMap::from([(REPRESENTATION_TAG.to_string(), e.representation.clone())]);
                MultilingualRecord::new(e.text_id.clone(), REPRESENTATION_TAG, entries)
            })
            .collect::<Result<_>>()?;
        write_bundle(bundle_path, &header, &records)?;

        let sets_path = sets_path.as_ref();
        let file = File::create(sets_path).map_err(|e| DysemError::io(sets_path, e))?;
        let mut w = BufWriter::new(file);
        for e in self.entries.values() {
            let line = SetLine {
                text_id: e.text_id.clone(),
                indices: e.semantic_set.indices().to_vec(),
                k_budget: e.semantic_set.k_budget(),
                fallback_used: e.semantic_set.fallback_used(),
            };
            let text = serde_json::to_string(&line).expect("set line serializes");
            writeln!(w, "{text}").map_err(|e| DysemError::io(sets_path, e))?;
        }
        w.flush().map_err(|e| DysemError::io(sets_path, e))
    }

    /// Reads an index written by [`SimilarityIndex::save`].
    pub fn load(bundle_path: impl AsRef<Path>, sets_path: impl AsRef<Path>) -> Result<(Self, BundleHeader)> {
        let bundle = read_bundle(bundle_path)?;
        let meta = bundle
            .header
            .index
            .clone()
            .ok_or_else(|| DysemError::schema(1, "index", "bundle is not an index"))?;
        let config = SimilarityConfig {
            k: meta.k,
            vector_mode: meta.vector_mode,
            component: bundle.header.component,
            language_pool: meta.language_pool,
            activation_threshold: 0.0,
        };
        config.validate()?;

        let sets_path = sets_path.as_ref();
        let text = fs::read_to_string(sets_path).map_err(|e| DysemError::io(sets_path, e))?;
        let mut sets: BTreeMap<String, SemanticDimensionSet> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: SetLine =
                serde_json::from_str(line).map_err(|e| DysemError::schema(i + 1, "line", e.to_string()))?;
            if parsed.k_budget != config.k {
                return Err(DysemError::schema(i + 1, "k_budget", format!("expected {}", config.k)));
            }
            let set = SemanticDimensionSet::new(parsed.indices, bundle.header.dim, parsed.k_budget, parsed.fallback_used)
                .map_err(|e| DysemError::schema(i + 1, "indices", e.to_string()))?;
            if sets.insert(parsed.text_id.clone(), set).is_some() {
                return Err(DysemError::DuplicateTextId(parsed.text_id));
            }
        }

        let mut index = SimilarityIndex::new(config)?;
        let mut seen = BTreeSet::new();
        for r in bundle.records {
            let set = sets
                .remove(r.text_id())
                .ok_or_else(|| DysemError::MissingRecord(format!("semantic set for `{}`", r.text_id())))?;
            seen.insert(r.text_id().to_string());
            let rep = r.get(REPRESENTATION_TAG)?.clone();
            index.add_entry(PreparedText::from_parts(r.text_id(), rep, set)?)?;
        }
        if let Some(extra) = sets.keys().next() {
            return Err(DysemError::MissingRecord(format!("representation for `{extra}`")));
        }
        if index.dim.is_none() {
            index.dim = Some(bundle.header.dim);
        }
        Ok((index, bundle.header))
    }
}

fn rank_hits(a: &IndexHit, b: &IndexHit) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.text_id.cmp(&b.text_id))
}
