//! Shared domain types and the elementary vector arithmetic used by every
//! other module.
//!
//! Activation values are stored at binary32 precision. Every reduction
//! (dot products, norms, means) accumulates in `f64`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DysemError, Result};

/// Language tag such as `en` or `zh`.
pub type Language = String;

/// Which internal state of the model a vector was read from.
///
/// Layer indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ComponentKind {
    /// Final hidden state `h^L`.
    Hidden,
    /// Sum of every layer's attention-block residual contribution.
    AttnCumulative,
    /// Sum of every layer's FFN-block residual contribution.
    FfnCumulative,
    /// Attention-block contribution of a single layer.
    AttnLayer(u32),
}

impl ComponentKind {
    /// Name used in bundle headers (the layer, if any, travels separately).
    pub fn tag(&self) -> &'static str {
        match self {
            ComponentKind::Hidden => "hidden",
            ComponentKind::AttnCumulative => "attn_cum",
            ComponentKind::FfnCumulative => "ffn_cum",
            ComponentKind::AttnLayer(_) => "attn_layer",
        }
    }

    pub fn layer(&self) -> Option<u32> {
        match self {
            ComponentKind::AttnLayer(l) => Some(*l),
            _ => None,
        }
    }

    /// Rebuilds a kind from its header tag and optional layer.
    pub fn from_tag(tag: &str, layer: Option<u32>) -> Result<Self> {
        match (tag, layer) {
            ("attn_layer", Some(l)) if l >= 1 => Ok(ComponentKind::AttnLayer(l)),
            ("attn_layer", Some(_)) => Err(DysemError::InvalidConfig(
                "attn_layer layer index must be >= 1".into(),
            )),
            ("attn_layer", None) => Err(DysemError::InvalidConfig(
                "attn_layer requires a layer index".into(),
            )),
            ("hidden", _) => Ok(ComponentKind::Hidden),
            ("attn_cum", _) => Ok(ComponentKind::AttnCumulative),
            ("ffn_cum", _) => Ok(ComponentKind::FfnCumulative),
            (other, _) => Err(DysemError::InvalidConfig(format!(
                "unknown component `{other}`"
            ))),
        }
    }

    /// Checks `1 <= layer <= layers` for layer-specific kinds.
    pub fn validate_layers(&self, layers: usize) -> Result<()> {
        match self {
            ComponentKind::AttnLayer(l) if *l == 0 || *l as usize > layers => {
                Err(DysemError::InvalidConfig(format!(
                    "layer {l} outside 1..={layers}"
                )))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComponentKind::AttnLayer(l) => write!(f, "attn_layer:{l}"),
            other => f.write_str(other.tag()),
        }
    }
}

impl FromStr for ComponentKind {
    type Err = DysemError;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some((tag, layer)) => {
                let layer = layer.parse::<u32>().map_err(|_| {
                    DysemError::InvalidConfig(format!("bad layer in component `{s}`"))
                })?;
                if tag != "attn_layer" {
                    return Err(DysemError::InvalidConfig(format!(
                        "only attn_layer takes a layer, got `{s}`"
                    )));
                }
                ComponentKind::from_tag(tag, Some(layer))
            }
            None => ComponentKind::from_tag(s, None),
        }
    }
}

impl Serialize for ComponentKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ComponentKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One `d`-dimensional internal-state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationVector {
    values: Vec<f32>,
    component: ComponentKind,
}

impl ActivationVector {
    pub fn new(values: Vec<f32>, component: ComponentKind) -> Result<Self> {
        if values.is_empty() {
            return Err(DysemError::InvalidVector("vector must have dim >= 1".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DysemError::InvalidVector(format!(
                "non-finite value at position {pos}"
            )));
        }
        Ok(ActivationVector { values, component })
    }

    /// Rounds `f64` values to binary32 before construction.
    pub fn from_f64(values: &[f64], component: ComponentKind) -> Result<Self> {
        ActivationVector::new(values.iter().map(|&v| v as f32).collect(), component)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn component(&self) -> ComponentKind {
        self.component
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Same values under a different component tag.
    pub fn retag(&self, component: ComponentKind) -> ActivationVector {
        ActivationVector {
            values: self.values.clone(),
            component,
        }
    }
}

/// Every language rendering of one text, `E(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilingualRecord {
    text_id: String,
    source_language: Language,
    entries: BTreeMap<Language, ActivationVector>,
}

impl MultilingualRecord {
    pub fn new(
        text_id: impl Into<String>,
        source_language: impl Into<Language>,
        entries: BTreeMap<Language, ActivationVector>,
    ) -> Result<Self> {
        let text_id = text_id.into();
        let source_language = source_language.into();
        let mut iter = entries.values();
        let first = iter
            .next()
            .ok_or_else(|| DysemError::InvalidRecord(format!("record `{text_id}` has no entries")))?;
        for v in iter {
            if v.dim() != first.dim() {
                return Err(DysemError::DimMismatch {
                    expected: first.dim(),
                    found: v.dim(),
                });
            }
            if v.component() != first.component() {
                return Err(DysemError::ComponentMismatch {
                    expected: first.component().to_string(),
                    found: v.component().to_string(),
                });
            }
        }
        if !entries.contains_key(&source_language) {
            return Err(DysemError::MissingLanguage {
                text_id,
                language: source_language,
            });
        }
        Ok(MultilingualRecord {
            text_id,
            source_language,
            entries,
        })
    }

    /// Convenience constructor from `(language, values)` pairs.
    pub fn from_values<I, L>(
        text_id: impl Into<String>,
        source_language: impl Into<Language>,
        component: ComponentKind,
        entries: I,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = (L, Vec<f32>)>,
        L: Into<Language>,
    {
        let mut map = BTreeMap::new();
        for (lang, values) in entries {
            map.insert(lang.into(), ActivationVector::new(values, component)?);
        }
        MultilingualRecord::new(text_id, source_language, map)
    }

    pub fn text_id(&self) -> &str {
        &self.text_id
    }

    pub fn source_language(&self) -> &str {
        &self.source_language
    }

    pub fn entries(&self) -> &BTreeMap<Language, ActivationVector> {
        &self.entries
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn dim(&self) -> usize {
        self.source().dim()
    }

    pub fn component(&self) -> ComponentKind {
        self.source().component()
    }

    pub fn source(&self) -> &ActivationVector {
        &self.entries[&self.source_language]
    }

    pub fn get(&self, language: &str) -> Result<&ActivationVector> {
        self.entries
            .get(language)
            .ok_or_else(|| DysemError::MissingLanguage {
                text_id: self.text_id.clone(),
                language: language.to_string(),
            })
    }

    /// Resolves a language pool to this record's vectors, in tag order.
    ///
    /// Duplicates in `pool` collapse, so the result is independent of pool order.
    pub fn pooled(&self, pool: &[Language]) -> Result<Vec<&ActivationVector>> {
        if pool.is_empty() {
            return Err(DysemError::InvalidConfig("language pool is empty".into()));
        }
        let tags: BTreeSet<&str> = pool.iter().map(String::as_str).collect();
        tags.into_iter().map(|l| self.get(l)).collect()
    }

    /// Same record with every vector tagged as `component`.
    pub fn retag(&self, component: ComponentKind) -> MultilingualRecord {
        MultilingualRecord {
            text_id: self.text_id.clone(),
            source_language: self.source_language.clone(),
            entries: self
                .entries
                .iter()
                .map(|(l, v)| (l.clone(), v.retag(component)))
                .collect(),
        }
    }

    /// Scales every entry by `factor`; used by invariance tests and fixtures.
    pub fn scaled(&self, factor: f32) -> Result<MultilingualRecord> {
        let mut entries = BTreeMap::new();
        for (l, v) in &self.entries {
            let values = v.values().iter().map(|x| x * factor).collect();
            entries.insert(l.clone(), ActivationVector::new(values, v.component())?);
        }
        MultilingualRecord::new(self.text_id.clone(), self.source_language.clone(), entries)
    }
}

/// Selected dimensions `S(x)` of one text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticDimensionSet {
    indices: Vec<usize>,
    dim: usize,
    k_budget: usize,
    fallback_used: bool,
}

impl SemanticDimensionSet {
    /// Indices may arrive in any order; they are sorted and must be unique.
    pub fn new(mut indices: Vec<usize>, dim: usize, k_budget: usize, fallback_used: bool) -> Result<Self> {
        if k_budget == 0 {
            return Err(DysemError::InvalidConfig("k budget must be >= 1".into()));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(DysemError::InvalidRecord("duplicate index in dimension set".into()));
        }
        if let Some(&last) = indices.last() {
            if last >= dim {
                return Err(DysemError::IndexOutOfRange { index: last, dim });
            }
        }
        if indices.len() > k_budget {
            return Err(DysemError::InvalidRecord(format!(
                "{} indices exceed budget {k_budget}",
                indices.len()
            )));
        }
        Ok(SemanticDimensionSet {
            indices,
            dim,
            k_budget,
            fallback_used,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Dimension of the vectors the set was selected from.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k_budget(&self) -> usize {
        self.k_budget
    }

    pub fn fallback_used(&self) -> bool {
        self.fallback_used
    }
}

/// How the representation vector of a text is formed from its renderings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VectorMode {
    /// The source-language rendering.
    Source,
    /// Elementwise mean over the language pool.
    Mean,
}

impl fmt::Display for VectorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VectorMode::Source => "source",
            VectorMode::Mean => "mean",
        })
    }
}

impl FromStr for VectorMode {
    type Err = DysemError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(VectorMode::Source),
            "mean" => Ok(VectorMode::Mean),
            other => Err(DysemError::InvalidConfig(format!(
                "unknown vector mode `{other}` (expected source|mean)"
            ))),
        }
    }
}

pub const DEFAULT_K: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub k: usize,
    pub vector_mode: VectorMode,
    pub component: ComponentKind,
    pub language_pool: Vec<Language>,
    /// Strict activation threshold; only `0.0` is supported.
    pub activation_threshold: f64,
}

impl SimilarityConfig {
    pub fn new(
        k: usize,
        vector_mode: VectorMode,
        component: ComponentKind,
        language_pool: Vec<Language>,
    ) -> Result<Self> {
        let config = SimilarityConfig {
            k,
            vector_mode,
            component,
            language_pool,
            activation_threshold: 0.0,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(DysemError::InvalidConfig("k must be >= 1".into()));
        }
        if self.language_pool.is_empty() {
            return Err(DysemError::InvalidConfig("language pool is empty".into()));
        }
        let unique: BTreeSet<&String> = self.language_pool.iter().collect();
        if unique.len() != self.language_pool.len() {
            return Err(DysemError::InvalidConfig(
                "language pool contains duplicates".into(),
            ));
        }
        if self.activation_threshold != 0.0 {
            return Err(DysemError::InvalidConfig(
                "activation threshold is fixed at 0.0".into(),
            ));
        }
        Ok(())
    }

    pub fn with_k(&self, k: usize) -> Self {
        SimilarityConfig { k, ..self.clone() }
    }

    pub fn with_component(&self, component: ComponentKind) -> Self {
        SimilarityConfig {
            component,
            ..self.clone()
        }
    }

    pub fn with_pool(&self, language_pool: Vec<Language>) -> Self {
        SimilarityConfig {
            language_pool,
            ..self.clone()
        }
    }
}

/// Gathers `values[idx[t]]` for every `t`.
pub fn restrict<T: Copy>(values: &[T], idx: &[usize]) -> Result<Vec<T>> {
    idx.iter()
        .map(|&i| {
            values.get(i).copied().ok_or(DysemError::IndexOutOfRange {
                index: i,
                dim: values.len(),
            })
        })
        .collect()
}

pub fn dot<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x.into() * y.into()).sum()
}

pub fn norm<T: Copy + Into<f64>>(a: &[T]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(DysemError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(DysemError::DegenerateInput("cosine of empty vectors".into()));
    }
    let ab = dot(a, b);
    let aa = dot(a, a);
    let bb = dot(b, b);
    if aa == 0.0 || bb == 0.0 {
        return Ok(0.0);
    }
    Ok((ab / (aa * bb).sqrt()).clamp(-1.0, 1.0))
}

/// Elementwise mean of the record's vectors over `pool`.
pub fn mean_vector(record: &MultilingualRecord, pool: &[Language]) -> Result<ActivationVector> {
    let vectors = record.pooled(pool)?;
    let dim = record.dim();
    let mut acc = vec![0.0f64; dim];
    for v in &vectors {
        for (a, &x) in acc.iter_mut().zip(v.values()) {
            *a += f64::from(x);
        }
    }
    let m = vectors.len() as f64;
    let values: Vec<f32> = acc.iter().map(|s| (s / m) as f32).collect();
    ActivationVector::new(values, record.component())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(entries: Vec<(&str, Vec<f32>)>) -> MultilingualRecord {
        let src = entries[0].0.to_string();
        MultilingualRecord::from_values("t", src, ComponentKind::AttnCumulative, entries).unwrap()
    }

    #[test]
    fn restrict_gathers_in_index_order() {
        let v = [3.0f32, 1.0, 4.0, 1.0, 5.0];
        assert_eq!(restrict(&v, &[0, 2, 4]).unwrap(), vec![3.0, 4.0, 5.0]);
        assert_eq!(restrict(&v, &[0, 1, 2, 3, 4]).unwrap(), v.to_vec());
    }

    #[test]
    fn restrict_out_of_range() {
        let err = restrict(&[1.0f32, 2.0], &[5]).unwrap_err();
        assert!(matches!(err, DysemError::IndexOutOfRange { index: 5, dim: 2 }));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0f32, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0f32, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[0.0f32, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            cosine(&[1.0f32], &[1.0, 2.0]),
            Err(DysemError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn mean_of_singleton_pool_is_the_vector() {
        let r = rec(vec![("en", vec![0.1, -0.7, 3.3]), ("fr", vec![1.0, 1.0, 1.0])]);
        let m = mean_vector(&r, &["en".to_string()]).unwrap();
        assert_eq!(m.values(), r.source().values());
    }

    #[test]
    fn mean_of_two() {
        let r = rec(vec![("en", vec![2.0, 0.0]), ("fr", vec![0.0, 2.0])]);
        let m = mean_vector(&r, &["en".into(), "fr".into()]).unwrap();
        assert_eq!(m.values(), &[1.0, 1.0]);
    }

    #[test]
    fn mean_reports_missing_language() {
        let r = rec(vec![("en", vec![1.0])]);
        match mean_vector(&r, &["de".into()]) {
            Err(DysemError::MissingLanguage { language, .. }) => assert_eq!(language, "de"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn record_invariants() {
        let c = ComponentKind::Hidden;
        assert!(MultilingualRecord::from_values("t", "en", c, vec![("fr", vec![1.0])]).is_err());
        assert!(MultilingualRecord::from_values("t", "en", c, Vec::<(&str, Vec<f32>)>::new()).is_err());
        assert!(
            MultilingualRecord::from_values("t", "en", c, vec![("en", vec![1.0]), ("fr", vec![1.0, 2.0])])
                .is_err()
        );
        assert!(ActivationVector::new(vec![f32::NAN], c).is_err());
    }

    #[test]
    fn component_strings_round_trip() {
        for c in [
            ComponentKind::Hidden,
            ComponentKind::AttnCumulative,
            ComponentKind::FfnCumulative,
            ComponentKind::AttnLayer(7),
        ] {
            assert_eq!(c.to_string().parse::<ComponentKind>().unwrap(), c);
        }
        assert!("attn_layer:0".parse::<ComponentKind>().is_err());
        assert!("hidden:2".parse::<ComponentKind>().is_err());
        assert!(ComponentKind::AttnLayer(5).validate_layers(4).is_err());
        assert!(ComponentKind::AttnLayer(4).validate_layers(4).is_ok());
    }

    #[test]
    fn config_validation() {
        let c = ComponentKind::AttnCumulative;
        assert!(SimilarityConfig::new(0, VectorMode::Mean, c, vec!["en".into()]).is_err());
        assert!(SimilarityConfig::new(4, VectorMode::Mean, c, vec![]).is_err());
        assert!(SimilarityConfig::new(4, VectorMode::Mean, c, vec!["en".into(), "en".into()]).is_err());
        assert!(SimilarityConfig::new(4, VectorMode::Mean, c, vec!["en".into()]).is_ok());
    }
}
