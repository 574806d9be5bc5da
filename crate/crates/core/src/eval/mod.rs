//! STS-style evaluation: score every pair, correlate with gold by Spearman
//! (x100), and report dimension statistics.
//!
//! Pairs are put into a canonical order before scoring and aggregation, so a
//! report does not depend on the order pairs were supplied in, nor on how
//! pair scoring was scheduled across threads.

mod report;
mod spearman;
mod sweep;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{DysemError, Result};
use crate::similarity::{self, PreparedText};
use crate::vector::{self, ActivationVector, Language, MultilingualRecord, SimilarityConfig, VectorMode};

pub use report::{to_canonical_json, EvalReport, Method, RandomDims};
pub use spearman::{average_ranks, pearson, spearman_x100};
pub use sweep::{
    sweep_components, sweep_k, sweep_languages, sweep_layers, LanguageSweep, LayerRow, LayerStrategy,
};

/// Records keyed by text id.
pub type RecordSet = BTreeMap<String, MultilingualRecord>;

/// Builds a [`RecordSet`], rejecting repeated text ids.
pub fn record_set(records: impl IntoIterator<Item = MultilingualRecord>) -> Result<RecordSet> {
    let mut set = RecordSet::new();
    for r in records {
        let id = r.text_id().to_string();
        if set.insert(id.clone(), r).is_some() {
            return Err(DysemError::DuplicateTextId(id));
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub pair_id: String,
    pub text_id_a: String,
    pub text_id_b: String,
    pub gold: f64,
}

impl EvalPair {
    pub fn new(
        pair_id: impl Into<String>,
        text_id_a: impl Into<String>,
        text_id_b: impl Into<String>,
        gold: f64,
    ) -> Result<Self> {
        if !gold.is_finite() {
            return Err(DysemError::InvalidRecord("gold score must be finite".into()));
        }
        Ok(EvalPair {
            pair_id: pair_id.into(),
            text_id_a: text_id_a.into(),
            text_id_b: text_id_b.into(),
            gold,
        })
    }
}

/// Per-pair detail behind a report.
#[derive(Debug, Clone, PartialEq)]
pub struct PairOutcome {
    pub pair_id: String,
    pub text_id_a: String,
    pub text_id_b: String,
    pub gold: f64,
    pub score: f64,
    pub joint_set_size: usize,
    pub fallback_flags: (bool, bool),
}

fn canonical_order(pairs: &[EvalPair]) -> Vec<&EvalPair> {
    let mut sorted: Vec<&EvalPair> = pairs.iter().collect();
    sorted.sort_by(|a, b| {
        a.pair_id
            .cmp(&b.pair_id)
            .then_with(|| a.text_id_a.cmp(&b.text_id_a))
            .then_with(|| a.text_id_b.cmp(&b.text_id_b))
            .then_with(|| a.gold.total_cmp(&b.gold))
    });
    sorted
}

fn referenced_records<'a>(pairs: &[&EvalPair], records: &'a RecordSet) -> Result<Vec<&'a MultilingualRecord>> {
    let ids: BTreeSet<&str> = pairs
        .iter()
        .flat_map(|p| [p.text_id_a.as_str(), p.text_id_b.as_str()])
        .collect();
    let found: Vec<&MultilingualRecord> = ids
        .into_iter()
        .map(|id| records.get(id).ok_or_else(|| DysemError::MissingRecord(id.to_string())))
        .collect::<Result<_>>()?;
    if let Some(first) = found.first() {
        if let Some(other) = found.iter().find(|r| r.dim() != first.dim()) {
            return Err(DysemError::DimMismatch {
                expected: first.dim(),
                found: other.dim(),
            });
        }
    }
    Ok(found)
}

fn prepare_all(pairs: &[&EvalPair], records: &RecordSet, config: &SimilarityConfig) -> Result<BTreeMap<String, PreparedText>> {
    let used = referenced_records(pairs, records)?;
    let prepared: Vec<PreparedText> = used
        .par_iter()
        .map(|r| PreparedText::new(r, config))
        .collect::<Result<_>>()?;
    Ok(prepared.into_iter().map(|p| (p.text_id.clone(), p)).collect())
}

fn prepare_representations(
    pairs: &[&EvalPair],
    records: &RecordSet,
    config: &SimilarityConfig,
) -> Result<BTreeMap<String, ActivationVector>> {
    let used = referenced_records(pairs, records)?;
    let reps: Vec<(String, ActivationVector)> = used
        .par_iter()
        .map(|r| {
            similarity::check_component(r, config)?;
            Ok((r.text_id().to_string(), similarity::representation_vector(r, config)?))
        })
        .collect::<Result<_>>()?;
    Ok(reps.into_iter().collect())
}

fn correlate(outcomes: &[PairOutcome]) -> Result<Option<f64>> {
    let scores: Vec<f64> = outcomes.iter().map(|o| o.score).collect();
    let gold: Vec<f64> = outcomes.iter().map(|o| o.gold).collect();
    match spearman_x100(&scores, &gold) {
        Ok(rho) => Ok(Some(rho)),
        Err(DysemError::DegenerateInput(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn outcome(pair: &EvalPair, score: f64, joint_set_size: usize, fallback_flags: (bool, bool)) -> PairOutcome {
    PairOutcome {
        pair_id: pair.pair_id.clone(),
        text_id_a: pair.text_id_a.clone(),
        text_id_b: pair.text_id_b.clone(),
        gold: pair.gold,
        score,
        joint_set_size,
        fallback_flags,
    }
}

fn mean_joint(outcomes: &[PairOutcome]) -> f64 {
    let total: usize = outcomes.iter().map(|o| o.joint_set_size).sum();
    total as f64 / outcomes.len() as f64
}

fn non_empty(pairs: &[EvalPair]) -> Result<()> {
    if pairs.is_empty() {
        return Err(DysemError::EmptyInput("no evaluation pairs".into()));
    }
    Ok(())
}

/// Consensus-based evaluation with the per-pair detail.
pub fn evaluate_detailed(
    pairs: &[EvalPair],
    records: &RecordSet,
    config: &SimilarityConfig,
) -> Result<(EvalReport, Vec<PairOutcome>)> {
    config.validate()?;
    non_empty(pairs)?;
    let ordered = canonical_order(pairs);
    let prepared = prepare_all(&ordered, records, config)?;
    let outcomes: Vec<PairOutcome> = ordered
        .par_iter()
        .map(|p| {
            let s = similarity::score_prepared(&prepared[&p.text_id_a], &prepared[&p.text_id_b])?;
            Ok(outcome(p, s.score, s.joint_set_size, s.fallback_flags))
        })
        .collect::<Result<_>>()?;
    let set_total: usize = prepared.values().map(|p| p.semantic_set.len()).sum();
    let report = EvalReport {
        dataset: String::new(),
        method: Method::Consensus,
        n_pairs: outcomes.len(),
        spearman_x100: correlate(&outcomes)?,
        avg_joint_dim: mean_joint(&outcomes),
        avg_semantic_set_size: set_total as f64 / prepared.len() as f64,
        fallback_count: prepared.values().filter(|p| p.semantic_set.fallback_used()).count(),
        config_echo: config.clone(),
        random_dims: None,
        pairs_sha256: None,
    };
    Ok((report, outcomes))
}

pub fn evaluate(pairs: &[EvalPair], records: &RecordSet, config: &SimilarityConfig) -> Result<EvalReport> {
    evaluate_detailed(pairs, records, config).map(|(r, _)| r)
}

/// Plain cosine over every dimension of the representation vectors.
pub fn full_dim_baseline(pairs: &[EvalPair], records: &RecordSet, config: &SimilarityConfig) -> Result<EvalReport> {
    full_dim_detailed(pairs, records, config).map(|(r, _)| r)
}

pub fn full_dim_detailed(
    pairs: &[EvalPair],
    records: &RecordSet,
    config: &SimilarityConfig,
) -> Result<(EvalReport, Vec<PairOutcome>)> {
    config.validate()?;
    non_empty(pairs)?;
    let ordered = canonical_order(pairs);
    let reps = prepare_representations(&ordered, records, config)?;
    let outcomes: Vec<PairOutcome> = ordered
        .par_iter()
        .map(|p| {
            let (a, b) = (&reps[&p.text_id_a], &reps[&p.text_id_b]);
            Ok(outcome(p, vector::cosine(a.values(), b.values())?, a.dim(), (false, false)))
        })
        .collect::<Result<_>>()?;
    let dim = reps.values().next().map_or(0, ActivationVector::dim);
    let report = EvalReport {
        dataset: String::new(),
        method: Method::FullDim,
        n_pairs: outcomes.len(),
        spearman_x100: correlate(&outcomes)?,
        avg_joint_dim: mean_joint(&outcomes),
        avg_semantic_set_size: dim as f64,
        fallback_count: 0,
        config_echo: config.clone(),
        random_dims: None,
        pairs_sha256: None,
    };
    Ok((report, outcomes))
}

/// Restricted cosine over uniformly sampled dimensions.
///
/// One subset of `n_dims` dimensions is drawn per run and shared by every
/// pair; `per_pair` draws a fresh subset for each pair instead.
pub fn random_baseline(
    pairs: &[EvalPair],
    records: &RecordSet,
    config: &SimilarityConfig,
    n_dims: usize,
    seed: u64,
    per_pair: bool,
) -> Result<EvalReport> {
    random_baseline_detailed(pairs, records, config, n_dims, seed, per_pair).map(|(r, _)| r)
}

pub fn random_baseline_detailed(
    pairs: &[EvalPair],
    records: &RecordSet,
    config: &SimilarityConfig,
    n_dims: usize,
    seed: u64,
    per_pair: bool,
) -> Result<(EvalReport, Vec<PairOutcome>)> {
    config.validate()?;
    non_empty(pairs)?;
    if n_dims == 0 {
        return Err(DysemError::InvalidConfig("random baseline needs n_dims >= 1".into()));
    }
    let ordered = canonical_order(pairs);
    let reps = prepare_representations(&ordered, records, config)?;
    let dim = reps.values().next().map_or(0, ActivationVector::dim);
    if n_dims > dim {
        return Err(DysemError::InvalidConfig(format!(
            "n_dims = {n_dims} exceeds dimension {dim}"
        )));
    }
    let shared = random_dims(dim, n_dims, seed, 0);
    let outcomes: Vec<PairOutcome> = ordered
        .par_iter()
        .enumerate()
        .map(|(pos, p)| {
            let fresh;
            let idx = if per_pair {
                fresh = random_dims(dim, n_dims, seed, pos as u64 + 1);
                &fresh
            } else {
                &shared
            };
            let a = vector::restrict(reps[&p.text_id_a].values(), idx)?;
            let b = vector::restrict(reps[&p.text_id_b].values(), idx)?;
            Ok(outcome(p, vector::cosine(&a, &b)?, n_dims, (false, false)))
        })
        .collect::<Result<_>>()?;
    let report = EvalReport {
        dataset: String::new(),
        method: Method::Random,
        n_pairs: outcomes.len(),
        spearman_x100: correlate(&outcomes)?,
        avg_joint_dim: n_dims as f64,
        avg_semantic_set_size: n_dims as f64,
        fallback_count: 0,
        config_echo: config.clone(),
        random_dims: Some(RandomDims {
            n_dims,
            seed,
            per_pair,
        }),
        pairs_sha256: None,
    };
    Ok((report, outcomes))
}

/// Sorted uniform sample of `n` indices from `0..dim`.
pub fn random_dims(dim: usize, n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut idx = sample(&mut rng, dim, n).into_vec();
    idx.sort_unstable();
    idx
}

/// Evaluation restricted to one language: the consensus degenerates to that
/// language's positive support and the text is represented by that rendering.
pub fn eval_single_language(
    pairs: &[EvalPair],
    records: &RecordSet,
    config: &SimilarityConfig,
    language: &str,
) -> Result<EvalReport> {
    let single = SimilarityConfig {
        vector_mode: VectorMode::Mean,
        ..config.with_pool(vec![language.to_string()])
    };
    evaluate(pairs, records, &single)
}

/// Languages by descending score, ties by tag. Undefined scores are dropped.
pub fn rank_languages(scores: &BTreeMap<Language, Option<f64>>) -> Result<Vec<Language>> {
    let mut defined: Vec<(&Language, f64)> = scores
        .iter()
        .filter_map(|(l, s)| s.filter(|v| v.is_finite()).map(|v| (l, v)))
        .collect();
    if defined.is_empty() {
        return Err(DysemError::EmptyInput("no language has a defined score".into()));
    }
    defined.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(defined.into_iter().map(|(l, _)| l.clone()).collect())
}

pub fn select_top_m(ranked: &[Language], m: usize) -> Result<Vec<Language>> {
    if m == 0 || m > ranked.len() {
        return Err(DysemError::InvalidConfig(format!(
            "top-m must be in 1..={}, got {m}",
            ranked.len()
        )));
    }
    Ok(ranked[..m].to_vec())
}
