use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{eval_single_language, evaluate, rank_languages, select_top_m, EvalPair, EvalReport, RecordSet};
use crate::error::{DysemError, Result};
use crate::vector::{ComponentKind, Language, SimilarityConfig};

/// One report per budget, in the order given.
pub fn sweep_k(
    pairs: &[EvalPair],
    records: &RecordSet,
    config: &SimilarityConfig,
    ks: &[usize],
) -> Result<Vec<(usize, EvalReport)>> {
    ks.iter()
        .map(|&k| Ok((k, evaluate(pairs, records, &config.with_k(k))?)))
        .collect()
}

/// Evaluates each requested component's bundle under otherwise identical settings.
pub fn sweep_components(
    pairs: &[EvalPair],
    bundles: &BTreeMap<ComponentKind, RecordSet>,
    config: &SimilarityConfig,
    components: &[ComponentKind],
) -> Result<Vec<(ComponentKind, EvalReport)>> {
    components
        .iter()
        .map(|&c| {
            let records = bundles
                .get(&c)
                .ok_or_else(|| DysemError::MissingBundle(c.to_string()))?;
            Ok((c, evaluate(pairs, records, &config.with_component(c))?))
        })
        .collect()
}

/// Layer-specific attention `a^l` versus cumulative attention `A^l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LayerStrategy {
    Cumulative,
    PerLayer,
}

impl fmt::Display for LayerStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerStrategy::Cumulative => "cumulative",
            LayerStrategy::PerLayer => "per_layer",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRow {
    pub strategy: LayerStrategy,
    pub layer: u32,
    pub report: EvalReport,
}

/// Per-layer table for both strategies. Every layer must be covered by both.
///
/// Cumulative bundles carry `AttnCumulative` records (summed up to the layer);
/// per-layer bundles carry `AttnLayer(l)` records.
pub fn sweep_layers(
    pairs: &[EvalPair],
    layer_bundles: &BTreeMap<(LayerStrategy, u32), RecordSet>,
    config: &SimilarityConfig,
) -> Result<Vec<LayerRow>> {
    let layers_of = |s: LayerStrategy| -> BTreeSet<u32> {
        layer_bundles.keys().filter(|(st, _)| *st == s).map(|(_, l)| *l).collect()
    };
    let cumulative = layers_of(LayerStrategy::Cumulative);
    let per_layer = layers_of(LayerStrategy::PerLayer);
    if cumulative != per_layer {
        return Err(DysemError::InconsistentLayers(format!(
            "cumulative covers {cumulative:?}, per-layer covers {per_layer:?}"
        )));
    }
    if cumulative.is_empty() {
        return Err(DysemError::InconsistentLayers("no layers supplied".into()));
    }
    if cumulative.contains(&0) {
        return Err(DysemError::InconsistentLayers("layers are 1-based".into()));
    }
    let mut rows = Vec::with_capacity(layer_bundles.len());
    for &layer in &cumulative {
        for strategy in [LayerStrategy::Cumulative, LayerStrategy::PerLayer] {
            let component = match strategy {
                LayerStrategy::Cumulative => ComponentKind::AttnCumulative,
                LayerStrategy::PerLayer => ComponentKind::AttnLayer(layer),
            };
            let records = &layer_bundles[&(strategy, layer)];
            rows.push(LayerRow {
                strategy,
                layer,
                report: evaluate(pairs, records, &config.with_component(component))?,
            });
        }
    }
    Ok(rows)
}

/// Single-language evaluations, their ranking, and the pools formed by the
/// top-`m` languages for every `m` up to `max_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageSweep {
    pub singles: Vec<(Language, EvalReport)>,
    pub ranking: Vec<Language>,
    pub top_m: Vec<(usize, Vec<Language>, EvalReport)>,
}

pub fn sweep_languages(
    pairs: &[EvalPair],
    records: &RecordSet,
    config: &SimilarityConfig,
    candidates: &[Language],
    max_m: usize,
) -> Result<LanguageSweep> {
    let unique: BTreeSet<&Language> = candidates.iter().collect();
    if unique.is_empty() {
        return Err(DysemError::EmptyInput("no candidate languages".into()));
    }
    let singles: Vec<(Language, EvalReport)> = unique
        .into_iter()
        .map(|l| Ok((l.clone(), eval_single_language(pairs, records, config, l)?)))
        .collect::<Result<_>>()?;
    let scores: BTreeMap<Language, Option<f64>> = singles
        .iter()
        .map(|(l, r)| (l.clone(), r.spearman_x100))
        .collect();
    let ranking = rank_languages(&scores)?;
    let max_m = max_m.min(ranking.len());
    let top_m = (1..=max_m)
        .map(|m| {
            let pool = select_top_m(&ranking, m)?;
            let report = evaluate(pairs, records, &config.with_pool(pool.clone()))?;
            Ok((m, pool, report))
        })
        .collect::<Result<_>>()?;
    Ok(LanguageSweep {
        singles,
        ranking,
        top_m,
    })
}
