//! Synthetic benchmarks with known structure.
//!
//! The planted benchmark builds activation records directly: each text has a
//! planted set of dimensions carrying a positive signal in every language,
//! and every other dimension holds noise whose sign is drawn independently
//! per language. Gold similarity of a pair is the cosine of the two planted
//! signals. The tinylm fixture instead runs token sequences through
//! [`TinyLm`](crate::tinylm::TinyLm) to produce bundles for every component.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{DysemError, Result};
use crate::eval::EvalPair;
use crate::store::BundleHeader;
use crate::tinylm::{LayerTrace, SynthText, TinyLm, TinyLmConfig};
use crate::vector::{self, ActivationVector, ComponentKind, Language, MultilingualRecord};

/// Seed of the `planted` preset.
pub const PLANTED_SEED: u64 = 20_240_611;
/// Seed of the `tinylm` preset.
pub const TINYLM_SEED: u64 = 7;

pub const SIGNAL_MIN: f32 = 0.6;
pub const SIGNAL_MAX: f32 = 1.6;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub dim: usize,
    pub languages: Vec<Language>,
    pub planted: usize,
    pub n_pairs: usize,
    /// Noise magnitudes are uniform in `[0, noise)`.
    pub noise: f32,
    /// Per-language perturbation of planted values, uniform in `[-jitter, jitter]`.
    pub jitter: f32,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            dim: 256,
            languages: ["en", "de", "es", "fr", "zh"].map(String::from).to_vec(),
            planted: 64,
            n_pairs: 200,
            noise: 2.0,
            jitter: 0.05,
            seed: PLANTED_SEED,
        }
    }
}

impl PlantedSpec {
    /// Noise kept below the signal floor, so every stray consensus survivor
    /// ranks under every planted dimension.
    pub fn separated(seed: u64) -> Self {
        PlantedSpec {
            noise: 0.5,
            n_pairs: 1,
            seed,
            ..PlantedSpec::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.languages.is_empty() || self.planted == 0 || self.planted > self.dim {
            return Err(DysemError::InvalidConfig(
                "planted spec needs languages and 1 <= planted <= dim".into(),
            ));
        }
        if self.jitter >= SIGNAL_MIN {
            return Err(DysemError::InvalidConfig("jitter must stay below the signal floor".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedBenchmark {
    pub records: Vec<MultilingualRecord>,
    pub pairs: Vec<EvalPair>,
    pub planted_sets: BTreeMap<String, Vec<usize>>,
}

/// A planted signal: positive values on `indices`, zero elsewhere.
pub fn planted_signal<R: Rng>(rng: &mut R, dim: usize, indices: &[usize]) -> Vec<f32> {
    let mut s = vec![0.0f32; dim];
    for &j in indices {
        s[j] = rng.gen_range(SIGNAL_MIN..SIGNAL_MAX);
    }
    s
}

/// Renders `signal` in every language: planted dimensions get a small
/// positive-preserving jitter, the rest sign-randomized noise. The first
/// language is the source.
pub fn planted_record<R: Rng>(
    rng: &mut R,
    text_id: &str,
    signal: &[f32],
    spec: &PlantedSpec,
) -> Result<MultilingualRecord> {
    let mut entries = BTreeMap::new();
    for lang in &spec.languages {
        let values: Vec<f32> = signal
            .iter()
            .map(|&s| {
                if s > 0.0 {
                    s + rng.gen_range(-spec.jitter..=spec.jitter)
                } else {
                    let magnitude = rng.gen_range(0.0..spec.noise);
                    if rng.gen_bool(0.5) {
                        magnitude
                    } else {
                        -magnitude
                    }
                }
            })
            .collect();
        entries.insert(lang.clone(), ActivationVector::new(values, ComponentKind::AttnCumulative)?);
    }
    MultilingualRecord::new(text_id, spec.languages[0].clone(), entries)
}

/// Pairs `(pN-a, pN-b)` whose planted sets overlap by a uniformly drawn count.
pub fn planted_benchmark(spec: &PlantedSpec) -> Result<PlantedBenchmark> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(2 * spec.n_pairs);
    let mut pairs = Vec::with_capacity(spec.n_pairs);
    let mut planted_sets = BTreeMap::new();

    for p in 0..spec.n_pairs {
        let mut px = sample(&mut rng, spec.dim, spec.planted).into_vec();
        px.sort_unstable();
        let overlap = rng.gen_range(0..=spec.planted);
        let shared: Vec<usize> = px.choose_multiple(&mut rng, overlap).copied().collect();
        let taken: BTreeSet<usize> = px.iter().copied().collect();
        let mut rest: Vec<usize> = (0..spec.dim).filter(|j| !taken.contains(j)).collect();
        rest.shuffle(&mut rng);
        let mut py: Vec<usize> = shared.iter().copied().chain(rest.into_iter().take(spec.planted - overlap)).collect();
        py.sort_unstable();

        let sx = planted_signal(&mut rng, spec.dim, &px);
        let mut sy = planted_signal(&mut rng, spec.dim, &py);
        // shared dimensions keep a correlated magnitude
        for &j in &shared {
            sy[j] = (sx[j] * rng.gen_range(0.8f32..1.2)).clamp(SIGNAL_MIN, SIGNAL_MAX);
        }
        let gold = vector::cosine(&sx, &sy)?;

        let (ix, iy) = (format!("p{p:04}-a"), format!("p{p:04}-b"));
        records.push(planted_record(&mut rng, &ix, &sx, spec)?);
        records.push(planted_record(&mut rng, &iy, &sy, spec)?);
        pairs.push(EvalPair::new(p.to_string(), &ix, &iy, gold)?);
        planted_sets.insert(ix, px);
        planted_sets.insert(iy, py);
    }
    Ok(PlantedBenchmark {
        records,
        pairs,
        planted_sets,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyFixtureSpec {
    pub model: TinyLmConfig,
    pub languages: Vec<Language>,
    pub n_pairs: usize,
    pub seq_len: usize,
    pub seed: u64,
}

impl Default for TinyFixtureSpec {
    fn default() -> Self {
        TinyFixtureSpec {
            model: TinyLmConfig {
                d: 64,
                layers: 4,
                n_heads: 4,
                d_ff: 128,
                vocab: 101,
                seed: TINYLM_SEED,
            },
            languages: ["en", "de", "fr"].map(String::from).to_vec(),
            n_pairs: 60,
            seq_len: 8,
            seed: TINYLM_SEED,
        }
    }
}

/// Bundles for every component plus pairs, all from one model.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyFixture {
    pub bundles: Vec<(BundleHeader, Vec<MultilingualRecord>)>,
    pub pairs: Vec<EvalPair>,
}

/// Each pair is a random sequence and a copy with some positions replaced;
/// gold is the fraction of positions kept. A language rendering shifts every
/// odd-position token by a language-specific offset.
pub fn tinylm_fixture(spec: &TinyFixtureSpec) -> Result<TinyFixture> {
    if spec.languages.is_empty() || spec.seq_len == 0 {
        return Err(DysemError::InvalidConfig("fixture needs languages and seq_len >= 1".into()));
    }
    let model = TinyLm::new(spec.model)?;
    let vocab = spec.model.vocab;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut texts = Vec::new();
    let mut pairs = Vec::new();
    let render = |tokens: &[usize], lang_pos: usize| -> Vec<usize> {
        tokens
            .iter()
            .enumerate()
            .map(|(i, &t)| if i % 2 == 1 { (t + 7 * lang_pos) % vocab } else { t })
            .collect()
    };
    for p in 0..spec.n_pairs {
        let base: Vec<usize> = (0..spec.seq_len).map(|_| rng.gen_range(0..vocab)).collect();
        let changes = rng.gen_range(0..=spec.seq_len);
        let mut variant = base.clone();
        for pos in sample(&mut rng, spec.seq_len, changes).into_iter() {
            variant[pos] = (variant[pos] + rng.gen_range(1..vocab)) % vocab;
        }
        let kept = base.iter().zip(&variant).filter(|(a, b)| a == b).count();
        let gold = kept as f64 / spec.seq_len as f64;
        let (ia, ib) = (format!("t{p:04}-a"), format!("t{p:04}-b"));
        for (id, tokens) in [(&ia, &base), (&ib, &variant)] {
            for (li, lang) in spec.languages.iter().enumerate() {
                texts.push(SynthText {
                    text_id: id.clone(),
                    language: lang.clone(),
                    is_source: li == 0,
                    token_ids: render(tokens, li),
                });
            }
        }
        pairs.push(EvalPair::new(p.to_string(), ia, ib, gold)?);
    }

    // one forward pass per rendering serves every component
    let traces: Vec<LayerTrace> = texts
        .par_iter()
        .map(|t| model.forward_decomposed(&t.token_ids))
        .collect::<Result<_>>()?;
    let records_from = |pick: &dyn Fn(&LayerTrace) -> Result<ActivationVector>| -> Result<Vec<MultilingualRecord>> {
        let mut grouped: BTreeMap<&str, BTreeMap<Language, ActivationVector>> = BTreeMap::new();
        for (t, trace) in texts.iter().zip(&traces) {
            grouped.entry(&t.text_id).or_default().insert(t.language.clone(), pick(trace)?);
        }
        texts
            .iter()
            .filter(|t| t.is_source)
            .map(|t| MultilingualRecord::new(&t.text_id, &t.language, grouped.remove(t.text_id.as_str()).unwrap_or_default()))
            .collect()
    };

    let model_name = format!("tinylm-d{}-l{}-s{}", spec.model.d, spec.model.layers, spec.model.seed);
    let mut bundles = Vec::new();
    let mut components = vec![ComponentKind::Hidden, ComponentKind::AttnCumulative, ComponentKind::FfnCumulative];
    components.extend((1..=spec.model.layers as u32).map(ComponentKind::AttnLayer));
    for c in components {
        let records = records_from(&|trace| trace.extract(c))?;
        bundles.push((BundleHeader::new(&model_name, spec.model.d, c), records));
    }
    // cumulative attention truncated at each layer below the last
    for layer in 1..spec.model.layers {
        let records = records_from(&|trace| trace.attn_cumulative_at(layer))?;
        let mut header = BundleHeader::new(&model_name, spec.model.d, ComponentKind::AttnCumulative);
        header.layer = Some(layer as u32);
        bundles.push((header, records));
    }
    Ok(TinyFixture { bundles, pairs })
}
