//! A small decoder-only transformer whose forward pass records every
//! sublayer's contribution to the residual stream.
//!
//! Each layer is pre-normalized: the RMS norm is applied to the sublayer
//! input and the raw sublayer output is added to the stream,
//!
//! ```text
//! a^l = MHA^l(norm(h^{l-1}))
//! f^l = FFN^l(norm(h^{l-1} + a^l))
//! h^l = h^{l-1} + a^l + f^l
//! ```
//!
//! so `h^L = h^0 + A^L + F^L` holds exactly up to rounding, where `A^L` and
//! `F^L` are the summed attention and FFN contributions.
//!
//! Weights are seeded uniform draws in `[-0.1, 0.1]`; the model is never
//! trained. It exists to check the decomposition and to produce fixture
//! activations.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{DysemError, Result};
use crate::vector::{ActivationVector, ComponentKind, MultilingualRecord};

const INIT_RANGE: f64 = 0.1;
const NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TinyLmConfig {
    pub d: usize,
    pub layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab: usize,
    pub seed: u64,
}

impl Default for TinyLmConfig {
    fn default() -> Self {
        TinyLmConfig {
            d: 32,
            layers: 4,
            n_heads: 4,
            d_ff: 64,
            vocab: 97,
            seed: 0,
        }
    }
}

impl TinyLmConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("d", self.d),
            ("layers", self.layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("vocab", self.vocab),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(DysemError::InvalidConfig(format!("{name} must be >= 1")));
        }
        if !self.d.is_multiple_of(self.n_heads) {
            return Err(DysemError::InvalidConfig(format!(
                "d = {} not divisible by n_heads = {}",
                self.d, self.n_heads
            )));
        }
        Ok(())
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone)]
struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE))
            .collect();
        Matrix { rows, cols, data }
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(w, v)| w * v).sum())
            .collect()
    }
}

#[derive(Debug, Clone)]
struct Block {
    wq: Matrix,
    wk: Matrix,
    wv: Matrix,
    wo: Matrix,
    w_in: Matrix,
    w_out: Matrix,
}

/// Contributions recorded for one token position.
///
/// Per-layer vectors are indexed from 0, so `attn_per_layer[l - 1]` is `a^l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub h0: Vec<f32>,
    pub attn_per_layer: Vec<Vec<f32>>,
    pub ffn_per_layer: Vec<Vec<f32>>,
    pub attn_cumulative: Vec<Vec<f32>>,
    pub ffn_cumulative: Vec<Vec<f32>>,
    pub hidden_final: Vec<f32>,
}

impl LayerTrace {
    pub fn dim(&self) -> usize {
        self.h0.len()
    }

    pub fn layers(&self) -> usize {
        self.attn_per_layer.len()
    }

    /// Final vector for the requested component.
    pub fn extract(&self, component: ComponentKind) -> Result<ActivationVector> {
        let values = match component {
            ComponentKind::Hidden => self.hidden_final.clone(),
            ComponentKind::AttnCumulative => self.last(&self.attn_cumulative)?,
            ComponentKind::FfnCumulative => self.last(&self.ffn_cumulative)?,
            ComponentKind::AttnLayer(l) => {
                component.validate_layers(self.layers())?;
                self.attn_per_layer[l as usize - 1].clone()
            }
        };
        ActivationVector::new(values, component)
    }

    /// Cumulative attention `A^l` up to (1-based) `layer`.
    pub fn attn_cumulative_at(&self, layer: usize) -> Result<ActivationVector> {
        if layer == 0 || layer > self.layers() {
            return Err(DysemError::InvalidConfig(format!(
                "layer {layer} outside 1..={}",
                self.layers()
            )));
        }
        ActivationVector::new(
            self.attn_cumulative[layer - 1].clone(),
            ComponentKind::AttnCumulative,
        )
    }

    fn last(&self, v: &[Vec<f32>]) -> Result<Vec<f32>> {
        v.last()
            .cloned()
            .ok_or_else(|| DysemError::InvalidRecord("trace has no layers".into()))
    }
}

/// Outcome of checking `h^L = h^0 + A^L + F^L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionCheck {
    pub holds: bool,
    pub max_residual: f64,
}

pub fn verify_decomposition(trace: &LayerTrace, tolerance: f64) -> DecompositionCheck {
    let zeros = vec![0.0f32; trace.dim()];
    let attn = trace.attn_cumulative.last().unwrap_or(&zeros);
    let ffn = trace.ffn_cumulative.last().unwrap_or(&zeros);
    let max_residual = trace
        .hidden_final
        .iter()
        .zip(&trace.h0)
        .zip(attn.iter().zip(ffn))
        .map(|((&h, &h0), (&a, &f))| {
            let rebuilt = f64::from(h0) + f64::from(a) + f64::from(f);
            (f64::from(h) - rebuilt).abs()
        })
        .fold(0.0f64, f64::max);
    DecompositionCheck {
        holds: max_residual <= tolerance,
        max_residual,
    }
}

#[derive(Debug, Clone)]
pub struct TinyLm {
    config: TinyLmConfig,
    embed: Matrix,
    blocks: Vec<Block>,
}

impl TinyLm {
    pub fn new(config: TinyLmConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (d, ff) = (config.d, config.d_ff);
        let embed = Matrix::random(config.vocab, d, &mut rng);
        let blocks = (0..config.layers)
            .map(|_| Block {
                wq: Matrix::random(d, d, &mut rng),
                wk: Matrix::random(d, d, &mut rng),
                wv: Matrix::random(d, d, &mut rng),
                wo: Matrix::random(d, d, &mut rng),
                w_in: Matrix::random(ff, d, &mut rng),
                w_out: Matrix::random(d, ff, &mut rng),
            })
            .collect();
        Ok(TinyLm {
            config,
            embed,
            blocks,
        })
    }

    /// Zeroes every FFN output projection, so every `f^l` vanishes.
    pub fn with_ffn_output_zeroed(mut self) -> Self {
        for b in &mut self.blocks {
            b.w_out.data.fill(0.0);
        }
        self
    }

    pub fn config(&self) -> &TinyLmConfig {
        &self.config
    }

    /// Trace for the last token of `token_ids`.
    pub fn forward_decomposed(&self, token_ids: &[usize]) -> Result<LayerTrace> {
        let mut traces = self.forward_all(token_ids)?;
        Ok(traces.pop().expect("non-empty sequence"))
    }

    /// Traces for every position; entry `t` depends only on tokens `0..=t`.
    pub fn forward_all(&self, token_ids: &[usize]) -> Result<Vec<LayerTrace>> {
        if token_ids.is_empty() {
            return Err(DysemError::EmptyInput("token sequence is empty".into()));
        }
        let vocab = self.config.vocab;
        if let Some(&token) = token_ids.iter().find(|&&t| t >= vocab) {
            return Err(DysemError::TokenOutOfVocab { token, vocab });
        }
        let d = self.config.d;
        let n = token_ids.len();
        let layers = self.config.layers;

        let mut stream: Vec<Vec<f64>> = token_ids
            .iter()
            .enumerate()
            .map(|(pos, &t)| {
                let mut h = self.embed.row(t).to_vec();
                add_assign(&mut h, &positional(pos, d));
                h
            })
            .collect();

        let h0 = stream.clone();
        let mut attn = vec![Vec::with_capacity(layers); n];
        let mut ffn = vec![Vec::with_capacity(layers); n];

        for block in &self.blocks {
            let a = self.attention(block, &stream);
            for (pos, h) in stream.iter_mut().enumerate() {
                add_assign(h, &a[pos]);
                let f = self.feed_forward(block, h);
                add_assign(h, &f);
                attn[pos].push(a[pos].clone());
                ffn[pos].push(f);
            }
        }

        Ok((0..n)
            .map(|pos| LayerTrace {
                h0: to_f32(&h0[pos]),
                attn_per_layer: attn[pos].iter().map(|v| to_f32(v)).collect(),
                ffn_per_layer: ffn[pos].iter().map(|v| to_f32(v)).collect(),
                attn_cumulative: cumulative(&attn[pos]),
                ffn_cumulative: cumulative(&ffn[pos]),
                hidden_final: to_f32(&stream[pos]),
            })
            .collect())
    }

    fn attention(&self, block: &Block, stream: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let d = self.config.d;
        let heads = self.config.n_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let normed: Vec<Vec<f64>> = stream.iter().map(|h| rms_norm(h)).collect();
        let q: Vec<Vec<f64>> = normed.iter().map(|x| block.wq.matvec(x)).collect();
        let k: Vec<Vec<f64>> = normed.iter().map(|x| block.wk.matvec(x)).collect();
        let v: Vec<Vec<f64>> = normed.iter().map(|x| block.wv.matvec(x)).collect();

        (0..stream.len())
            .map(|pos| {
                let mut concat = vec![0.0; d];
                for head in 0..heads {
                    let span = head * dh..(head + 1) * dh;
                    // causal: keys 0..=pos only
                    let scores: Vec<f64> = (0..=pos)
                        .map(|j| {
                            q[pos][span.clone()]
                                .iter()
                                .zip(&k[j][span.clone()])
                                .map(|(a, b)| a * b)
                                .sum::<f64>()
                                * scale
                        })
                        .collect();
                    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                    let z: f64 = exp.iter().sum();
                    for (j, e) in exp.iter().enumerate() {
                        let w = e / z;
                        for (c, vv) in concat[span.clone()].iter_mut().zip(&v[j][span.clone()]) {
                            *c += w * vv;
                        }
                    }
                }
                block.wo.matvec(&concat)
            })
            .collect()
    }

    fn feed_forward(&self, block: &Block, h: &[f64]) -> Vec<f64> {
        let hidden: Vec<f64> = block.w_in.matvec(&rms_norm(h)).into_iter().map(gelu).collect();
        block.w_out.matvec(&hidden)
    }
}

/// A rendering handed to [`synth_bundle`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthText {
    pub text_id: String,
    pub language: String,
    pub is_source: bool,
    pub token_ids: Vec<usize>,
}

/// Runs every rendering through the model and groups the requested
/// component's last-token vectors by text id, in first-appearance order.
pub fn synth_bundle(
    model: &TinyLm,
    texts: &[SynthText],
    component: ComponentKind,
) -> Result<Vec<MultilingualRecord>> {
    component.validate_layers(model.config().layers)?;
    let mut order: Vec<&str> = Vec::new();
    let mut grouped: BTreeMap<&str, (Option<&str>, BTreeMap<String, ActivationVector>)> =
        BTreeMap::new();
    for text in texts {
        let trace = model.forward_decomposed(&text.token_ids)?;
        let vector = trace.extract(component)?;
        let slot = grouped.entry(&text.text_id).or_insert_with(|| {
            order.push(&text.text_id);
            (None, BTreeMap::new())
        });
        if text.is_source {
            if slot.0.is_some() {
                return Err(DysemError::DuplicateSourceLanguage {
                    text_id: text.text_id.clone(),
                });
            }
            slot.0 = Some(&text.language);
        }
        if slot.1.insert(text.language.clone(), vector).is_some() {
            return Err(DysemError::InvalidRecord(format!(
                "text `{}` has language `{}` twice",
                text.text_id, text.language
            )));
        }
    }
    order
        .into_iter()
        .map(|id| {
            let (source, entries) = grouped.remove(id).expect("grouped id");
            let source = source.ok_or_else(|| {
                DysemError::InvalidRecord(format!("text `{id}` has no source rendering"))
            })?;
            MultilingualRecord::new(id, source, entries)
        })
        .collect()
}

fn rms_norm(x: &[f64]) -> Vec<f64> {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let inv = 1.0 / (ms + NORM_EPS).sqrt();
    x.iter().map(|v| v * inv).collect()
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

fn positional(pos: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| {
            let freq = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 * freq;
            0.1 * if i % 2 == 0 { angle.sin() } else { angle.cos() }
        })
        .collect()
}

fn add_assign(acc: &mut [f64], x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += v;
    }
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

fn cumulative(per_layer: &[Vec<f64>]) -> Vec<Vec<f32>> {
    let mut acc = vec![0.0; per_layer.first().map_or(0, Vec::len)];
    per_layer
        .iter()
        .map(|v| {
            add_assign(&mut acc, v);
            to_f32(&acc)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(seed: u64) -> TinyLm {
        TinyLm::new(TinyLmConfig {
            seed,
            ..TinyLmConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn zeroed_ffn_output_leaves_only_attention() {
        let m = model(3).with_ffn_output_zeroed();
        let trace = m.forward_decomposed(&[1, 5, 9, 2]).unwrap();
        assert!(trace.ffn_per_layer.iter().flatten().all(|&v| v == 0.0));
        for j in 0..trace.dim() {
            let rebuilt = f64::from(trace.h0[j]) + f64::from(trace.attn_cumulative[3][j]);
            assert!((f64::from(trace.hidden_final[j]) - rebuilt).abs() < 1e-6);
        }
    }

    #[test]
    fn single_layer_cumulation_is_identity() {
        let m = TinyLm::new(TinyLmConfig {
            layers: 1,
            ..TinyLmConfig::default()
        })
        .unwrap();
        let trace = m.forward_decomposed(&[4, 4, 8]).unwrap();
        assert_eq!(trace.attn_cumulative[0], trace.attn_per_layer[0]);
        assert_eq!(trace.ffn_cumulative[0], trace.ffn_per_layer[0]);
    }

    #[test]
    fn handbuilt_trace() {
        let trace = LayerTrace {
            h0: vec![1.0],
            attn_per_layer: vec![vec![2.0]],
            ffn_per_layer: vec![vec![3.0]],
            attn_cumulative: vec![vec![2.0]],
            ffn_cumulative: vec![vec![3.0]],
            hidden_final: vec![6.0],
        };
        let check = verify_decomposition(&trace, 0.0);
        assert!(check.holds);
        assert_eq!(check.max_residual, 0.0);
    }

    #[test]
    fn planted_violation_is_reported() {
        let mut trace = model(1).forward_decomposed(&[1, 2, 3]).unwrap();
        assert!(verify_decomposition(&trace, 1e-5).holds);
        trace.attn_cumulative.last_mut().unwrap()[7] += 1.0;
        let check = verify_decomposition(&trace, 1e-5);
        assert!(!check.holds);
        assert!((check.max_residual - 1.0).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_tokens_and_configs() {
        let m = model(0);
        assert!(matches!(
            m.forward_decomposed(&[97]),
            Err(DysemError::TokenOutOfVocab { token: 97, vocab: 97 })
        ));
        assert!(m.forward_decomposed(&[]).is_err());
        let bad = TinyLmConfig {
            n_heads: 5,
            ..TinyLmConfig::default()
        };
        assert!(TinyLm::new(bad).is_err());
    }

    #[test]
    fn causal_prefix_traces_match() {
        let m = model(11);
        let a = [3usize, 14, 15, 92, 65, 35];
        let mut b = a;
        b[4] = 1;
        b[5] = 2;
        let ta = m.forward_all(&a).unwrap();
        let tb = m.forward_all(&b).unwrap();
        for t in 0..4 {
            assert_eq!(ta[t], tb[t]);
            assert_eq!(ta[t], m.forward_decomposed(&a[..=t]).unwrap());
        }
    }

    #[test]
    fn synth_bundle_groups_renderings() {
        let m = model(2);
        let texts = vec![
            SynthText { text_id: "a".into(), language: "en".into(), is_source: true, token_ids: vec![1, 2, 3] },
            SynthText { text_id: "a".into(), language: "fr".into(), is_source: false, token_ids: vec![1, 2, 3] },
        ];
        let recs = synth_bundle(&m, &texts, ComponentKind::AttnCumulative).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].get("en").unwrap(), recs[0].get("fr").unwrap());

        let mut dup = texts.clone();
        dup[1].is_source = true;
        assert!(matches!(
            synth_bundle(&m, &dup, ComponentKind::Hidden),
            Err(DysemError::DuplicateSourceLanguage { .. })
        ));
        let none: Vec<_> = texts.iter().cloned().map(|mut t| { t.is_source = false; t }).collect();
        assert!(synth_bundle(&m, &none, ComponentKind::Hidden).is_err());
        assert!(synth_bundle(&m, &texts, ComponentKind::AttnLayer(9)).is_err());
    }
}
