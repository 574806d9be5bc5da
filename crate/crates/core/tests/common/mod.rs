//! Independent re-derivations used as oracles, plus seeded record generators.
#![allow(dead_code)]

use std::collections::BTreeSet;

use dysem::{ComponentKind, MultilingualRecord, SimilarityConfig, VectorMode};
use rand::Rng;

pub const LANGS: [&str; 5] = ["de", "en", "es", "fr", "zh"];

/// Values drawn from a small grid some of the time, so ties and exact
/// zeros occur.
pub fn value<R: Rng>(rng: &mut R) -> f32 {
    if rng.gen_bool(0.25) {
        [-1.0, -0.5, 0.0, 0.5, 1.0][rng.gen_range(0..5)]
    } else {
        rng.gen_range(-1.0f32..1.0)
    }
}

pub fn random_record<R: Rng>(rng: &mut R, id: &str, dim: usize, langs: &[&str], component: ComponentKind) -> MultilingualRecord {
    let entries: Vec<(&str, Vec<f32>)> = langs
        .iter()
        .map(|&l| (l, (0..dim).map(|_| value(rng)).collect()))
        .collect();
    MultilingualRecord::from_values(id, langs[0], component, entries).unwrap()
}

pub fn config(k: usize, mode: VectorMode, langs: &[&str]) -> SimilarityConfig {
    SimilarityConfig::new(k, mode, ComponentKind::AttnCumulative, langs.iter().map(|s| s.to_string()).collect()).unwrap()
}

/// Rank of each element: one plus the number of smaller elements plus half
/// the number of other equal elements.
pub fn brute_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let less = xs.iter().filter(|&&y| y < x).count() as f64;
            let equal = xs.iter().filter(|&&y| y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

/// Spearman x100 from the textbook sums formula.
pub fn brute_spearman_x100(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (brute_ranks(xs), brute_ranks(ys));
    let n = xs.len() as f64;
    let sx: f64 = rx.iter().sum();
    let sy: f64 = ry.iter().sum();
    let sxx: f64 = rx.iter().map(|v| v * v).sum();
    let syy: f64 = ry.iter().map(|v| v * v).sum();
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    let num = n * sxy - sx * sy;
    let den = ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
    100.0 * num / den
}

/// Compensated (Neumaier) sum.
pub fn careful_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn oracle_mean(record: &MultilingualRecord, pool: &[&str]) -> Vec<f64> {
    let pool: BTreeSet<&str> = pool.iter().copied().collect();
    (0..record.dim())
        .map(|j| careful_sum(pool.iter().map(|l| f64::from(record.get(l).unwrap().values()[j]))) / pool.len() as f64)
        .collect()
}

pub fn oracle_consensus(record: &MultilingualRecord, pool: &[&str]) -> BTreeSet<usize> {
    let mut sets = pool.iter().map(|l| {
        record
            .get(l)
            .unwrap()
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(j, _)| j)
            .collect::<BTreeSet<usize>>()
    });
    let first = sets.next().unwrap();
    sets.fold(first, |acc, s| acc.intersection(&s).copied().collect())
}

/// Sorts `(-mean_j, j)` over the consensus (or every dimension when the
/// consensus is empty) and keeps the first `k`.
pub fn oracle_semantic_set(record: &MultilingualRecord, pool: &[&str], k: usize) -> (BTreeSet<usize>, bool) {
    let mean: Vec<f32> = oracle_mean(record, pool).iter().map(|&v| v as f32).collect();
    let consensus = oracle_consensus(record, pool);
    let fallback = consensus.is_empty();
    let candidates: Vec<usize> = if fallback { (0..record.dim()).collect() } else { consensus.into_iter().collect() };
    let mut keyed: Vec<(f64, usize)> = candidates.into_iter().map(|j| (-f64::from(mean[j]), j)).collect();
    keyed.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (keyed.into_iter().take(k).map(|(_, j)| j).collect(), fallback)
}

pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn oracle_representation(record: &MultilingualRecord, mode: VectorMode, pool: &[&str]) -> Vec<f64> {
    match mode {
        VectorMode::Source => record.source().values().iter().map(|&v| f64::from(v)).collect(),
        VectorMode::Mean => oracle_mean(record, pool).iter().map(|&v| f64::from(v as f32)).collect(),
    }
}

/// Straight-line pair score: `(score, |U|)`.
pub fn oracle_pair(x: &MultilingualRecord, y: &MultilingualRecord, k: usize, mode: VectorMode, pool: &[&str]) -> (f64, usize) {
    let (sx, _) = oracle_semantic_set(x, pool, k);
    let (sy, _) = oracle_semantic_set(y, pool, k);
    let union: BTreeSet<usize> = sx.union(&sy).copied().collect();
    let vx = oracle_representation(x, mode, pool);
    let vy = oracle_representation(y, mode, pool);
    let a: Vec<f64> = union.iter().map(|&j| vx[j]).collect();
    let b: Vec<f64> = union.iter().map(|&j| vy[j]).collect();
    (oracle_cosine(&a, &b), union.len())
}
