use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{
    CliError, Command, EvalArgs, IndexBuildArgs, IndexCommand, IndexInsertArgs, IndexQueryArgs, Preset, RankArgs,
    SelftestArgs, SimArgs, SweepArgs, SweepMode, SynthArgs, ValidateArgs,
};
use crate::error::DysemError;
use crate::eval::{
    self, rank_languages, record_set, select_top_m, EvalPair, EvalReport, LayerStrategy, PairOutcome, RecordSet,
};
use crate::store::{format_pairs_tsv, parse_pairs_tsv, read_bundle, write_bundle, Bundle, BundleHeader, SimilarityIndex};
use crate::synth::{self, PlantedSpec, TinyFixtureSpec};
use crate::tinylm::{verify_decomposition, TinyLm, TinyLmConfig};
use crate::vector::{ComponentKind, Language, MultilingualRecord, SimilarityConfig};

type CliResult<T = ()> = Result<T, CliError>;

pub(crate) fn dispatch(command: Command) -> CliResult {
    match command {
        Command::SelftestTinylm(a) => selftest(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::RankLanguages(a) => rank(a),
        Command::Index(IndexCommand::Build(a)) => index_build(a),
        Command::Index(IndexCommand::Insert(a)) => index_insert(a),
        Command::Index(IndexCommand::Query(a)) => index_query(a),
        Command::ValidateBundle(a) => validate(a),
        Command::Synth(a) => synth_cmd(a),
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| DysemError::io(path, e).into())
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| DysemError::io(path, e).into())
}

fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn selftest(a: SelftestArgs) -> CliResult {
    if a.tokens.is_empty() || a.seeds == 0 {
        return Err(CliError::Usage("need at least one sequence length and one seed".into()));
    }
    let mut worst = 0.0f64;
    let mut failures = 0usize;
    let mut runs = 0usize;
    for seed in 0..a.seeds {
        let model = TinyLm::new(TinyLmConfig {
            d: a.d,
            layers: a.layers,
            n_heads: a.heads,
            d_ff: a.d_ff,
            vocab: a.vocab,
            seed,
        })?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for &n in &a.tokens {
            let tokens: Vec<usize> = (0..n).map(|_| rng.gen_range(0..a.vocab)).collect();
            for trace in model.forward_all(&tokens)? {
                let check = verify_decomposition(&trace, a.tolerance);
                worst = worst.max(check.max_residual);
                failures += usize::from(!check.holds);
                runs += 1;
            }
        }
    }
    println!("positions checked: {runs}");
    println!("max residual: {worst:.3e} (tolerance {:.0e})", a.tolerance);
    if failures > 0 {
        return Err(CliError::CheckFailed(format!(
            "decomposition violated at {failures} of {runs} positions, max residual {worst:.3e}"
        )));
    }
    Ok(())
}

fn load_bundles(paths: &[PathBuf]) -> CliResult<Vec<Bundle>> {
    paths.iter().map(|p| read_bundle(p).map_err(CliError::from)).collect()
}

/// Component a bundle file contributes under: `attn_cum` bundles truncated
/// at a layer are kept apart from the full sum.
fn is_full(header: &BundleHeader) -> bool {
    header.component != ComponentKind::AttnCumulative || header.layer.is_none()
}

/// Merges the records of every bundle holding `component` (the only one
/// present when `None`), checking that their headers agree.
fn select_records(bundles: &[Bundle], component: Option<ComponentKind>) -> CliResult<(BundleHeader, RecordSet)> {
    let full: Vec<&Bundle> = bundles.iter().filter(|b| is_full(&b.header)).collect();
    let component = match component {
        Some(c) => c,
        None => {
            let present: BTreeSet<ComponentKind> = full.iter().map(|b| b.header.component).collect();
            match present.len() {
                1 => *present.iter().next().unwrap_or(&ComponentKind::Hidden),
                0 => return Err(DysemError::EmptyInput("no bundles".into()).into()),
                _ => {
                    let listed: Vec<String> = present.iter().map(ToString::to_string).collect();
                    return Err(CliError::Usage(format!(
                        "bundles hold several components ({}); pick one with --component",
                        listed.join(", ")
                    )));
                }
            }
        }
    };
    let chosen: Vec<&Bundle> = full.into_iter().filter(|b| b.header.component == component).collect();
    let first = chosen
        .first()
        .ok_or_else(|| DysemError::MissingBundle(component.to_string()))?;
    for b in &chosen[1..] {
        check_compatible(&first.header, &b.header)?;
    }
    let records = record_set(chosen.iter().flat_map(|b| b.records.iter().cloned()))?;
    Ok((first.header.clone(), records))
}

fn check_compatible(a: &BundleHeader, b: &BundleHeader) -> CliResult {
    if a.dim != b.dim {
        return Err(DysemError::DimMismatch {
            expected: a.dim,
            found: b.dim,
        }
        .into());
    }
    if a.model != b.model {
        return Err(DysemError::ConfigMismatch(format!("bundles come from models `{}` and `{}`", a.model, b.model)).into());
    }
    Ok(())
}

/// Languages rendered for every record, sorted.
fn common_languages<'a>(records: impl IntoIterator<Item = &'a MultilingualRecord>) -> Vec<Language> {
    let mut common: Option<BTreeSet<&str>> = None;
    for r in records {
        let langs: BTreeSet<&str> = r.languages().collect();
        common = Some(match common {
            None => langs,
            Some(c) => c.intersection(&langs).copied().collect(),
        });
    }
    common.unwrap_or_default().into_iter().map(String::from).collect()
}

fn similarity_config(sim: &SimArgs, component: ComponentKind, records: &RecordSet) -> CliResult<SimilarityConfig> {
    let pool = if sim.pool.is_empty() {
        let pool = common_languages(records.values());
        if pool.is_empty() {
            return Err(DysemError::EmptyInput("records share no language; pass --pool".into()).into());
        }
        pool
    } else {
        sim.pool.clone()
    };
    Ok(SimilarityConfig::new(sim.k, sim.vector, component, pool)?)
}

fn load_pairs(path: &Path) -> CliResult<(Vec<EvalPair>, String)> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| DysemError::Parse {
        line: 0,
        detail: format!("pairs file is not UTF-8: {e}"),
    })?;
    Ok((parse_pairs_tsv(&text)?, hex_sha256(&bytes)))
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

fn fmt_score(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |s| format!("{s:.6}"))
}

fn per_pair_tsv(outcomes: &[PairOutcome]) -> String {
    let mut out = String::from("pair_id\ttext_id_a\ttext_id_b\tgold\tscore\tjoint_set_size\tfallback_a\tfallback_b\n");
    for o in outcomes {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.6}\t{}\t{}\t{}",
            o.pair_id, o.text_id_a, o.text_id_b, o.gold, o.score, o.joint_set_size, o.fallback_flags.0, o.fallback_flags.1
        );
    }
    out
}

fn eval_cmd(a: EvalArgs) -> CliResult {
    let bundles = load_bundles(&a.bundle)?;
    let (header, records) = select_records(&bundles, a.sim.component)?;
    let config = similarity_config(&a.sim, header.component, &records)?;
    let (pairs, digest) = load_pairs(&a.pairs)?;
    let (mut report, outcomes) = if a.full_dim {
        eval::full_dim_detailed(&pairs, &records, &config)?
    } else if let Some(n) = a.random_dims {
        eval::random_baseline_detailed(&pairs, &records, &config, n, a.seed, a.per_pair_resample)?
    } else {
        eval::evaluate_detailed(&pairs, &records, &config)?
    };
    report.dataset = dataset_name(&a.pairs);
    report.pairs_sha256 = Some(digest);
    write_file(&a.out, &report.to_canonical_json()?)?;
    if let Some(path) = &a.per_pair {
        write_file(path, &per_pair_tsv(&outcomes))?;
    }
    println!(
        "{} pairs, spearman x100 {}, avg joint dim {:.1}",
        report.n_pairs,
        fmt_score(report.spearman_x100),
        report.avg_joint_dim
    );
    if report.spearman_x100.is_none() {
        return Err(DysemError::DegenerateInput("Spearman correlation undefined (constant scores or gold)".into()).into());
    }
    Ok(())
}

const REPORT_COLUMNS: &str = "spearman_x100\tavg_joint_dim\tavg_semantic_set_size\tfallback_count\tn_pairs";

fn report_cells(r: &EvalReport) -> String {
    format!(
        "{}\t{:.6}\t{:.6}\t{}\t{}",
        fmt_score(r.spearman_x100),
        r.avg_joint_dim,
        r.avg_semantic_set_size,
        r.fallback_count,
        r.n_pairs
    )
}

fn sweep(a: SweepArgs) -> CliResult {
    let bundles = load_bundles(&a.bundle)?;
    let (pairs, _) = load_pairs(&a.pairs)?;
    let mut table = String::new();
    match a.mode {
        SweepMode::K => {
            let (header, records) = select_records(&bundles, a.sim.component)?;
            let config = similarity_config(&a.sim, header.component, &records)?;
            let _ = writeln!(table, "k\t{REPORT_COLUMNS}");
            for (k, r) in eval::sweep_k(&pairs, &records, &config, &a.ks)? {
                let _ = writeln!(table, "{k}\t{}", report_cells(&r));
            }
        }
        SweepMode::Component => {
            let mut by_component: BTreeMap<ComponentKind, RecordSet> = BTreeMap::new();
            let present: BTreeSet<ComponentKind> =
                bundles.iter().filter(|b| is_full(&b.header)).map(|b| b.header.component).collect();
            for &c in &present {
                by_component.insert(c, select_records(&bundles, Some(c))?.1);
            }
            let components = if a.components.is_empty() {
                present.into_iter().collect()
            } else {
                a.components.clone()
            };
            let pool_source = by_component
                .values()
                .next()
                .ok_or_else(|| DysemError::EmptyInput("no bundles".into()))?;
            let config = similarity_config(&a.sim, components[0], pool_source)?;
            let _ = writeln!(table, "component\t{REPORT_COLUMNS}");
            for (c, r) in eval::sweep_components(&pairs, &by_component, &config, &components)? {
                let _ = writeln!(table, "{c}\t{}", report_cells(&r));
            }
        }
        SweepMode::Layer => {
            let layer_bundles = layer_bundles(&bundles)?;
            let pool_source = layer_bundles
                .values()
                .next()
                .ok_or_else(|| DysemError::InconsistentLayers("no layer bundles supplied".into()))?;
            let config = similarity_config(&a.sim, ComponentKind::AttnCumulative, pool_source)?;
            let _ = writeln!(table, "layer\tstrategy\t{REPORT_COLUMNS}");
            for row in eval::sweep_layers(&pairs, &layer_bundles, &config)? {
                let _ = writeln!(table, "{}\t{}\t{}", row.layer, row.strategy, report_cells(&row.report));
            }
        }
        SweepMode::Language => {
            let (header, records) = select_records(&bundles, a.sim.component)?;
            let config = similarity_config(&a.sim, header.component, &records)?;
            let candidates = if a.languages.is_empty() {
                config.language_pool.clone()
            } else {
                a.languages.clone()
            };
            let max_m = a.max_m.unwrap_or(candidates.len());
            let result = eval::sweep_languages(&pairs, &records, &config, &candidates, max_m)?;
            let _ = writeln!(table, "stage\tlanguages\t{REPORT_COLUMNS}");
            for (lang, r) in &result.singles {
                let _ = writeln!(table, "single\t{lang}\t{}", report_cells(r));
            }
            for (m, pool, r) in &result.top_m {
                let _ = writeln!(table, "top_{m}\t{}\t{}", pool.join(","), report_cells(r));
            }
            println!("language ranking: {}", result.ranking.join(" > "));
        }
    }
    write_file(&a.out, &table)?;
    println!("wrote {} rows to {}", table.lines().count() - 1, a.out.display());
    Ok(())
}

/// Groups bundles by layer strategy. A full `attn_cum` bundle counts as the
/// last layer when the per-layer bundles reach a layer no truncated
/// cumulative bundle covers.
fn layer_bundles(bundles: &[Bundle]) -> CliResult<BTreeMap<(LayerStrategy, u32), RecordSet>> {
    let mut grouped: BTreeMap<(LayerStrategy, u32), Vec<&Bundle>> = BTreeMap::new();
    let mut full_cumulative = Vec::new();
    for b in bundles {
        match (b.header.component, b.header.layer) {
            (ComponentKind::AttnLayer(l), _) => grouped.entry((LayerStrategy::PerLayer, l)).or_default().push(b),
            (ComponentKind::AttnCumulative, Some(l)) => {
                grouped.entry((LayerStrategy::Cumulative, l)).or_default().push(b)
            }
            (ComponentKind::AttnCumulative, None) => full_cumulative.push(b),
            _ => {}
        }
    }
    if !full_cumulative.is_empty() {
        let top = grouped
            .keys()
            .filter(|(s, _)| *s == LayerStrategy::PerLayer)
            .map(|(_, l)| *l)
            .max();
        if let Some(top) = top.filter(|t| !grouped.contains_key(&(LayerStrategy::Cumulative, *t))) {
            grouped.insert((LayerStrategy::Cumulative, top), full_cumulative);
        }
    }
    let mut out = BTreeMap::new();
    for (key, group) in grouped {
        for b in &group[1..] {
            check_compatible(&group[0].header, &b.header)?;
        }
        out.insert(key, record_set(group.iter().flat_map(|b| b.records.iter().cloned()))?);
    }
    Ok(out)
}

fn rank(a: RankArgs) -> CliResult {
    let mut scores: BTreeMap<Language, Option<f64>> = BTreeMap::new();
    for path in &a.reports {
        let text = String::from_utf8_lossy(&read_file(path)?).into_owned();
        let report = EvalReport::from_json(&text)?;
        let pool = &report.config_echo.language_pool;
        if pool.len() != 1 {
            return Err(CliError::Usage(format!(
                "{} is not a single-language report (pool {})",
                path.display(),
                pool.join(",")
            )));
        }
        if scores.insert(pool[0].clone(), report.spearman_x100).is_some() {
            return Err(CliError::Usage(format!("language `{}` reported twice", pool[0])));
        }
    }
    let ranked = rank_languages(&scores)?;
    let mut table = String::from("rank\tlanguage\tspearman_x100\n");
    for (i, lang) in ranked.iter().enumerate() {
        let line = format!("{}\t{lang}\t{}", i + 1, fmt_score(scores[lang]));
        println!("{line}");
        table.push_str(&line);
        table.push('\n');
    }
    if let Some(m) = a.top_m {
        println!("pool: {}", select_top_m(&ranked, m)?.join(","));
    }
    if let Some(out) = &a.out {
        write_file(out, &table)?;
    }
    Ok(())
}

fn index_build(a: IndexBuildArgs) -> CliResult {
    let bundles = load_bundles(&a.bundle)?;
    let (header, records) = select_records(&bundles, a.sim.component)?;
    let config = similarity_config(&a.sim, header.component, &records)?;
    let records: Vec<MultilingualRecord> = records.into_values().collect();
    let index = SimilarityIndex::build(&records, &config)?;
    index.save(&a.paths.index, &a.paths.sets, &header)?;
    println!("indexed {} texts (k {}, pool {})", index.len(), config.k, config.language_pool.join(","));
    Ok(())
}

fn index_insert(a: IndexInsertArgs) -> CliResult {
    let (mut index, header) = SimilarityIndex::load(&a.paths.index, &a.paths.sets)?;
    let bundles = load_bundles(&a.bundle)?;
    let (incoming, records) = select_records(&bundles, Some(index.config().component))?;
    check_compatible(&header, &incoming)?;
    for r in records.values() {
        index.insert(r)?;
    }
    index.save(&a.paths.index, &a.paths.sets, &header)?;
    println!("inserted {} texts, index now holds {}", records.len(), index.len());
    Ok(())
}

fn index_query(a: IndexQueryArgs) -> CliResult {
    let (index, header) = SimilarityIndex::load(&a.paths.index, &a.paths.sets)?;
    let bundles = load_bundles(std::slice::from_ref(&a.query))?;
    let (incoming, records) = select_records(&bundles, Some(index.config().component))?;
    check_compatible(&header, &incoming)?;
    let mut table = String::from("query\trank\ttext_id\tscore\tjoint_set_size\n");
    for (qid, record) in &records {
        for (i, hit) in index.query(record, index.config(), a.top_n)?.iter().enumerate() {
            let _ = writeln!(
                table,
                "{qid}\t{}\t{}\t{:.6}\t{}",
                i + 1,
                hit.text_id,
                hit.score,
                hit.joint_set_size
            );
        }
    }
    write_file(&a.out, &table)?;
    println!("answered {} queries against {} entries", records.len(), index.len());
    Ok(())
}

fn validate(a: ValidateArgs) -> CliResult {
    match read_bundle(&a.path) {
        Ok(b) => {
            println!(
                "valid: {} records, dim {}, component {}",
                b.records.len(),
                b.header.dim,
                b.header.component
            );
            Ok(())
        }
        Err(e @ DysemError::Io { .. }) => Err(e.into()),
        Err(e) => Err(CliError::CheckFailed(format!("invalid bundle: {e}"))),
    }
}

fn synth_cmd(a: SynthArgs) -> CliResult {
    fs::create_dir_all(&a.out).map_err(|e| DysemError::io(&a.out, e))?;
    match a.preset {
        Preset::Planted => {
            let spec = PlantedSpec {
                seed: a.seed.unwrap_or(synth::PLANTED_SEED),
                ..PlantedSpec::default()
            };
            let bench = synth::planted_benchmark(&spec)?;
            let header = BundleHeader::new(format!("planted-d{}", spec.dim), spec.dim, ComponentKind::AttnCumulative);
            write_bundle(a.out.join("planted.jsonl"), &header, &bench.records)?;
            write_file(&a.out.join("pairs.tsv"), &format_pairs_tsv(&bench.pairs))?;
            let mut sets = String::new();
            for (id, idx) in &bench.planted_sets {
                let line = serde_json::json!({ "indices": idx, "text_id": id });
                let _ = writeln!(sets, "{line}");
            }
            write_file(&a.out.join("planted_sets.jsonl"), &sets)?;
            println!(
                "planted benchmark: {} texts, {} pairs, seed {} -> {}",
                bench.records.len(),
                bench.pairs.len(),
                spec.seed,
                a.out.display()
            );
        }
        Preset::Tinylm => {
            let defaults = TinyFixtureSpec::default();
            let seed = a.seed.unwrap_or(synth::TINYLM_SEED);
            let spec = TinyFixtureSpec {
                model: TinyLmConfig { seed, ..defaults.model },
                seed,
                ..defaults
            };
            let fixture = synth::tinylm_fixture(&spec)?;
            for (header, records) in &fixture.bundles {
                let name = match (header.component, header.layer) {
                    (ComponentKind::AttnLayer(l), _) => format!("attn_layer{l}.jsonl"),
                    (c, Some(l)) => format!("{}_l{l}.jsonl", c.tag()),
                    (c, None) => format!("{}.jsonl", c.tag()),
                };
                write_bundle(a.out.join(name), header, records)?;
            }
            write_file(&a.out.join("pairs.tsv"), &format_pairs_tsv(&fixture.pairs))?;
            println!(
                "tinylm fixture: {} bundles, {} pairs, seed {} -> {}",
                fixture.bundles.len(),
                fixture.pairs.len(),
                seed,
                a.out.display()
            );
        }
    }
    Ok(())
}
