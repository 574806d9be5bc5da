use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn dysem(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dysem"))
        .args(args)
        .current_dir(dir)
        .env_remove("DYSEM_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Directory holding the tinylm fixture under `t/`.
fn tinylm_dir() -> TempDir {
    let dir = TempDir::new().unwrap();
    let o = dysem(dir.path(), &["synth", "--preset", "tinylm", "--out", "t"]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir
}

fn listing(dir: &Path) -> Vec<PathBuf> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    names
}

#[test]
fn selftest_passes_and_prints_residual() {
    let dir = TempDir::new().unwrap();
    let o = dysem(dir.path(), &["selftest-tinylm"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = stdout(&o).lines().find(|l| l.starts_with("max residual:")).unwrap().to_string();
    let value: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!(value < 1e-5);
}

#[test]
fn validate_bundle_accepts_written_and_rejects_broken() {
    let dir = tinylm_dir();
    for entry in fs::read_dir(dir.path().join("t")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "jsonl") {
            let o = dysem(dir.path(), &["validate-bundle", path.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        }
    }
    let hidden = fs::read_to_string(dir.path().join("t/hidden.jsonl")).unwrap();
    let broken = hidden.replacen("\"values\":[", "\"values\":[1.0,", 1);
    fs::write(dir.path().join("broken.jsonl"), broken).unwrap();
    let o = dysem(dir.path(), &["validate-bundle", "broken.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR 1: "));
    assert_eq!(stderr(&o).lines().count(), 1);
}

#[test]
fn eval_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tinylm_dir();
    let args = |out: &'static str| -> Vec<&'static str> {
        vec!["eval", "--bundle", "t/attn_cum.jsonl", "--pairs", "t/pairs.tsv", "--k", "16", "--out", out]
    };
    assert!(dysem(dir.path(), &args("a.json")).status.success());
    let mut threaded = args("b.json");
    threaded.extend(["--threads", "1"]);
    assert!(dysem(dir.path(), &threaded).status.success());
    let a = fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.json")).unwrap());
    let report = dysem::EvalReport::from_json(&String::from_utf8(a).unwrap()).unwrap();
    assert_eq!(report.n_pairs, 60);
    assert_eq!(report.config_echo.k, 16);
}

#[test]
fn commands_write_only_named_paths() {
    let dir = tinylm_dir();
    let before = listing(dir.path());
    let o = dysem(
        dir.path(),
        &["eval", "--bundle", "t/hidden.jsonl", "--pairs", "t/pairs.tsv", "--k", "8", "--out", "r.json", "--per-pair", "p.tsv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let mut expected = before.clone();
    expected.extend([dir.path().join("p.tsv"), dir.path().join("r.json")]);
    expected.sort();
    assert_eq!(listing(dir.path()), expected);
    assert_eq!(fs::read_to_string(dir.path().join("p.tsv")).unwrap().lines().count(), 61);
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tinylm_dir();
    let run = |args: &[&str]| dysem(dir.path(), args);

    let o = run(&["eval", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("ERROR 2: "));

    let o = run(&["eval", "--bundle", "missing.jsonl", "--pairs", "t/pairs.tsv", "--out", "r.json"]);
    assert_eq!(o.status.code(), Some(4));

    fs::write(dir.path().join("bad.jsonl"), "not json\n").unwrap();
    let o = run(&["eval", "--bundle", "bad.jsonl", "--pairs", "t/pairs.tsv", "--out", "r.json"]);
    assert_eq!(o.status.code(), Some(3));

    let constant: String = fs::read_to_string(dir.path().join("t/pairs.tsv"))
        .unwrap()
        .lines()
        .map(|l| format!("1\t{}\n", l.split_once('\t').unwrap().1))
        .collect();
    fs::write(dir.path().join("flat.tsv"), constant).unwrap();
    let o = run(&["eval", "--bundle", "t/hidden.jsonl", "--pairs", "flat.tsv", "--out", "flat.json"]);
    assert_eq!(o.status.code(), Some(5));
    let report = fs::read_to_string(dir.path().join("flat.json")).unwrap();
    assert!(report.contains("\"spearman_x100\": null"));

    let o = run(&["eval", "--bundle", "t/hidden.jsonl", "--pairs", "t/pairs.tsv", "--out", "r.json", "--k", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tinylm_dir();
    fs::write(dir.path().join("run.conf"), "# eval defaults\nbundle = t/hidden.jsonl\nk = 16\nvector = source\n").unwrap();
    let o = dysem(dir.path(), &["--config", "run.conf", "eval", "--pairs", "t/pairs.tsv", "--out", "r.json", "--k", "8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = dysem::EvalReport::from_json(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report.config_echo.k, 8);
    assert_eq!(report.config_echo.vector_mode, dysem::VectorMode::Source);

    fs::write(dir.path().join("bad.conf"), "kk = 16\n").unwrap();
    let o = dysem(dir.path(), &["--config", "bad.conf", "eval", "--bundle", "t/hidden.jsonl", "--pairs", "t/pairs.tsv", "--out", "r.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kk"));
}

#[test]
fn layer_sweep_has_two_rows_per_layer() {
    let dir = tinylm_dir();
    let mut args = vec!["sweep", "--mode", "layer", "--pairs", "t/pairs.tsv", "--k", "16", "--out", "layers.tsv", "--bundle"];
    let names = [
        "t/attn_cum.jsonl",
        "t/attn_cum_l1.jsonl",
        "t/attn_cum_l2.jsonl",
        "t/attn_cum_l3.jsonl",
        "t/attn_layer1.jsonl",
        "t/attn_layer2.jsonl",
        "t/attn_layer3.jsonl",
        "t/attn_layer4.jsonl",
    ];
    args.extend(names);
    let o = dysem(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("layers.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 8);
    // A^1 = a^1, so the first two rows agree
    assert_eq!(rows[0][2..], rows[1][2..]);
}

#[test]
fn language_reports_feed_ranking() {
    let dir = tinylm_dir();
    for lang in ["de", "en", "fr"] {
        let out = format!("{lang}.json");
        let o = dysem(
            dir.path(),
            &["eval", "--bundle", "t/hidden.jsonl", "--pairs", "t/pairs.tsv", "--k", "16", "--pool", lang, "--out", &out],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = dysem(dir.path(), &["rank-languages", "--reports", "de.json", "en.json", "fr.json", "--top-m", "2", "--out", "rank.tsv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("rank.tsv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(stdout(&o).contains("pool: "));
}

#[test]
fn index_build_insert_query_round_trip() {
    let dir = tinylm_dir();
    let run = |args: &[&str]| {
        let o = dysem(dir.path(), args);
        assert!(o.status.success(), "{:?}: {}", args, stderr(&o));
    };
    run(&["synth", "--preset", "tinylm", "--seed", "8", "--out", "u"]);
    // different model seed: rejected
    let o = dysem(dir.path(), &["index", "build", "--bundle", "t/hidden.jsonl", "u/hidden.jsonl", "--index", "i.jsonl", "--sets", "s.jsonl"]);
    assert_eq!(o.status.code(), Some(2));

    run(&["index", "build", "--bundle", "t/hidden.jsonl", "--index", "i.jsonl", "--sets", "s.jsonl", "--k", "16"]);
    run(&["index", "query", "--query", "t/hidden.jsonl", "--index", "i.jsonl", "--sets", "s.jsonl", "--top-n", "1", "--out", "hits.tsv"]);
    let hits = fs::read_to_string(dir.path().join("hits.tsv")).unwrap();
    for line in hits.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        // identical texts tie at 1.0, so the top hit is the text itself or its twin
        assert_eq!(cols[3], "1.000000");
        assert_eq!(cols[0][..5], cols[2][..5]);
    }
    let o = dysem(dir.path(), &["index", "insert", "--bundle", "t/hidden.jsonl", "--index", "i.jsonl", "--sets", "s.jsonl"]);
    assert_eq!(o.status.code(), Some(3), "re-inserting ids is a duplicate");
}

#[test]
fn planted_preset_is_reproducible() {
    let dir = TempDir::new().unwrap();
    assert!(dysem(dir.path(), &["synth", "--preset", "planted", "--out", "a"]).status.success());
    assert!(dysem(dir.path(), &["synth", "--preset", "planted", "--out", "b"]).status.success());
    for name in ["planted.jsonl", "pairs.tsv", "planted_sets.jsonl"] {
        assert_eq!(fs::read(dir.path().join("a").join(name)).unwrap(), fs::read(dir.path().join("b").join(name)).unwrap());
    }
    let o = dysem(dir.path(), &["validate-bundle", "a/planted.jsonl"]);
    assert!(o.status.success());
}
