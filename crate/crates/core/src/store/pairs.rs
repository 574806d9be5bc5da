//! Evaluation pairs as tab-separated `gold<TAB>text_id_a<TAB>text_id_b`.
//!
//! Blank lines and lines starting with `#` are skipped. A pair's id is the
//! 0-based ordinal of its line in the file.

use std::fs;
use std::path::Path;

use crate::error::{DysemError, Result};
use crate::eval::EvalPair;

pub fn load_pairs_tsv(path: impl AsRef<Path>) -> Result<Vec<EvalPair>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DysemError::io(path, e))?;
    parse_pairs_tsv(&text)
}

pub fn parse_pairs_tsv(text: &str) -> Result<Vec<EvalPair>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |detail: String| DysemError::Parse { line: i + 1, detail };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(parse_err(format!("expected 3 tab-separated columns, found {}", cols.len())));
        }
        let gold: f64 = cols[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("gold score `{}` is not a number", cols[0])))?;
        if !gold.is_finite() {
            return Err(parse_err(format!("gold score `{}` is not finite", cols[0])));
        }
        let (a, b) = (cols[1].trim(), cols[2].trim());
        if a.is_empty() || b.is_empty() {
            return Err(parse_err("empty text id".into()));
        }
        pairs.push(EvalPair::new(i.to_string(), a, b, gold)?);
    }
    Ok(pairs)
}

/// Writes pairs back out in the same format.
pub fn format_pairs_tsv(pairs: &[EvalPair]) -> String {
    pairs
        .iter()
        .map(|p| format!("{}\t{}\t{}\n", p.gold, p.text_id_a, p.text_id_b))
        .collect()
}
