//! `dysem-bundle` JSON Lines files.
//!
//! Line 1 is the header object. Every following line is one rendering:
//!
//! ```text
//! {"is_source":true,"language":"en","text_id":"s1","values":[0.5,-1.25,...]}
//! ```
//!
//! Values are binary32. The writer emits the exact decimal expansion of the
//! binary32 value widened to binary64, so any reader that parses binary64
//! correctly recovers the stored value bit for bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{DysemError, Result};
use crate::vector::{ActivationVector, ComponentKind, Language, MultilingualRecord, VectorMode};

pub const BUNDLE_FORMAT: &str = "dysem-bundle";
pub const BUNDLE_VERSION: u64 = 1;

/// The English prompt template; `{text}` marks where the text goes.
pub const DEFAULT_TEMPLATE: &str = "This sentence: \"{text}\" means in one word:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    /// One English template for every language rendering.
    English,
    /// The template translated into each rendering's language.
    LanguageSpecific,
}

impl PromptMode {
    fn tag(self) -> &'static str {
        match self {
            PromptMode::English => "english",
            PromptMode::LanguageSpecific => "language_specific",
        }
    }

    fn from_tag(s: &str) -> Option<Self> {
        match s {
            "english" => Some(PromptMode::English),
            "language_specific" => Some(PromptMode::LanguageSpecific),
            _ => None,
        }
    }
}

/// Similarity settings an index bundle was built with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub k: usize,
    pub vector_mode: VectorMode,
    pub language_pool: Vec<Language>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleHeader {
    pub model: String,
    pub dim: usize,
    pub component: ComponentKind,
    /// For `AttnLayer` this is the layer itself; for `AttnCumulative` an
    /// optional layer the sum stops at (absent means the last layer).
    pub layer: Option<u32>,
    pub prompt_mode: PromptMode,
    pub template: String,
    /// Present only in persisted similarity indexes.
    pub index: Option<IndexMeta>,
}

impl BundleHeader {
    pub fn new(model: impl Into<String>, dim: usize, component: ComponentKind) -> Self {
        BundleHeader {
            model: model.into(),
            dim,
            component,
            layer: component.layer(),
            prompt_mode: PromptMode::English,
            template: DEFAULT_TEMPLATE.to_string(),
            index: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(DysemError::schema(1, "dim", "must be >= 1"));
        }
        match (self.component, self.layer) {
            (ComponentKind::AttnLayer(l), Some(layer)) if l == layer && l >= 1 => Ok(()),
            (ComponentKind::AttnLayer(_), _) => {
                Err(DysemError::schema(1, "layer", "attn_layer requires a matching layer >= 1"))
            }
            (ComponentKind::AttnCumulative, Some(0)) => Err(DysemError::schema(1, "layer", "layers are 1-based")),
            (ComponentKind::AttnCumulative, _) => Ok(()),
            (_, Some(_)) => Err(DysemError::schema(1, "layer", "only attention components take a layer")),
            (_, None) => Ok(()),
        }
    }

    fn to_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("format".into(), json!(BUNDLE_FORMAT));
        obj.insert("version".into(), json!(BUNDLE_VERSION));
        obj.insert("model".into(), json!(self.model));
        obj.insert("dim".into(), json!(self.dim));
        obj.insert("component".into(), json!(self.component.tag()));
        if let Some(l) = self.layer {
            obj.insert("layer".into(), json!(l));
        }
        obj.insert("prompt_mode".into(), json!(self.prompt_mode.tag()));
        obj.insert("template".into(), json!(self.template));
        if let Some(meta) = &self.index {
            obj.insert("index".into(), serde_json::to_value(meta).expect("index meta serializes"));
        }
        Value::Object(obj)
    }

    fn from_value(value: &Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| DysemError::schema(1, "header", "expected a JSON object"))?;
        const KNOWN: [&str; 9] = [
            "format", "version", "model", "dim", "component", "layer", "prompt_mode", "template", "index",
        ];
        if let Some(k) = obj.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(DysemError::schema(1, k, "unknown header field"));
        }
        let format = get_str(obj, 1, "format")?;
        if format != BUNDLE_FORMAT {
            return Err(DysemError::schema(1, "format", format!("expected \"{BUNDLE_FORMAT}\", got \"{format}\"")));
        }
        let version = get_u64(obj, 1, "version")?;
        if version != BUNDLE_VERSION {
            return Err(DysemError::schema(1, "version", format!("unsupported version {version}")));
        }
        let layer = match obj.get("layer") {
            None | Some(Value::Null) => None,
            Some(v) => Some(
                v.as_u64()
                    .and_then(|l| u32::try_from(l).ok())
                    .ok_or_else(|| DysemError::schema(1, "layer", "expected a non-negative integer"))?,
            ),
        };
        let component_tag = get_str(obj, 1, "component")?;
        let component = ComponentKind::from_tag(component_tag, layer)
            .map_err(|e| DysemError::schema(1, "component", e.to_string()))?;
        let prompt_tag = get_str(obj, 1, "prompt_mode")?;
        let prompt_mode = PromptMode::from_tag(prompt_tag).ok_or_else(|| {
            DysemError::schema(1, "prompt_mode", format!("expected english|language_specific, got \"{prompt_tag}\""))
        })?;
        let index = match obj.get("index") {
            None | Some(Value::Null) => None,
            Some(v) => Some(
                serde_json::from_value(v.clone()).map_err(|e| DysemError::schema(1, "index", e.to_string()))?,
            ),
        };
        let header = BundleHeader {
            model: get_str(obj, 1, "model")?.to_string(),
            dim: usize::try_from(get_u64(obj, 1, "dim")?).map_err(|_| DysemError::schema(1, "dim", "too large"))?,
            component,
            layer,
            prompt_mode,
            template: get_str(obj, 1, "template")?.to_string(),
            index,
        };
        header.validate()?;
        Ok(header)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub header: BundleHeader,
    pub records: Vec<MultilingualRecord>,
}

pub fn write_bundle(path: impl AsRef<Path>, header: &BundleHeader, records: &[MultilingualRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| DysemError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_bundle_to(&mut w, header, records).map_err(|e| match e {
        DysemError::Io { source, .. } => DysemError::io(path, source),
        other => other,
    })?;
    w.flush().map_err(|e| DysemError::io(path, e))
}

pub fn write_bundle_to<W: Write>(mut w: W, header: &BundleHeader, records: &[MultilingualRecord]) -> Result<()> {
    header.validate()?;
    for r in records {
        if r.dim() != header.dim {
            return Err(DysemError::DimMismatch {
                expected: header.dim,
                found: r.dim(),
            });
        }
        if r.component() != header.component {
            return Err(DysemError::ComponentMismatch {
                expected: header.component.to_string(),
                found: r.component().to_string(),
            });
        }
    }
    let io = |e| DysemError::io("<bundle>", e);
    writeln!(w, "{}", header.to_value()).map_err(io)?;
    for r in records {
        for (lang, v) in r.entries() {
            let values: Vec<f64> = v.values().iter().map(|&x| f64::from(x)).collect();
            let line = json!({
                "text_id": r.text_id(),
                "language": lang,
                "is_source": lang == r.source_language(),
                "values": values,
            });
            writeln!(w, "{line}").map_err(io)?;
        }
    }
    Ok(())
}

pub fn read_bundle(path: impl AsRef<Path>) -> Result<Bundle> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| DysemError::io(path, e))?;
    read_bundle_from(BufReader::new(file)).map_err(|e| match e {
        DysemError::Io { source, .. } => DysemError::io(path, source),
        other => other,
    })
}

#[derive(Default)]
struct Pending {
    source: Option<Language>,
    entries: BTreeMap<Language, ActivationVector>,
}

pub fn read_bundle_from<R: BufRead>(reader: R) -> Result<Bundle> {
    let mut header: Option<BundleHeader> = None;
    let mut order: Vec<String> = Vec::new();
    let mut pending: BTreeMap<String, Pending> = BTreeMap::new();

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| DysemError::io("<bundle>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line)
            .map_err(|e| DysemError::schema(lineno, "line", format!("invalid JSON: {e}")))?;
        let Some(h) = &header else {
            if lineno != 1 {
                return Err(DysemError::schema(lineno, "header", "header must be on line 1"));
            }
            header = Some(BundleHeader::from_value(&value)?);
            continue;
        };
        let obj = value
            .as_object()
            .ok_or_else(|| DysemError::schema(lineno, "line", "expected a JSON object"))?;
        if let Some(k) = obj
            .keys()
            .find(|k| !["text_id", "language", "is_source", "values"].contains(&k.as_str()))
        {
            return Err(DysemError::schema(lineno, k, "unknown field"));
        }
        let text_id = get_str(obj, lineno, "text_id")?.to_string();
        let language = get_str(obj, lineno, "language")?.to_string();
        let is_source = obj
            .get("is_source")
            .and_then(Value::as_bool)
            .ok_or_else(|| DysemError::schema(lineno, "is_source", "expected a boolean"))?;
        let raw = obj
            .get("values")
            .and_then(Value::as_array)
            .ok_or_else(|| DysemError::schema(lineno, "values", "expected an array of numbers"))?;
        if raw.len() != h.dim {
            return Err(DysemError::DimMismatch {
                expected: h.dim,
                found: raw.len(),
            });
        }
        let mut values = Vec::with_capacity(raw.len());
        for (pos, v) in raw.iter().enumerate() {
            let x = v
                .as_f64()
                .ok_or_else(|| DysemError::schema(lineno, "values", format!("element {pos} is not a number")))?;
            let narrowed = x as f32;
            if !narrowed.is_finite() {
                return Err(DysemError::schema(lineno, "values", format!("element {pos} is not finite at binary32")));
            }
            values.push(narrowed);
        }
        let vector = ActivationVector::new(values, h.component)
            .map_err(|e| DysemError::schema(lineno, "values", e.to_string()))?;

        let slot = pending.entry(text_id.clone()).or_insert_with(|| {
            order.push(text_id.clone());
            Pending::default()
        });
        if is_source {
            if slot.source.is_some() {
                return Err(DysemError::DuplicateSourceLanguage { text_id });
            }
            slot.source = Some(language.clone());
        }
        if slot.entries.insert(language.clone(), vector).is_some() {
            return Err(DysemError::schema(
                lineno,
                "language",
                format!("text `{text_id}` repeats language `{language}`"),
            ));
        }
    }

    let header = header.ok_or_else(|| DysemError::schema(1, "header", "missing header line"))?;
    let records = order
        .into_iter()
        .map(|id| {
            let p = pending.remove(&id).expect("pending record");
            let source = p
                .source
                .ok_or_else(|| DysemError::schema(0, "is_source", format!("text `{id}` has no source rendering")))?;
            MultilingualRecord::new(id, source, p.entries)
        })
        .collect::<Result<_>>()?;
    Ok(Bundle { header, records })
}

fn get_str<'a>(obj: &'a Map<String, Value>, line: usize, field: &str) -> Result<&'a str> {
    obj.get(field)
        .and_then(Value::as_str)
        .ok_or_else(|| DysemError::schema(line, field, "expected a string"))
}

fn get_u64(obj: &Map<String, Value>, line: usize, field: &str) -> Result<u64> {
    obj.get(field)
        .and_then(Value::as_u64)
        .ok_or_else(|| DysemError::schema(line, field, "expected a non-negative integer"))
}
