use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DysemError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DysemError {
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("component mismatch: expected {expected}, found {found}")]
    ComponentMismatch { expected: String, found: String },

    #[error("language `{language}` missing from record `{text_id}`")]
    MissingLanguage { text_id: String, language: String },

    #[error("no record for text id `{0}`")]
    MissingRecord(String),

    #[error("no bundle for component {0}")]
    MissingBundle(String),

    #[error("inconsistent layer coverage: {0}")]
    InconsistentLayers(String),

    #[error("invalid vector: {0}")]
    InvalidVector(String),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("token id {token} outside vocabulary of size {vocab}")]
    TokenOutOfVocab { token: usize, vocab: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("schema violation at line {line}, field `{field}`: {detail}")]
    SchemaViolation {
        line: usize,
        field: String,
        detail: String,
    },

    #[error("text `{text_id}` has more than one source language")]
    DuplicateSourceLanguage { text_id: String },

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("index is empty")]
    EmptyIndex,

    #[error("duplicate text id `{0}`")]
    DuplicateTextId(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DysemError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DysemError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(line: usize, field: &str, detail: impl Into<String>) -> Self {
        DysemError::SchemaViolation {
            line,
            field: field.to_string(),
            detail: detail.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// 2 usage/configuration, 3 schema, 4 missing data, 5 numeric degeneracy.
    pub fn exit_code(&self) -> i32 {
        use DysemError::*;
        match self {
            InvalidConfig(_) | ConfigMismatch(_) | TokenOutOfVocab { .. } => 2,
            SchemaViolation { .. }
            | Parse { .. }
            | DuplicateSourceLanguage { .. }
            | DimMismatch { .. }
            | ComponentMismatch { .. }
            | InvalidVector(_)
            | InvalidRecord(_)
            | DuplicateTextId(_)
            | InconsistentLayers(_)
            | LengthMismatch { .. }
            | IndexOutOfRange { .. } => 3,
            MissingLanguage { .. }
            | MissingRecord(_)
            | MissingBundle(_)
            | EmptyIndex
            | EmptyInput(_)
            | Io { .. } => 4,
            DegenerateInput(_) => 5,
        }
    }
}
