use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: file is empty")]
    EmptyFile { path: PathBuf },

    #[error("line {line}: malformed number {token:?}")]
    MalformedFloat { line: usize, token: String },

    #[error("line {line}: non-finite component in vector for {word:?}")]
    NonFinite { line: usize, word: String },

    #[error("{context}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("document {doc_id:?} has no embeddable tokens")]
    EmptyDocument { doc_id: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("basis is not orthonormal (max |BᵀB - I| = {residual:e})")]
    NotOrthonormal { residual: f64 },

    #[error("degenerate sample: both distances are zero")]
    DegenerateSample,

    #[error("class {label:?} has no examples")]
    EmptyClass { label: String },

    #[error("label {0:?} is not one of the model's classes")]
    UnknownLabel(String),

    #[error("model is not binary for positive label {positive:?} (classes: {classes:?})")]
    NotBinary {
        positive: String,
        classes: Vec<String>,
    },

    #[error(
        "non-finite gradient at epoch {epoch}, example {example} ({doc_id:?}): d+ = {d_plus}, d- = {d_minus}"
    )]
    NonFiniteGradient {
        epoch: usize,
        example: usize,
        doc_id: String,
        d_plus: f64,
        d_minus: f64,
    },

    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("duplicate case id {0:?}")]
    DuplicateId(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("band {band} holds {population} cases, cannot sample {requested}")]
    BandUnderpopulated {
        band: String,
        population: usize,
        requested: usize,
    },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("document {doc_id:?}: {source}")]
    InDocument {
        doc_id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_document(doc_id: &str, err: Error) -> Self {
        match err {
            // already carries the id
            e @ (Error::EmptyDocument { .. } | Error::InDocument { .. }) => e,
            e => Error::InDocument {
                doc_id: doc_id.to_string(),
                source: Box::new(e),
            },
        }
    }

    /// Short machine-parsable category used by the command line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } | Error::EmptyFile { .. } => "io",
            Error::MalformedFloat { .. }
            | Error::NonFinite { .. }
            | Error::MalformedRecord { .. }
            | Error::DuplicateId(_)
            | Error::EmptyCorpus => "input",
            Error::DimensionMismatch { .. } => "dimension",
            Error::EmptyDocument { .. } => "empty-document",
            Error::InvalidArgument(_)
            | Error::UnknownLabel(_)
            | Error::NotBinary { .. }
            | Error::EmptyClass { .. }
            | Error::BandUnderpopulated { .. } => "argument",
            Error::NotOrthonormal { .. }
            | Error::DegenerateSample
            | Error::NonFiniteGradient { .. } => "numeric",
            Error::ModelFormat(_) => "model-format",
            Error::InDocument { source, .. } => source.category(),
        }
    }
}
