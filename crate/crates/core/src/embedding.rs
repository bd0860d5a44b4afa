//! Word embeddings, tokenization and the per-document word-vector matrix.
//!
//! The embedding file is the whitespace text format used by GloVe releases:
//! one entry per line, the token followed by `D` decimal floats.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Immutable word → vector map of fixed dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    words: Vec<String>,
    // row-major, one row of length `dim` per word
    data: Vec<f64>,
    source_name: String,
}

impl EmbeddingTable {
    /// Builds a table from `(word, vector)` pairs. Duplicates: last one wins.
    pub fn from_entries<I, S>(source_name: &str, dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        let mut table = EmbeddingTable {
            dim,
            index: HashMap::new(),
            words: Vec::new(),
            data: Vec::new(),
            source_name: source_name.to_string(),
        };
        for (i, (word, vector)) in entries.into_iter().enumerate() {
            let word = word.into();
            if vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: format!("entry {} ({word:?})", i + 1),
                    expected: dim,
                    found: vector.len(),
                });
            }
            if vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { line: i + 1, word });
            }
            table.insert(word, &vector);
        }
        Ok(table)
    }

    /// Returns true when the word was already present (and got overwritten).
    fn insert(&mut self, word: String, vector: &[f64]) -> bool {
        match self.index.get(&word) {
            Some(&row) => {
                self.data[row * self.dim..(row + 1) * self.dim].copy_from_slice(vector);
                true
            }
            None => {
                self.index.insert(word.clone(), self.words.len());
                self.words.push(word);
                self.data.extend_from_slice(vector);
                false
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&row| &self.data[row * self.dim..(row + 1) * self.dim])
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// Words in first-insertion order.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.words
            .iter()
            .zip(self.data.chunks_exact(self.dim))
            .map(|(w, v)| (w.as_str(), v))
    }

    /// Parses the text format from any reader.
    pub fn from_reader<R: BufRead>(
        source_name: &str,
        reader: R,
        expected_dim: Option<usize>,
    ) -> Result<Self> {
        let mut table: Option<EmbeddingTable> = None;
        let mut duplicates = 0usize;
        let mut components = Vec::new();

        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::io(source_name, e))?;
            let mut parts = line.split_ascii_whitespace();
            let Some(word) = parts.next() else {
                continue;
            };
            components.clear();
            for token in parts {
                let value: f64 = token.parse().map_err(|_| Error::MalformedFloat {
                    line: lineno,
                    token: token.to_string(),
                })?;
                if !value.is_finite() {
                    return Err(Error::NonFinite {
                        line: lineno,
                        word: word.to_string(),
                    });
                }
                components.push(value);
            }

            let table = match &mut table {
                Some(t) => t,
                None => {
                    let dim = components.len();
                    if dim == 0 {
                        return Err(Error::DimensionMismatch {
                            context: format!("{source_name} line {lineno}"),
                            expected: expected_dim.unwrap_or(1),
                            found: 0,
                        });
                    }
                    if let Some(expected) = expected_dim {
                        if expected != dim {
                            return Err(Error::DimensionMismatch {
                                context: format!("{source_name} line {lineno}"),
                                expected,
                                found: dim,
                            });
                        }
                    }
                    table.insert(EmbeddingTable {
                        dim,
                        index: HashMap::new(),
                        words: Vec::new(),
                        data: Vec::new(),
                        source_name: source_name.to_string(),
                    })
                }
            };
            if components.len() != table.dim {
                return Err(Error::DimensionMismatch {
                    context: format!("{source_name} line {lineno}"),
                    expected: table.dim,
                    found: components.len(),
                });
            }
            if table.insert(word.to_string(), &components) {
                duplicates += 1;
            }
        }

        if duplicates > 0 {
            warn!("{source_name}: {duplicates} duplicate words, last occurrence kept");
        }
        table.ok_or_else(|| Error::EmptyFile {
            path: source_name.into(),
        })
    }

    /// Writes the table back in the text format. Floats use the shortest
    /// representation that parses back to the identical value.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (word, vector) in self.iter() {
            out.write_all(word.as_bytes())?;
            for x in vector {
                write!(out, " {x}")?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_text(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

/// Loads an embedding file in the whitespace text format.
pub fn load_embeddings(path: &Path, expected_dim: Option<usize>) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    EmbeddingTable::from_reader(&name, BufReader::new(file), expected_dim).map_err(|e| match e {
        Error::EmptyFile { .. } => Error::EmptyFile { path: path.into() },
        e => e,
    })
}

/// Lowercases, splits on whitespace and trims non-alphanumeric characters
/// from both ends of each token. Pure-digit tokens longer than four
/// characters (application numbers, years with suffixes) are discarded.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
            if trimmed.is_empty() {
                return None;
            }
            let token = trimmed.to_lowercase();
            if token.len() > 4 && token.chars().all(|c| c.is_ascii_digit()) {
                return None;
            }
            Some(token)
        })
        .collect()
}

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// Set of words removed before embedding.
#[derive(Debug, Clone, Default)]
pub struct StopList {
    words: HashSet<String>,
}

impl StopList {
    /// One word per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        StopList { words }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    /// The English list bundled with the crate.
    pub fn default_english() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for StopList {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        StopList {
            words: iter.into_iter().map(Into::into).collect(),
        }
    }
}

/// A tokenized document after stop-word and out-of-vocabulary filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedDoc {
    pub doc_id: String,
    pub kept_tokens: Vec<String>,
    pub dropped_stopwords: usize,
    pub dropped_oov: usize,
    /// kept / (kept + dropped_oov); 1 until [`embed`] has run.
    pub coverage: f64,
}

/// Removes stop words, preserving token order.
pub fn remove_stopwords(doc_id: &str, tokens: Vec<String>, stoplist: &StopList) -> PreprocessedDoc {
    let total = tokens.len();
    let kept_tokens: Vec<String> = tokens
        .into_iter()
        .filter(|t| !stoplist.contains(t))
        .collect();
    PreprocessedDoc {
        doc_id: doc_id.to_string(),
        dropped_stopwords: total - kept_tokens.len(),
        kept_tokens,
        dropped_oov: 0,
        coverage: 1.0,
    }
}

/// Column `j` is the embedding of `tokens[j]`.
#[derive(Debug, Clone)]
pub struct WordMatrix {
    pub doc_id: String,
    pub columns: DMatrix<f64>,
    pub tokens: Vec<String>,
}

impl WordMatrix {
    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn len(&self) -> usize {
        self.columns.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.ncols() == 0
    }
}

/// Looks up every kept token. Out-of-vocabulary tokens are dropped from
/// `doc.kept_tokens` and counted in `doc.dropped_oov`.
pub fn embed(doc: &mut PreprocessedDoc, table: &EmbeddingTable) -> Result<WordMatrix> {
    let before = doc.kept_tokens.len();
    doc.kept_tokens.retain(|t| table.contains(t));
    doc.dropped_oov += before - doc.kept_tokens.len();
    let kept = doc.kept_tokens.len();
    doc.coverage = if kept + doc.dropped_oov == 0 {
        0.0
    } else {
        kept as f64 / (kept + doc.dropped_oov) as f64
    };
    if kept == 0 {
        return Err(Error::EmptyDocument {
            doc_id: doc.doc_id.clone(),
        });
    }

    let dim = table.dim();
    let mut columns = DMatrix::zeros(dim, kept);
    for (j, token) in doc.kept_tokens.iter().enumerate() {
        let v = table.get(token).expect("retained tokens are in vocabulary");
        columns.column_mut(j).copy_from_slice(v);
    }
    Ok(WordMatrix {
        doc_id: doc.doc_id.clone(),
        columns,
        tokens: doc.kept_tokens.clone(),
    })
}
