//! Text → subspace preprocessing chain shared by training, scoring and
//! explanation: tokenize, drop stop words, embed, reduce by SVD.

use crate::embedding::{embed, remove_stopwords, tokenize, EmbeddingTable, PreprocessedDoc, StopList, WordMatrix};
use crate::error::{Error, Result};
use crate::subspace::{compute_subspace, mean_vector, Subspace};

/// Every intermediate product for one document.
#[derive(Debug, Clone)]
pub struct PreparedDoc {
    pub doc: PreprocessedDoc,
    pub matrix: WordMatrix,
    pub subspace: Subspace,
}

/// Read-only preprocessing context; cheap to share across threads.
#[derive(Debug, Clone, Copy)]
pub struct Pipeline<'a> {
    pub table: &'a EmbeddingTable,
    pub stoplist: &'a StopList,
    pub subspace_dim: usize,
}

impl<'a> Pipeline<'a> {
    pub fn new(table: &'a EmbeddingTable, stoplist: &'a StopList, subspace_dim: usize) -> Self {
        Pipeline {
            table,
            stoplist,
            subspace_dim,
        }
    }

    /// Tokens → word matrix, without the SVD step.
    pub fn word_matrix(&self, doc_id: &str, text: &str) -> Result<(PreprocessedDoc, WordMatrix)> {
        let mut doc = remove_stopwords(doc_id, tokenize(text), self.stoplist);
        let matrix = embed(&mut doc, self.table)?;
        Ok((doc, matrix))
    }

    pub fn prepare(&self, doc_id: &str, text: &str) -> Result<PreparedDoc> {
        let (doc, matrix) = self.word_matrix(doc_id, text)?;
        let subspace = compute_subspace(&matrix, self.subspace_dim).map_err(|e| Error::in_document(doc_id, e))?;
        Ok(PreparedDoc { doc, matrix, subspace })
    }

    /// Mean word vector, the single-vector representation used by the baseline.
    pub fn mean(&self, doc_id: &str, text: &str) -> Result<nalgebra::DVector<f64>> {
        let (_, matrix) = self.word_matrix(doc_id, text)?;
        mean_vector(&matrix)
    }
}
