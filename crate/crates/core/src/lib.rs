//! Document classification with subspace learning vector quantization.
//!
//! Documents become orthonormal bases of their dominant word-embedding
//! directions; each class is represented by learned multi-vector prototypes
//! compared through a relevance-weighted chordal distance over principal
//! angles. Around the classifier sit the pieces needed to triage a large
//! case-law corpus: probability scoring, ranking, percentile calibration and
//! per-word explanations.

pub mod corpus;
pub mod embedding;
mod error;
pub mod explain;
pub mod linalg;
pub mod lvq;
pub mod pipeline;
pub mod subspace;

pub use error::{Error, Result};
