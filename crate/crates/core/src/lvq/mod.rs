//! Subspace learning vector quantization with an adaptive, relevance-weighted
//! chordal (or geodesic) distance between a document subspace and
//! multi-vector prototypes.

mod angles;
mod baseline;
mod cost;
mod distance;
pub mod gradcheck;
mod io;
mod metrics;
mod simplex;
mod train;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use angles::{principal_angles, PrincipalAngleDecomposition, ORTHONORMAL_TOLERANCE};
pub use baseline::NearestCentroid;
pub use cost::{cost_term, score_from_distances, sigmoid, CostTerm};
pub use distance::{distance, distance_from_cosines, DistanceKind};
pub use io::{load_model, read_model, save_model, write_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use metrics::{evaluate, ClassMetrics, Metrics};
pub use simplex::project_to_simplex;
pub use train::{init_prototypes, total_cost_and_gradient, train, CostGradient, StepOutcome, TrainConfig, Trainer};

use crate::error::{Error, Result};
use crate::subspace::Subspace;

/// A class representative: an orthonormal D×d basis and its label.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub basis: DMatrix<f64>,
    pub label: String,
}

impl Prototype {
    pub fn new(basis: DMatrix<f64>, label: impl Into<String>) -> Self {
        Prototype {
            basis,
            label: label.into(),
        }
    }
}

/// Non-negative weights over principal-angle indices, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceVector(Vec<f64>);

impl RelevanceVector {
    pub fn uniform(d: usize) -> Self {
        assert!(d > 0, "relevance vector needs at least one entry");
        RelevanceVector(vec![1.0 / d as f64; d])
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("empty relevance vector".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("relevances must be finite and non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("relevances sum to {sum}, not 1")));
        }
        Ok(RelevanceVector(weights))
    }

    /// Projects arbitrary weights onto the simplex.
    pub fn projected(weights: &[f64]) -> Self {
        RelevanceVector(project_to_simplex(weights))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Optimizer settings recorded with a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub lr_prototypes: f64,
    pub lr_relevances: f64,
    pub epochs: usize,
    pub per_class: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 0 is the state before the first update.
    pub epoch: usize,
    pub mean_cost: f64,
    pub accuracy: f64,
    /// Examples skipped as degenerate (both distances zero).
    pub skipped: usize,
}

/// A trained (or initialized) model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub prototypes: Vec<Prototype>,
    pub relevances: RelevanceVector,
    pub embedding_dim: usize,
    pub subspace_dim: usize,
    pub beta: f64,
    pub distance_kind: DistanceKind,
    pub class_labels: Vec<String>,
    pub hyperparams: HyperParams,
    pub training_log: Vec<EpochLog>,
}

impl ModelState {
    /// Checks the structural invariants of a model.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ModelFormat(msg));
        if self.relevances.len() != self.subspace_dim {
            return bad(format!("{} relevances for subspace dimension {}", self.relevances.len(), self.subspace_dim));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("sigmoid slope {} is not positive", self.beta));
        }
        for p in &self.prototypes {
            if p.basis.nrows() != self.embedding_dim || p.basis.ncols() != self.subspace_dim {
                return bad(format!(
                    "prototype is {}x{}, expected {}x{}",
                    p.basis.nrows(),
                    p.basis.ncols(),
                    self.embedding_dim,
                    self.subspace_dim
                ));
            }
            if !self.class_labels.contains(&p.label) {
                return bad(format!("prototype label {:?} is not a model class", p.label));
            }
            if p.basis.iter().any(|x| !x.is_finite()) {
                return bad("non-finite prototype entry".into());
            }
        }
        for label in &self.class_labels {
            if !self.prototypes.iter().any(|p| &p.label == label) {
                return bad(format!("class {label:?} has no prototype"));
            }
        }
        Ok(())
    }

    pub fn is_binary(&self) -> bool {
        self.class_labels.len() == 2
    }

    fn check_doc(&self, doc: &Subspace) -> Result<()> {
        if doc.ambient_dim() != self.embedding_dim {
            return Err(Error::DimensionMismatch {
                context: format!("document {:?}", doc.doc_id),
                expected: self.embedding_dim,
                found: doc.ambient_dim(),
            });
        }
        Ok(())
    }

    /// Distances from `doc` to every prototype, in prototype order.
    pub fn distances(&self, doc: &Subspace) -> Result<Vec<f64>> {
        self.check_doc(doc)?;
        self.prototypes
            .iter()
            .map(|p| distance(doc, p, &self.relevances, self.distance_kind))
            .collect()
    }

    /// Index of the nearest prototype whose label satisfies `keep`; ties go
    /// to the lowest index.
    pub(crate) fn nearest_where(&self, distances: &[f64], keep: impl Fn(&str) -> bool) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, p) in self.prototypes.iter().enumerate() {
            if !keep(&p.label) {
                continue;
            }
            if best.is_none_or(|b| distances[i] < distances[b]) {
                best = Some(i);
            }
        }
        best
    }
}

/// Nearest-prototype decision for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub label: String,
    pub prototype: usize,
    pub distances: Vec<f64>,
}

/// Label of the closest prototype, ties broken by lowest prototype index.
pub fn classify(doc: &Subspace, model: &ModelState) -> Result<Classification> {
    let distances = model.distances(doc)?;
    let winner = model
        .nearest_where(&distances, |_| true)
        .ok_or_else(|| Error::ModelFormat("model has no prototypes".into()))?;
    Ok(Classification {
        label: model.prototypes[winner].label.clone(),
        prototype: winner,
        distances,
    })
}

/// Probability that `doc` belongs to `positive_label` in a two-class model.
pub fn score(doc: &Subspace, model: &ModelState, positive_label: &str) -> Result<f64> {
    if !model.is_binary() || !model.class_labels.iter().any(|l| l == positive_label) {
        return Err(Error::NotBinary {
            positive: positive_label.to_string(),
            classes: model.class_labels.clone(),
        });
    }
    let distances = model.distances(doc)?;
    score_with_distances(model, &distances, positive_label)
}

pub(crate) fn score_with_distances(model: &ModelState, distances: &[f64], positive_label: &str) -> Result<f64> {
    let pos = model
        .nearest_where(distances, |l| l == positive_label)
        .ok_or_else(|| Error::EmptyClass { label: positive_label.to_string() })?;
    let neg = model
        .nearest_where(distances, |l| l != positive_label)
        .ok_or_else(|| Error::EmptyClass { label: "<negative>".into() })?;
    score_from_distances(distances[pos], distances[neg], model.beta)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Two-class model with the given prototype bases (labels "a", "b", ... by index
    /// order supplied in `labels`).
    pub fn model_with(prototypes: Vec<(DMatrix<f64>, &str)>, relevances: Vec<f64>) -> ModelState {
        let dim = prototypes[0].0.nrows();
        let d = prototypes[0].0.ncols();
        let mut class_labels: Vec<String> = prototypes.iter().map(|(_, l)| l.to_string()).collect();
        class_labels.sort();
        class_labels.dedup();
        ModelState {
            prototypes: prototypes.into_iter().map(|(b, l)| Prototype::new(b, l)).collect(),
            relevances: RelevanceVector::from_weights(relevances).unwrap(),
            embedding_dim: dim,
            subspace_dim: d,
            beta: 5.0,
            distance_kind: DistanceKind::Chordal,
            class_labels,
            hyperparams: HyperParams {
                lr_prototypes: 0.05,
                lr_relevances: 0.005,
                epochs: 0,
                per_class: 1,
                seed: 0,
            },
            training_log: Vec::new(),
        }
    }
}
