use serde::Serialize;

use super::{classify, ModelState};
use crate::error::{Error, Result};
use crate::subspace::LabeledSubspace;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub label: String,
    pub support: usize,
    /// `None` when nothing was predicted as this class.
    pub precision: Option<f64>,
    /// `None` when the class has no test examples.
    pub recall: Option<f64>,
}

/// Classification summary over a labeled test set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub labels: Vec<String>,
    /// `confusion[t][p]`: examples of true class `t` predicted as `p`.
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
}

impl Metrics {
    /// Tallies `(truth, prediction)` pairs; both must be drawn from `labels`.
    pub fn from_pairs<'a, I>(labels: &[String], pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let position = |l: &str| {
            labels
                .iter()
                .position(|x| x == l)
                .ok_or_else(|| Error::UnknownLabel(l.to_string()))
        };
        let n = labels.len();
        let mut confusion = vec![vec![0usize; n]; n];
        let mut total = 0usize;
        for (truth, predicted) in pairs {
            confusion[position(truth)?][position(predicted)?] += 1;
            total += 1;
        }
        if total == 0 {
            return Err(Error::InvalidArgument("empty test set".into()));
        }
        let correct: usize = (0..n).map(|i| confusion[i][i]).sum();
        let per_class = (0..n)
            .map(|c| {
                let support: usize = confusion[c].iter().sum();
                let predicted: usize = (0..n).map(|t| confusion[t][c]).sum();
                let hit = confusion[c][c] as f64;
                ClassMetrics {
                    label: labels[c].clone(),
                    support,
                    precision: (predicted > 0).then(|| hit / predicted as f64),
                    recall: (support > 0).then(|| hit / support as f64),
                }
            })
            .collect();
        Ok(Metrics {
            labels: labels.to_vec(),
            confusion,
            accuracy: correct as f64 / total as f64,
            per_class,
        })
    }
}

/// Accuracy, confusion counts and per-class precision/recall of the
/// nearest-prototype rule on `test`.
pub fn evaluate(model: &ModelState, test: &[LabeledSubspace]) -> Result<Metrics> {
    let predictions = test
        .iter()
        .map(|x| classify(&x.subspace, model).map(|c| c.label))
        .collect::<Result<Vec<_>>>()?;
    Metrics::from_pairs(
        &model.class_labels,
        test.iter().zip(&predictions).map(|(x, p)| (x.label.as_str(), p.as_str())),
    )
}
