//! Per-word attributions for a classified document.
//!
//! A word's alignment energy with a prototype is the relevance-weighted sum
//! of its squared projections onto the prototype-side principal directions
//! of the (document, prototype) pair. Its impact is the energy for the
//! winning prototype minus the energy for the closest prototype of any
//! other class, so positive values push toward the predicted class.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;

use crate::corpus::CaseRecord;
use crate::embedding::WordMatrix;
use crate::error::{Error, Result};
use crate::lvq::{classify, principal_angles, score, ModelState, PrincipalAngleDecomposition};
use crate::pipeline::Pipeline;
use crate::subspace::Subspace;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WordImpact {
    pub word: String,
    pub impact: f64,
    pub occurrences: usize,
}

fn alignment_energy(word: &DVector<f64>, pa: &PrincipalAngleDecomposition, relevances: &[f64]) -> f64 {
    pa.proto_directions
        .column_iter()
        .zip(relevances)
        .map(|(dir, l)| {
            let p = dir.dot(word);
            l * p * p
        })
        .sum()
}

/// Nearest prototype overall and nearest prototype of a different class.
fn winner_and_competitor(doc: &Subspace, model: &ModelState) -> Result<(usize, usize)> {
    let c = classify(doc, model)?;
    let predicted = &model.prototypes[c.prototype].label;
    let competitor = model
        .nearest_where(&c.distances, |l| l != predicted)
        .ok_or_else(|| Error::InvalidArgument("explanations need at least two classes".into()))?;
    Ok((c.prototype, competitor))
}

/// Impact of every distinct word of `matrix`, in order of first occurrence.
pub fn word_impact(matrix: &WordMatrix, doc: &Subspace, model: &ModelState) -> Result<Vec<WordImpact>> {
    if matrix.is_empty() {
        return Err(Error::EmptyDocument {
            doc_id: matrix.doc_id.clone(),
        });
    }
    let (winner, competitor) = winner_and_competitor(doc, model)?;
    let lam = model.relevances.weights();
    let pa_win = principal_angles(doc, &model.prototypes[winner].basis)?;
    let pa_comp = principal_angles(doc, &model.prototypes[competitor].basis)?;

    let mut order: Vec<WordImpact> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for (j, token) in matrix.tokens.iter().enumerate() {
        let v = matrix.columns.column(j);
        let norm = v.norm();
        let impact = if norm > 0.0 {
            let unit = v / norm;
            alignment_energy(&unit, &pa_win, lam) - alignment_energy(&unit, &pa_comp, lam)
        } else {
            0.0
        };
        match slot.get(token.as_str()) {
            Some(&i) => {
                order[i].impact += impact;
                order[i].occurrences += 1;
            }
            None => {
                slot.insert(token, order.len());
                order.push(WordImpact {
                    word: token.clone(),
                    impact,
                    occurrences: 1,
                });
            }
        }
    }
    Ok(order)
}

/// Sorts by |impact| descending, alphabetical among equal magnitudes.
pub fn sort_impacts(impacts: &mut [WordImpact]) {
    impacts.sort_by(|a, b| {
        b.impact
            .abs()
            .total_cmp(&a.impact.abs())
            .then_with(|| a.word.cmp(&b.word))
    });
}

/// Top-k word attributions with the prediction they explain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplanationReport {
    pub doc_id: String,
    pub predicted_label: String,
    pub runner_up_label: String,
    /// Probability of the positive class when the model is binary and a
    /// positive label was given.
    pub score: Option<f64>,
    pub top_k: usize,
    pub impacts: Vec<WordImpact>,
}

impl ExplanationReport {
    /// Bar-chart data: `(word, signed impact)`.
    pub fn bars(&self) -> Vec<(&str, f64)> {
        self.impacts.iter().map(|w| (w.word.as_str(), w.impact)).collect()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Runs the whole chain for one case and keeps the `k` strongest words.
pub fn explanation_report(
    case: &CaseRecord,
    pipeline: &Pipeline<'_>,
    model: &ModelState,
    k: usize,
    positive_label: Option<&str>,
) -> Result<ExplanationReport> {
    if k == 0 {
        return Err(Error::InvalidArgument("top-k must be at least 1".into()));
    }
    let run = || -> Result<ExplanationReport> {
        let prepared = pipeline.prepare(&case.case_id, &case.text)?;
        let (winner, competitor) = winner_and_competitor(&prepared.subspace, model)?;
        let mut impacts = word_impact(&prepared.matrix, &prepared.subspace, model)?;
        sort_impacts(&mut impacts);
        impacts.truncate(k);
        let score = match positive_label {
            Some(pos) if model.is_binary() => Some(score(&prepared.subspace, model, pos)?),
            _ => None,
        };
        Ok(ExplanationReport {
            doc_id: case.case_id.clone(),
            predicted_label: model.prototypes[winner].label.clone(),
            runner_up_label: model.prototypes[competitor].label.clone(),
            score,
            top_k: k,
            impacts,
        })
    };
    run().map_err(|e| Error::in_document(&case.case_id, e))
}

/// Flat export, one row per (document, word).
pub fn write_impacts_csv<W: Write>(reports: &[ExplanationReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::io("impacts.csv", std::io::Error::other(e));
    w.write_record(["doc_id", "rank", "word", "impact", "occurrences"]).map_err(wrap)?;
    for r in reports {
        for (rank, imp) in r.impacts.iter().enumerate() {
            w.write_record([
                r.doc_id.as_str(),
                &(rank + 1).to_string(),
                &imp.word,
                &format!("{:.16e}", imp.impact),
                &imp.occurrences.to_string(),
            ])
            .map_err(wrap)?;
        }
    }
    w.flush().map_err(|e| Error::io("impacts.csv", e))
}
