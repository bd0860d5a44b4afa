use std::io::{Read, Write};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CaseRecord;
use crate::error::{Error, Result};
use crate::lvq::{classify, score_with_distances, ModelState};
use crate::pipeline::Pipeline;

/// One scored document. `percentile` is filled in by [`rank`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCase {
    pub case_id: String,
    pub score: f64,
    pub percentile: f64,
    pub predicted_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreFailure {
    pub case_id: String,
    pub category: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct BatchOutcome {
    /// In input order.
    pub scored: Vec<ScoredCase>,
    /// Records that could not be scored (e.g. no embeddable tokens).
    pub failures: Vec<ScoreFailure>,
}

fn score_one(record: &CaseRecord, pipeline: &Pipeline<'_>, model: &ModelState, positive_label: &str) -> Result<ScoredCase> {
    let prepared = pipeline.prepare(&record.case_id, &record.text)?;
    let c = classify(&prepared.subspace, model)?;
    let score = score_with_distances(model, &c.distances, positive_label)?;
    Ok(ScoredCase {
        case_id: record.case_id.clone(),
        score,
        percentile: 0.0,
        predicted_label: c.label,
    })
}

/// Scores every record in parallel. Per-record failures are collected,
/// not fatal; a model that is not binary for `positive_label` is.
pub fn batch_score(records: &[CaseRecord], pipeline: &Pipeline<'_>, model: &ModelState, positive_label: &str) -> Result<BatchOutcome> {
    if !model.is_binary() || !model.class_labels.iter().any(|l| l == positive_label) {
        return Err(Error::NotBinary {
            positive: positive_label.to_string(),
            classes: model.class_labels.clone(),
        });
    }
    if pipeline.table.dim() != model.embedding_dim {
        return Err(Error::DimensionMismatch {
            context: "embedding table vs model".into(),
            expected: model.embedding_dim,
            found: pipeline.table.dim(),
        });
    }
    let results: Vec<Result<ScoredCase>> = records
        .par_iter()
        .map(|r| score_one(r, pipeline, model, positive_label))
        .collect();

    let mut outcome = BatchOutcome::default();
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(s) => outcome.scored.push(s),
            Err(e) => {
                warn!("skipping {:?}: {e}", record.case_id);
                outcome.failures.push(ScoreFailure {
                    case_id: record.case_id.clone(),
                    category: e.category().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(outcome)
}

/// Sorts by (score descending, case id ascending) and sets each case's
/// percentile to 100 · (cases with a strictly lower score) / total.
pub fn rank(mut scored: Vec<ScoredCase>) -> Vec<ScoredCase> {
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.case_id.cmp(&b.case_id)));
    let n = scored.len();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && scored[end].score == scored[start].score {
            end += 1;
        }
        let percentile = 100.0 * (n - end) as f64 / n as f64;
        for s in &mut scored[start..end] {
            s.percentile = percentile;
        }
        start = end;
    }
    scored
}

/// Number of cases scoring strictly above `threshold`.
pub fn count_above(scored: &[ScoredCase], threshold: f64) -> usize {
    scored.iter().filter(|s| s.score > threshold).count()
}

/// Columns: case_id, score (17 significant digits), percentile, predicted_label.
pub fn write_scored_csv<W: Write>(scored: &[ScoredCase], out: W) -> Result<()> {
    let wrap = |e: csv::Error| Error::io("scores.csv", std::io::Error::other(e));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case_id", "score", "percentile", "predicted_label"]).map_err(wrap)?;
    for s in scored {
        w.write_record([
            s.case_id.as_str(),
            &format!("{:.16e}", s.score),
            &format!("{}", s.percentile),
            &s.predicted_label,
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io("scores.csv", e))
}

pub fn read_scored_csv<R: Read>(input: R) -> Result<Vec<ScoredCase>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<ScoredCase>().enumerate() {
        let row = row.map_err(|e| Error::MalformedRecord {
            line: i + 2,
            message: e.to_string(),
        })?;
        if !(row.score > 0.0 && row.score < 1.0) {
            return Err(Error::MalformedRecord {
                line: i + 2,
                message: format!("score {} outside (0, 1)", row.score),
            });
        }
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(id: &str, score: f64) -> ScoredCase {
        ScoredCase {
            case_id: id.into(),
            score,
            percentile: 0.0,
            predicted_label: "x".into(),
        }
    }

    #[test]
    fn rank_three() {
        let ranked = rank(vec![sc("b", 0.5), sc("c", 0.1), sc("a", 0.9)]);
        let ids: Vec<_> = ranked.iter().map(|s| s.case_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert!((ranked[0].percentile - 66.666_666_666_666_67).abs() < 1e-9);
        assert!((ranked[1].percentile - 33.333_333_333_333_33).abs() < 1e-9);
        assert_eq!(ranked[2].percentile, 0.0);
    }

    #[test]
    fn ties_share_percentile() {
        let ranked = rank(vec![sc("b", 0.4), sc("a", 0.4), sc("c", 0.4)]);
        assert!(ranked.iter().all(|s| s.percentile == 0.0));
        assert_eq!(ranked[0].case_id, "a");

        let ranked = rank(vec![sc("a", 0.7), sc("b", 0.3), sc("c", 0.3), sc("d", 0.2)]);
        assert_eq!(ranked[1].percentile, 25.0);
        assert_eq!(ranked[2].percentile, 25.0);
        assert_eq!(ranked[0].percentile, 75.0);
    }

    #[test]
    fn rank_idempotent() {
        let once = rank(vec![sc("x", 0.2), sc("y", 0.8), sc("z", 0.2)]);
        assert_eq!(rank(once.clone()), once);
        assert!(rank(Vec::new()).is_empty());
    }

    #[test]
    fn count_above_bounds() {
        let s = vec![sc("a", 0.9), sc("b", 0.5), sc("c", 0.1)];
        assert_eq!(count_above(&s, 1.0), 0);
        assert_eq!(count_above(&s, 0.0), 3);
        assert_eq!(count_above(&s, 0.5), 1);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = rank(vec![sc("a,1", 0.123_456_789_012_345_67), sc("b", 1.0 / 3.0)]);
        let mut buf = Vec::new();
        write_scored_csv(&s, &mut buf).unwrap();
        let back = read_scored_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn csv_rejects_bad_rows() {
        let bad = "case_id,score,percentile,predicted_label\na,1.5,0,x\n";
        assert!(matches!(read_scored_csv(bad.as_bytes()), Err(Error::MalformedRecord { line: 2, .. })));
        let bad = "case_id,score,percentile,predicted_label\na,zz,0,x\n";
        assert!(read_scored_csv(bad.as_bytes()).is_err());
    }
}
