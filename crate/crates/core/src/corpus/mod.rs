//! Case records, dataset splits and the corpus triage pipeline (batch
//! scoring, ranking, percentile bands, annotation sampling, calibration).

mod calibration;
mod scoring;
pub mod synth;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use calibration::{
    calibrate, read_annotations, sample_for_annotation, write_annotations, BandSample, BandStat, CalibrationReport,
    PercentileBand,
};
pub use scoring::{batch_score, count_above, rank, read_scored_csv, write_scored_csv, BatchOutcome, ScoreFailure, ScoredCase};

use crate::error::{Error, Result};

/// One case: identifier, raw text and optional label and tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<String>>,
}

impl CaseRecord {
    pub fn new(case_id: impl Into<String>, text: impl Into<String>) -> Self {
        CaseRecord {
            case_id: case_id.into(),
            text: text.into(),
            label: None,
            tags: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

fn check_unique(records: &[CaseRecord]) -> Result<()> {
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.case_id.as_str()) {
            return Err(Error::DuplicateId(r.case_id.clone()));
        }
    }
    Ok(())
}

/// Parses line-delimited JSON records.
pub fn parse_records<R: BufRead>(reader: R) -> Result<Vec<CaseRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("corpus", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CaseRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        if record.case_id.is_empty() {
            return Err(Error::MalformedRecord {
                line: i + 1,
                message: "empty case_id".into(),
            });
        }
        if record.text.trim().is_empty() {
            return Err(Error::MalformedRecord {
                line: i + 1,
                message: format!("case {:?} has empty text", record.case_id),
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Reads either a line-delimited record file or a directory of plain-text
/// files (one case per file, id = file stem).
pub fn ingest(path: &Path) -> Result<Vec<CaseRecord>> {
    let records = if path.is_dir() {
        let mut entries: Vec<_> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::io(path, e))?;
        entries.sort_by_key(|e| e.file_name());
        let mut records = Vec::new();
        for entry in entries {
            let p = entry.path();
            let hidden = entry.file_name().to_string_lossy().starts_with('.');
            if hidden || !p.is_file() {
                continue;
            }
            let Some(stem) = p.file_stem().map(|s| s.to_string_lossy().into_owned()) else {
                continue;
            };
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            if text.trim().is_empty() {
                return Err(Error::MalformedRecord {
                    line: 0,
                    message: format!("{} is empty", p.display()),
                });
            }
            records.push(CaseRecord::new(stem, text));
        }
        records
    } else {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        parse_records(BufReader::new(file))?
    };
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    check_unique(&records)?;
    Ok(records)
}

pub fn write_records<W: Write>(records: &[CaseRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Stratified, seeded train/test split.
///
/// The training set holds `round(train_fraction · N)` records; each class
/// contributes its proportional share, with leftover slots going to the
/// classes with the largest fractional remainders (then class order), so
/// each class is within one record of its exact share.
pub fn split(records: &[CaseRecord], train_fraction: f64, seed: u64) -> Result<(Vec<CaseRecord>, Vec<CaseRecord>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: BTreeMap<&str, Vec<&CaseRecord>> = BTreeMap::new();
    for r in records {
        let label = r.label.as_deref().ok_or_else(|| {
            Error::InvalidArgument(format!("case {:?} has no label", r.case_id))
        })?;
        by_class.entry(label).or_default().push(r);
    }
    if let Some((label, _)) = by_class.iter().find(|(_, v)| v.len() < 2) {
        return Err(Error::InvalidArgument(format!("class {label:?} has fewer than 2 records")));
    }

    let total = (train_fraction * records.len() as f64).round() as usize;
    let exact: Vec<f64> = by_class.values().map(|v| train_fraction * v.len() as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut leftover = total.saturating_sub(quota.iter().sum());
    let mut by_remainder: Vec<usize> = (0..quota.len()).collect();
    by_remainder.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    for &c in by_remainder.iter().cycle().take(quota.len() * 2) {
        if leftover == 0 {
            break;
        }
        if quota[c] < by_class.values().nth(c).map_or(0, |v| v.len()) {
            quota[c] += 1;
            leftover -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(total);
    let mut test = Vec::with_capacity(records.len() - total);
    for (members, &n_train) in by_class.values().zip(&quota) {
        let mut members: Vec<&CaseRecord> = members.clone();
        members.shuffle(&mut rng);
        train.extend(members[..n_train].iter().map(|r| (*r).clone()));
        test.extend(members[n_train..].iter().map(|r| (*r).clone()));
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok((train, test))
}
