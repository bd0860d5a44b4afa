use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scoring::{rank, ScoredCase};
use crate::error::{Error, Result};

/// Half-open percentile range `[lo, hi)`; a band ending at 100 is closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentileBand {
    pub lo: f64,
    pub hi: f64,
}

impl PercentileBand {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0..100.0).contains(&lo) || !(hi > lo && hi <= 100.0) {
            return Err(Error::InvalidArgument(format!("invalid percentile band [{lo}, {hi})")));
        }
        Ok(PercentileBand { lo, hi })
    }

    pub fn contains(&self, percentile: f64) -> bool {
        percentile >= self.lo && (percentile < self.hi || (self.hi >= 100.0 && percentile <= self.hi))
    }

    /// The `n` one-point bands at the top of the ranking, highest first.
    pub fn top_percentiles(n: usize) -> Result<Vec<Self>> {
        if n == 0 || n > 100 {
            return Err(Error::InvalidArgument(format!("cannot take the top {n} percentiles")));
        }
        (0..n).map(|i| Self::new(99.0 - i as f64, 100.0 - i as f64)).collect()
    }

    /// Parses `lo-hi` / `lo:hi` lists separated by commas, or `topN`.
    pub fn parse_list(spec: &str) -> Result<Vec<Self>> {
        let spec = spec.trim();
        if let Some(n) = spec.strip_prefix("top") {
            let n = n
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad band list {spec:?}")))?;
            return Self::top_percentiles(n);
        }
        spec.split(',').map(|b| b.trim().parse()).collect()
    }
}

impl FromStr for PercentileBand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad percentile band {s:?} (expected lo-hi)"));
        let (lo, hi) = s.split_once(['-', ':']).ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        Self::new(lo, hi)
    }
}

impl fmt::Display for PercentileBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

fn check_disjoint(bands: &[PercentileBand]) -> Result<()> {
    if bands.is_empty() {
        return Err(Error::InvalidArgument("no percentile bands given".into()));
    }
    let mut sorted = bands.to_vec();
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    for pair in sorted.windows(2) {
        if pair[1].lo < pair[0].hi {
            return Err(Error::InvalidArgument(format!("bands {} and {} overlap", pair[0], pair[1])));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandSample {
    pub band: PercentileBand,
    pub population: usize,
    /// In ranking order.
    pub case_ids: Vec<String>,
}

/// Seeded uniform sample without replacement of `per_band` cases from each band.
pub fn sample_for_annotation(scored: &[ScoredCase], bands: &[PercentileBand], per_band: usize, seed: u64) -> Result<Vec<BandSample>> {
    check_disjoint(bands)?;
    let ranked = rank(scored.to_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(bands.len());
    for band in bands {
        let members: Vec<&ScoredCase> = ranked.iter().filter(|s| band.contains(s.percentile)).collect();
        if per_band > members.len() {
            return Err(Error::BandUnderpopulated {
                band: band.to_string(),
                population: members.len(),
                requested: per_band,
            });
        }
        let mut picked = index::sample(&mut rng, members.len(), per_band).into_vec();
        picked.sort_unstable();
        out.push(BandSample {
            band: *band,
            population: members.len(),
            case_ids: picked.into_iter().map(|i| members[i].case_id.clone()).collect(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandStat {
    pub band: PercentileBand,
    pub population: usize,
    /// Score range of the band's cases; `None` for an empty band.
    pub score_min: Option<f64>,
    pub score_max: Option<f64>,
    pub annotated: usize,
    pub positives: usize,
    /// positives / annotated; `None` when nothing in the band was annotated.
    pub fraction_positive: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    /// Highest-scoring band first.
    pub bands: Vec<BandStat>,
    pub target_precision: Option<f64>,
    /// Lowest band lower-boundary score whose band reaches the target.
    pub threshold_score: Option<f64>,
    /// Whether defined fractions never increase as scores decrease.
    /// Reported only.
    pub fractions_monotone: bool,
}

/// Fraction of annotated-positive cases per band and, for a target
/// precision, the score threshold it implies.
pub fn calibrate(
    scored: &[ScoredCase],
    annotations: &BTreeMap<String, bool>,
    bands: &[PercentileBand],
    target_precision: Option<f64>,
) -> Result<CalibrationReport> {
    check_disjoint(bands)?;
    if let Some(t) = target_precision {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!("target precision {t} outside [0, 1]")));
        }
    }
    let known: HashSet<&str> = scored.iter().map(|s| s.case_id.as_str()).collect();
    if let Some(id) = annotations.keys().find(|id| !known.contains(id.as_str())) {
        return Err(Error::InvalidArgument(format!("annotated case {id:?} was not scored")));
    }

    let ranked = rank(scored.to_vec());
    let mut ordered = bands.to_vec();
    ordered.sort_by(|a, b| b.lo.total_cmp(&a.lo));

    let stats: Vec<BandStat> = ordered
        .iter()
        .map(|band| {
            let members: Vec<&ScoredCase> = ranked.iter().filter(|s| band.contains(s.percentile)).collect();
            let labels: Vec<bool> = members.iter().filter_map(|s| annotations.get(&s.case_id).copied()).collect();
            let positives = labels.iter().filter(|&&b| b).count();
            BandStat {
                band: *band,
                population: members.len(),
                // ranked order: last member has the lowest score
                score_min: members.last().map(|s| s.score),
                score_max: members.first().map(|s| s.score),
                annotated: labels.len(),
                positives,
                fraction_positive: (!labels.is_empty()).then(|| positives as f64 / labels.len() as f64),
            }
        })
        .collect();

    let threshold_score = target_precision.and_then(|target| {
        stats
            .iter()
            .filter(|s| s.fraction_positive.is_some_and(|f| f >= target))
            .filter_map(|s| s.score_min)
            .reduce(f64::min)
    });
    let defined: Vec<f64> = stats.iter().filter_map(|s| s.fraction_positive).collect();
    let fractions_monotone = defined.windows(2).all(|w| w[1] <= w[0]);

    Ok(CalibrationReport {
        bands: stats,
        target_precision,
        threshold_score,
        fractions_monotone,
    })
}

#[derive(Serialize, Deserialize)]
struct AnnotationLine {
    case_id: String,
    positive: bool,
}

/// Line-delimited `{"case_id": ..., "positive": true|false}` records.
pub fn read_annotations<R: BufRead>(reader: R) -> Result<BTreeMap<String, bool>> {
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("annotations", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationLine = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        if out.insert(rec.case_id.clone(), rec.positive).is_some() {
            return Err(Error::DuplicateId(rec.case_id));
        }
    }
    Ok(out)
}

pub fn write_annotations<W: Write>(annotations: &BTreeMap<String, bool>, mut out: W) -> std::io::Result<()> {
    for (case_id, &positive) in annotations {
        serde_json::to_writer(&mut out, &AnnotationLine { case_id: case_id.clone(), positive })?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
