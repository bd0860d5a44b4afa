use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{self, BufReader, BufWriter, Write};

use achords::corpus::{
    self, batch_score, calibrate, count_above, rank, read_annotations, read_scored_csv, sample_for_annotation, split,
    synth, write_scored_csv, CaseRecord, PercentileBand, ScoredCase,
};
use achords::embedding::{load_embeddings, EmbeddingTable, StopList};
use achords::explain::{explanation_report, write_impacts_csv};
use achords::lvq::{self, classify, gradcheck, load_model, save_model, score, ModelState, NearestCentroid, TrainConfig};
use achords::pipeline::Pipeline;
use achords::subspace::LabeledSubspace;
use achords::Error;
use log::{info, warn};
use serde::Serialize;

use crate::failure::{Failure, Kind, Outcome};
use crate::manifest::{sha256_file, Manifest};
use crate::settings::{require, Settings};

fn io_failure(what: &std::path::Path, e: io::Error) -> Failure {
    Failure::new(Kind::Io, format!("{}: {e}", what.display()))
}

/// Writes `name` in the output directory through a temporary file and
/// records its checksum.
fn write_output<F>(m: &mut Manifest, name: &str, fill: F) -> Outcome
where
    F: FnOnce(&mut BufWriter<&mut tempfile::NamedTempFile>) -> Outcome,
{
    let path = m.dir().join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(m.dir()).map_err(|e| io_failure(&path, e))?;
    {
        let mut w = BufWriter::new(&mut tmp);
        fill(&mut w)?;
        w.flush().map_err(|e| io_failure(&path, e))?;
    }
    tmp.persist(&path).map_err(|e| io_failure(&path, e.error))?;
    m.record_output(name)
}

fn write_json<T: Serialize>(m: &mut Manifest, name: &str, value: &T) -> Outcome {
    write_output(m, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Failure::new(Kind::Io, e.to_string()))?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

fn load_table(s: &Settings, command: &str) -> Outcome<EmbeddingTable> {
    let path = require(&s.embeddings, "embeddings", command)?;
    let table = load_embeddings(path, None)?;
    info!("loaded {} embeddings of dimension {}", table.len(), table.dim());
    Ok(table)
}

fn load_stoplist(s: &Settings) -> Outcome<StopList> {
    Ok(match s.stopwords.as_deref() {
        None => StopList::default_english(),
        Some("none") => StopList::empty(),
        Some(path) => StopList::load(path.as_ref())?,
    })
}

fn load_records(s: &Settings, command: &str) -> Outcome<Vec<CaseRecord>> {
    if s.corpus.is_empty() {
        return Err(Failure::new(Kind::MissingInput, format!("{command} needs --corpus")));
    }
    let mut records = Vec::new();
    for path in &s.corpus {
        records.extend(corpus::ingest(path)?);
    }
    let mut seen = HashSet::new();
    if let Some(dup) = records.iter().find(|r| !seen.insert(r.case_id.as_str())) {
        return Err(Error::DuplicateId(dup.case_id.clone()).into());
    }
    info!("read {} records", records.len());
    Ok(records)
}

fn load_model_for(s: &Settings, command: &str, table: &EmbeddingTable) -> Outcome<ModelState> {
    let path = require(&s.model, "model", command)?;
    let model = load_model(path)?;
    if model.embedding_dim != table.dim() {
        return Err(Error::DimensionMismatch {
            context: format!("model {} vs embeddings", path.display()),
            expected: model.embedding_dim,
            found: table.dim(),
        }
        .into());
    }
    Ok(model)
}

/// Subspaces of labeled records; records with nothing to embed are skipped.
fn labeled_subspaces(records: &[CaseRecord], pipeline: &Pipeline<'_>) -> Outcome<Vec<LabeledSubspace>> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let label = r
            .label
            .as_ref()
            .ok_or_else(|| Failure::new(Kind::Library("input"), format!("case {:?} has no label", r.case_id)))?;
        match pipeline.prepare(&r.case_id, &r.text) {
            Ok(p) => out.push(LabeledSubspace::new(p.subspace, label.clone())),
            Err(e @ Error::EmptyDocument { .. }) => warn!("skipping: {e}"),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

fn mean_vectors(records: &[CaseRecord], pipeline: &Pipeline<'_>) -> Vec<(nalgebra::DVector<f64>, String)> {
    records
        .iter()
        .filter_map(|r| Some((pipeline.mean(&r.case_id, &r.text).ok()?, r.label.clone()?)))
        .collect()
}

fn write_records_file(m: &mut Manifest, name: &str, records: &[CaseRecord]) -> Outcome {
    write_output(m, name, |w| Ok(corpus::write_records(records, w)?))
}

#[derive(Serialize)]
struct TrainSummary {
    train_cases: usize,
    test_cases: usize,
    train_accuracy: f64,
    test: Option<lvq::Metrics>,
    baseline_test_accuracy: Option<f64>,
}

pub fn train(s: &Settings, m: &mut Manifest) -> Outcome {
    let seed = s.require_seed("train")?;
    let table = load_table(s, "train")?;
    let stop = load_stoplist(s)?;
    let records = load_records(s, "train")?;
    let (train_records, test_records) = split(&records, s.train_fraction, seed)?;
    write_records_file(m, "train.jsonl", &train_records)?;
    write_records_file(m, "test.jsonl", &test_records)?;

    let pipeline = Pipeline::new(&table, &stop, s.d);
    let train_docs = labeled_subspaces(&train_records, &pipeline)?;
    let config = TrainConfig {
        subspace_dim: s.d,
        beta: s.beta,
        distance_kind: s.distance,
        lr_prototypes: s.lr_w,
        lr_relevances: s.lr_lambda,
        epochs: s.epochs,
        per_class: s.per_class,
        seed,
    };
    info!("training on {} documents", train_docs.len());
    let model = lvq::train(&train_docs, &config)?;
    let model_path = m.dir().join("model.lvq");
    save_model(&model, &model_path)?;
    m.model_sha256 = Some(sha256_file(&model_path).map_err(|e| io_failure(&model_path, e))?);
    m.record_output("model.lvq")?;

    write_output(m, "training_log.csv", |w| {
        writeln!(w, "epoch,mean_cost,accuracy,skipped")?;
        for e in &model.training_log {
            writeln!(w, "{},{:e},{},{}", e.epoch, e.mean_cost, e.accuracy, e.skipped)?;
        }
        Ok(())
    })?;

    let train_accuracy = lvq::evaluate(&model, &train_docs)?.accuracy;
    let test_docs = labeled_subspaces(&test_records, &pipeline)?;
    let test = if test_docs.is_empty() { None } else { Some(lvq::evaluate(&model, &test_docs)?) };
    let baseline = NearestCentroid::train(&mean_vectors(&train_records, &pipeline))
        .ok()
        .map(|b| b.accuracy(&mean_vectors(&test_records, &pipeline)));
    let summary = TrainSummary {
        train_cases: train_docs.len(),
        test_cases: test_docs.len(),
        train_accuracy,
        test,
        baseline_test_accuracy: baseline,
    };
    write_json(m, "train_metrics.json", &summary)?;

    let mut out = io::stdout().lock();
    writeln!(out, "train accuracy {train_accuracy:.4}")?;
    if let Some(t) = &summary.test {
        writeln!(out, "test accuracy {:.4}", t.accuracy)?;
    }
    if let Some(b) = baseline {
        writeln!(out, "nearest-centroid test accuracy {b:.4}")?;
    }
    writeln!(out, "model {}", model_path.display())?;
    Ok(())
}

pub fn evaluate(s: &Settings, m: &mut Manifest) -> Outcome {
    let table = load_table(s, "evaluate")?;
    let model = load_model_for(s, "evaluate", &table)?;
    let stop = load_stoplist(s)?;
    let records = load_records(s, "evaluate")?;
    let pipeline = Pipeline::new(&table, &stop, model.subspace_dim);
    let docs = labeled_subspaces(&records, &pipeline)?;
    let metrics = lvq::evaluate(&model, &docs)?;
    write_json(m, "metrics.json", &metrics)?;

    let mut out = io::stdout().lock();
    writeln!(out, "accuracy {:.4}", metrics.accuracy)?;
    writeln!(out, "confusion (rows = true, columns = predicted): {}", metrics.labels.join(" "))?;
    for (label, row) in metrics.labels.iter().zip(&metrics.confusion) {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        writeln!(out, "  {label}: {}", cells.join(" "))?;
    }
    let show = |x: Option<f64>| x.map_or("undefined".to_string(), |v| format!("{v:.4}"));
    for c in &metrics.per_class {
        writeln!(
            out,
            "{}: support {} precision {} recall {}",
            c.label,
            c.support,
            show(c.precision),
            show(c.recall)
        )?;
    }
    Ok(())
}

pub fn predict(s: &Settings, m: &mut Manifest) -> Outcome {
    let table = load_table(s, "predict")?;
    let model = load_model_for(s, "predict", &table)?;
    let stop = load_stoplist(s)?;
    let records = load_records(s, "predict")?;
    let pipeline = Pipeline::new(&table, &stop, model.subspace_dim);
    let positive = s.positive_label.as_deref().filter(|_| model.is_binary());

    let mut rows = Vec::with_capacity(records.len());
    for r in &records {
        let prepared = match pipeline.prepare(&r.case_id, &r.text) {
            Ok(p) => p,
            Err(e @ Error::EmptyDocument { .. }) => {
                warn!("skipping: {e}");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let c = classify(&prepared.subspace, &model)?;
        let sc = positive.map(|p| score(&prepared.subspace, &model, p)).transpose()?;
        rows.push((r.case_id.clone(), c.label, sc));
    }
    let render = |w: &mut dyn Write| -> io::Result<()> {
        writeln!(w, "case_id,predicted_label,score")?;
        for (id, label, sc) in &rows {
            let sc = sc.map_or(String::new(), |v| format!("{v:.16e}"));
            writeln!(w, "{id},{label},{sc}")?;
        }
        Ok(())
    };
    write_output(m, "predictions.csv", |w| Ok(render(w)?))?;
    render(&mut io::stdout().lock())?;
    Ok(())
}

pub fn explain(s: &Settings, m: &mut Manifest) -> Outcome {
    let table = load_table(s, "explain")?;
    let model = load_model_for(s, "explain", &table)?;
    let stop = load_stoplist(s)?;
    let records = load_records(s, "explain")?;
    let pipeline = Pipeline::new(&table, &stop, model.subspace_dim);

    let mut reports = Vec::with_capacity(records.len());
    for r in &records {
        match explanation_report(r, &pipeline, &model, s.top_k, s.positive_label.as_deref()) {
            Ok(rep) => reports.push(rep),
            Err(e) if e.category() == "empty-document" => warn!("skipping: {e}"),
            Err(e) => return Err(e.into()),
        }
    }
    write_output(m, "explanations.jsonl", |w| {
        for rep in &reports {
            writeln!(w, "{}", rep.to_json_line())?;
        }
        Ok(())
    })?;
    write_output(m, "impacts.csv", |w| Ok(write_impacts_csv(&reports, w)?))?;
    let mut out = io::stdout().lock();
    for rep in &reports {
        writeln!(out, "{}", rep.to_json_line())?;
    }
    Ok(())
}

pub fn score_corpus(s: &Settings, m: &mut Manifest) -> Outcome {
    let table = load_table(s, "score-corpus")?;
    let model = load_model_for(s, "score-corpus", &table)?;
    let positive = require(&s.positive_label, "positive-label", "score-corpus")?;
    let stop = load_stoplist(s)?;
    let records = load_records(s, "score-corpus")?;
    let pipeline = Pipeline::new(&table, &stop, model.subspace_dim);

    let outcome = batch_score(&records, &pipeline, &model, positive)?;
    let ranked = rank(outcome.scored);
    write_output(m, "scores.csv", |w| Ok(write_scored_csv(&ranked, w)?))?;
    write_output(m, "failures.jsonl", |w| {
        for f in &outcome.failures {
            serde_json::to_writer(&mut *w, f).map_err(|e| Failure::new(Kind::Io, e.to_string()))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })?;
    let above = count_above(&ranked, s.threshold);
    let mut out = io::stdout().lock();
    writeln!(out, "scored {}", ranked.len())?;
    writeln!(out, "failed {}", outcome.failures.len())?;
    writeln!(out, "above {} {above}", s.threshold)?;
    Ok(())
}

fn read_scores(s: &Settings, command: &str) -> Outcome<Vec<ScoredCase>> {
    let path = require(&s.scores, "scores", command)?;
    let file = fs::File::open(path).map_err(|e| io_failure(path, e))?;
    Ok(read_scored_csv(BufReader::new(file))?)
}

pub fn rank_scores(s: &Settings, m: &mut Manifest) -> Outcome {
    let ranked = rank(read_scores(s, "rank")?);
    write_output(m, "ranked.csv", |w| Ok(write_scored_csv(&ranked, w)?))?;
    info!("{} of {} cases score above {}", count_above(&ranked, s.threshold), ranked.len(), s.threshold);
    write_scored_csv(&ranked, io::stdout().lock())?;
    Ok(())
}

#[derive(Serialize)]
struct SampledCase<'a> {
    band: String,
    case_id: &'a str,
    score: f64,
    percentile: f64,
}

pub fn sample(s: &Settings, m: &mut Manifest) -> Outcome {
    let seed = s.require_seed("sample")?;
    let ranked = rank(read_scores(s, "sample")?);
    let bands = PercentileBand::parse_list(&s.bands)?;
    let samples = sample_for_annotation(&ranked, &bands, s.per_band, seed)?;
    let by_id: BTreeMap<&str, &ScoredCase> = ranked.iter().map(|c| (c.case_id.as_str(), c)).collect();
    write_output(m, "sample.jsonl", |w| {
        for b in &samples {
            for id in &b.case_ids {
                let case = by_id[id.as_str()];
                let row = SampledCase {
                    band: b.band.to_string(),
                    case_id: id,
                    score: case.score,
                    percentile: case.percentile,
                };
                serde_json::to_writer(&mut *w, &row).map_err(|e| Failure::new(Kind::Io, e.to_string()))?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    })?;
    let mut out = io::stdout().lock();
    for b in &samples {
        writeln!(out, "band {} population {} sampled {}", b.band, b.population, b.case_ids.len())?;
    }
    Ok(())
}

pub fn calibrate_bands(s: &Settings, m: &mut Manifest) -> Outcome {
    let scored = read_scores(s, "calibrate")?;
    let path = require(&s.annotations, "annotations", "calibrate")?;
    let file = fs::File::open(path).map_err(|e| io_failure(path, e))?;
    let annotations = read_annotations(BufReader::new(file))?;
    let bands = PercentileBand::parse_list(&s.bands)?;
    let report = calibrate(&scored, &annotations, &bands, s.target_precision)?;
    write_json(m, "calibration.json", &report)?;

    let mut out = io::stdout().lock();
    writeln!(out, "band,population,score_min,score_max,annotated,positives,fraction_positive")?;
    let opt = |x: Option<f64>| x.map_or("undefined".to_string(), |v| format!("{v:.4}"));
    for b in &report.bands {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            b.band,
            b.population,
            opt(b.score_min),
            opt(b.score_max),
            b.annotated,
            b.positives,
            opt(b.fraction_positive)
        )?;
    }
    if !report.fractions_monotone {
        warn!("band fractions are not monotone in score");
    }
    if let Some(t) = report.target_precision {
        match report.threshold_score {
            Some(th) => writeln!(out, "threshold for precision {t}: {th:.4}")?,
            None => writeln!(out, "threshold for precision {t}: none")?,
        }
    }
    Ok(())
}

pub fn grad_check(s: &Settings, m: &mut Manifest) -> Outcome {
    let report = gradcheck::run(20, s.seed.unwrap_or(0))?;
    write_json(m, "gradcheck.json", &report)?;
    let verdict = if report.passed { "pass" } else { "fail" };
    writeln!(
        io::stdout().lock(),
        "max relative error {:.3e} (tolerance {:e}): {verdict}",
        report.max_rel_error,
        report.tolerance
    )?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure::new(
            Kind::Numeric,
            format!("gradient check failed: max relative error {:e}", report.max_rel_error),
        ))
    }
}

pub fn synth_data(s: &Settings, m: &mut Manifest) -> Outcome {
    let seed = s.require_seed("synth-data")?;
    let corpus = synth::generate(&synth::SynthConfig {
        seed,
        ..synth::SynthConfig::default()
    })?;
    corpus.write_to(m.dir())?;
    for name in ["embeddings.txt", "corpus.jsonl", "planted.json"] {
        m.record_output(name)?;
    }
    let mut out = io::stdout().lock();
    writeln!(out, "words {}", corpus.table.len())?;
    writeln!(out, "documents {}", corpus.records.len())?;
    writeln!(out, "written to {}", m.dir().display())?;
    Ok(())
}
