//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use achords::corpus::{batch_score, count_above, rank, split, synth, CaseRecord, ScoredCase};
use achords::embedding::StopList;
use achords::explain::{sort_impacts, word_impact};
use achords::lvq::{
    self, classify, distance, evaluate, gradcheck, load_model, principal_angles, save_model, score_from_distances,
    DistanceKind, ModelState, NearestCentroid, Prototype, RelevanceVector, TrainConfig, Trainer,
};
use achords::pipeline::Pipeline;
use achords::subspace::{LabeledSubspace, Subspace};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn random_basis(dim: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    gaussian(dim, k, rng).qr().q()
}

fn random_rotation(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    random_basis(n, n, rng)
}

/// Cosines of principal angles as square roots of the eigenvalues of
/// Uᵀ P_W U, descending, padded with zeros up to `len`.
fn eigen_cosines(u: &DMatrix<f64>, w: &DMatrix<f64>, len: usize) -> Vec<f64> {
    let m = u.transpose() * w;
    let gram = &m * m.transpose();
    let mut ev: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().map(|x| x.clamp(0.0, 1.0).sqrt()).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev.resize(len, 0.0);
    ev.truncate(len);
    ev
}

fn oracle_distance(u: &DMatrix<f64>, w: &DMatrix<f64>, lam: &[f64]) -> f64 {
    eigen_cosines(u, w, lam.len()).iter().zip(lam).map(|(c, l)| l * (1.0 - c * c)).sum()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn labeled_subspaces(records: &[CaseRecord], pipeline: &Pipeline<'_>) -> Vec<LabeledSubspace> {
    records
        .iter()
        .map(|r| {
            let prepared = pipeline.prepare(&r.case_id, &r.text).expect("synthetic docs embed");
            LabeledSubspace::new(prepared.subspace, r.label.clone().expect("labeled"))
        })
        .collect()
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let report = match gradcheck::run(20, 2024) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let elapsed = start.elapsed();
    let kinds: Vec<_> = report.cases.iter().map(|c| (c.embedding_dim, c.subspace_dim, c.distance_kind)).collect();
    let covers = [8, 20].iter().all(|&dim| {
        [2, 5].iter().all(|&d| {
            [DistanceKind::Chordal, DistanceKind::Geodesic]
                .iter()
                .all(|&k| kinds.contains(&(dim, d, k)))
        })
    });
    outcome(
        report.max_rel_error < 1e-5 && elapsed < Duration::from_secs(60) && covers && report.cases.len() == 20,
        format!(
            "{} configurations, max relative error {:.3e}, {:.2?}",
            report.cases.len(),
            report.max_rel_error,
            elapsed
        ),
    )
}

fn manifold_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (dim, d) = (20, 5);
    let data: Vec<LabeledSubspace> = (0..40)
        .map(|i| {
            let k = 2 + i % 4;
            let label = if i % 2 == 0 { "neg" } else { "pos" };
            LabeledSubspace::new(Subspace::new(format!("r{i}"), random_basis(dim, k, &mut rng)), label)
        })
        .collect();
    let config = TrainConfig {
        subspace_dim: d,
        per_class: 2,
        lr_prototypes: 0.1,
        lr_relevances: 0.05,
        seed: 3,
        ..TrainConfig::default()
    };
    let mut trainer = match Trainer::new(&data, &config) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let mut worst_residual: f64 = 0.0;
    let mut worst_simplex: f64 = 0.0;
    let mut negative = false;
    for _ in 0..1000 {
        let i = rng.random_range(0..data.len());
        if let Err(e) = trainer.step(i) {
            return outcome(false, format!("error: {e}"));
        }
        let model = trainer.model();
        for p in &model.prototypes {
            let r = (p.basis.transpose() * &p.basis - DMatrix::identity(d, d)).norm();
            worst_residual = worst_residual.max(r);
        }
        let lam = model.relevances.weights();
        negative |= lam.iter().any(|&l| l < 0.0);
        worst_simplex = worst_simplex.max((lam.iter().sum::<f64>() - 1.0).abs());
    }
    outcome(
        worst_residual < 1e-8 && worst_simplex <= 1e-12 && !negative,
        format!("max ‖WᵀW − I‖_F {worst_residual:.3e}, max |Σλ − 1| {worst_simplex:.3e}, negative λ: {negative}"),
    )
}

fn distance_properties() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (any::<u64>(), 3usize..12, 1usize..5, prop_oneof![Just(DistanceKind::Chordal), Just(DistanceKind::Geodesic)]);
    let result = runner.run(&strategy, |(seed, dim, d, kind)| {
        let d = d.min(dim - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(1..=d);
        let u = random_basis(dim, k, &mut rng);
        let w = random_basis(dim, d, &mut rng);
        let raw: Vec<f64> = (0..d).map(|_| rng.random::<f64>() + 0.01).collect();
        let total: f64 = raw.iter().sum();
        let lam = RelevanceVector::from_weights(raw.iter().map(|x| x / total).collect()).unwrap();
        let doc = Subspace::new("u", u.clone());
        let proto = Prototype::new(w.clone(), "p");
        let base = distance(&doc, &proto, &lam, kind).unwrap();

        let q = random_rotation(dim, &mut rng);
        let rotated = distance(&Subspace::new("qu", &q * &u), &Prototype::new(&q * &w, "p"), &lam, kind).unwrap();
        prop_assert!((rotated - base).abs() <= 1e-10, "rotation: {base} vs {rotated}");
        prop_assert!((0.0..=1.0).contains(&base), "range: {base}");

        let uniform = RelevanceVector::uniform(d);
        let same_span = &w * random_rotation(d, &mut rng);
        let zero = distance(&Subspace::new("w", same_span), &proto, &uniform, kind).unwrap();
        prop_assert!(zero <= 1e-10, "equal spans gave {zero}");
        let full = Subspace::new("w", w.clone());
        let mut tilted = w.clone();
        let escape = rng.random_range(0..d);
        let mut outside = gaussian(dim, 1, &mut rng);
        outside -= &w * (w.transpose() * &outside);
        let outside = outside.normalize();
        let angle: f64 = 1e-3;
        let col = tilted.column(escape) * angle.cos() + outside.column(0) * angle.sin();
        tilted.set_column(escape, &col);
        let apart = distance(&full, &Prototype::new(tilted, "t"), &uniform, kind).unwrap();
        prop_assert!(apart > 0.0, "distinct spans gave 0");

        let k_swap = k.min(d);
        let forward = principal_angles(&doc, &w).unwrap().cosines;
        let backward = principal_angles(&Subspace::new("w", w.clone()), &u).unwrap().cosines;
        let diff = max_abs_diff(&forward.as_slice()[..k_swap], &backward.as_slice()[..k_swap]);
        prop_assert!(diff <= 1e-10, "cosine symmetry {diff}");
        Ok(())
    });
    match result {
        Ok(()) => outcome(true, "1000 random cases: rotation, range, zero iff equal span, symmetry"),
        Err(e) => outcome(false, format!("{e}")),
    }
}

/// max and min of ‖P_W v‖ over unit v on the circle spanned by `u`'s two columns.
fn grid_cosines(u: &DMatrix<f64>, w: &DMatrix<f64>, steps: usize) -> (f64, f64) {
    let (mut hi, mut lo) = (f64::MIN, f64::MAX);
    let wt = w.transpose();
    let (a, b) = (u.column(0), u.column(1));
    let (wa, wb) = (&wt * a, &wt * b);
    for s in 0..steps {
        let t = std::f64::consts::PI * s as f64 / steps as f64;
        let norm = (&wa * t.cos() + &wb * t.sin()).norm();
        hi = hi.max(norm);
        lo = lo.min(norm);
    }
    (hi, lo)
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_eigen: f64 = 0.0;
    let mut worst_grid: f64 = 0.0;
    for case in 0..60 {
        let dim = if case % 2 == 0 { 3 } else { 5 };
        let (k, d) = if dim == 3 { (2, 2) } else { (2 + case % 2, 3) };
        let u = random_basis(dim, k, &mut rng);
        let w = random_basis(dim, d, &mut rng);
        let got = principal_angles(&Subspace::new("u", u.clone()), &w).unwrap().cosines;
        let want = eigen_cosines(&u, &w, got.len());
        worst_eigen = worst_eigen.max(max_abs_diff(got.as_slice(), &want));
        if k == 2 {
            let (hi, lo) = grid_cosines(&u, &w, 400_000);
            worst_grid = worst_grid.max((got[0] - hi).abs()).max((got[1] - lo).abs());
        }
    }

    let c = synth::generate(&synth::SynthConfig {
        docs_per_class: 80,
        seed: 9,
        ..synth::SynthConfig::default()
    })
    .unwrap();
    let stop = StopList::empty();
    let pipeline = Pipeline::new(&c.table, &stop, 6);
    let all = labeled_subspaces(&c.records, &pipeline);
    let (train_docs, probe_docs) = all.split_at(60);
    let config = TrainConfig {
        subspace_dim: 6,
        per_class: 2,
        epochs: 5,
        seed: 2,
        ..TrainConfig::default()
    };
    let model = lvq::train(train_docs, &config).unwrap();
    let lam = model.relevances.weights();
    let mut mismatches = 0;
    for doc in &probe_docs[..100] {
        let table: Vec<f64> = model
            .prototypes
            .iter()
            .map(|p| oracle_distance(&doc.subspace.basis, &p.basis, lam))
            .collect();
        let mut best = 0;
        for (i, &dist) in table.iter().enumerate() {
            if dist < table[best] {
                best = i;
            }
        }
        if classify(&doc.subspace, &model).unwrap().label != model.prototypes[best].label {
            mismatches += 1;
        }
    }
    outcome(
        worst_eigen <= 1e-6 && worst_grid <= 1e-6 && mismatches == 0,
        format!(
            "eigen oracle {worst_eigen:.2e}, grid oracle {worst_grid:.2e}, NPC mismatches {mismatches}/100"
        ),
    )
}

struct SyntheticRun {
    corpus: synth::SynthCorpus,
    test: Vec<CaseRecord>,
    model: ModelState,
}

const SYNTH_D: usize = 20;

fn synthetic_end_to_end() -> (Outcome, SyntheticRun) {
    let corpus = synth::generate(&synth::SynthConfig {
        seed: 0,
        ..synth::SynthConfig::default()
    })
    .unwrap();
    let stop = StopList::empty();
    let pipeline = Pipeline::new(&corpus.table, &stop, SYNTH_D);
    let (train_records, test) = split(&corpus.records, 0.8, 0).unwrap();
    let train_docs = labeled_subspaces(&train_records, &pipeline);
    let test_docs = labeled_subspaces(&test, &pipeline);

    let start = Instant::now();
    let config = TrainConfig {
        subspace_dim: SYNTH_D,
        seed: 0,
        ..TrainConfig::default()
    };
    let model = lvq::train(&train_docs, &config).unwrap();
    let elapsed = start.elapsed();
    let accuracy = evaluate(&model, &test_docs).unwrap().accuracy;

    let means = |records: &[CaseRecord]| -> Vec<_> {
        records
            .iter()
            .map(|r| (pipeline.mean(&r.case_id, &r.text).unwrap(), r.label.clone().unwrap()))
            .collect()
    };
    let baseline = NearestCentroid::train(&means(&train_records)).unwrap().accuracy(&means(&test));
    let result = outcome(
        accuracy >= 0.95 && elapsed < Duration::from_secs(120),
        format!(
            "test accuracy {accuracy:.4} on {} docs, training {elapsed:.2?}, nearest-centroid baseline {baseline:.4}",
            test.len()
        ),
    );
    (result, SyntheticRun { corpus, test, model })
}

fn score_contract() -> Outcome {
    let beta = 5.0;
    let mut exact_half = true;
    for i in 0..=200 {
        let d = i as f64 / 100.0;
        if d > 0.0 {
            exact_half &= score_from_distances(d, d, beta).unwrap() == 0.5;
        }
    }
    let mut monotone = true;
    let mut worst: f64 = 0.0;
    for &d_neg in &[0.01, 0.1, 0.37, 0.5, 0.9, 1.0] {
        let mut previous = f64::INFINITY;
        for i in 0..=500 {
            let d_pos = i as f64 / 500.0;
            let s = score_from_distances(d_pos, d_neg, beta).unwrap();
            monotone &= s < previous;
            previous = s;
            let closed = 1.0 / (1.0 + (-beta * (d_neg - d_pos) / (d_neg + d_pos)).exp());
            worst = worst.max((s - closed).abs());
        }
    }
    outcome(
        exact_half && monotone && worst <= 1e-12,
        format!("score(d,d) = 0.5 exactly: {exact_half}, strictly decreasing: {monotone}, max closed-form gap {worst:.2e}"),
    )
}

fn explanation_properties(run: &SyntheticRun) -> Outcome {
    let stop = StopList::empty();
    let pipeline = Pipeline::new(&run.corpus.table, &stop, SYNTH_D);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_perm: f64 = 0.0;
    let mut hits = 0usize;
    let docs = &run.test[..50];
    for r in docs {
        let prepared = pipeline.prepare(&r.case_id, &r.text).unwrap();
        let mut impacts = word_impact(&prepared.matrix, &prepared.subspace, &run.model).unwrap();

        let mut words: Vec<&str> = r.text.split_whitespace().collect();
        words.shuffle(&mut rng);
        let shuffled = pipeline.prepare(&r.case_id, &words.join(" ")).unwrap();
        let permuted: HashMap<String, f64> = word_impact(&shuffled.matrix, &shuffled.subspace, &run.model)
            .unwrap()
            .into_iter()
            .map(|w| (w.word, w.impact))
            .collect();
        for w in &impacts {
            let other = permuted.get(&w.word).copied().unwrap_or(f64::NAN);
            let gap = (w.impact - other).abs();
            worst_perm = if gap.is_nan() { f64::INFINITY } else { worst_perm.max(gap) };
        }

        let predicted = classify(&prepared.subspace, &run.model).unwrap().label;
        let planted = &run.corpus.planted[&predicted];
        sort_impacts(&mut impacts);
        hits += impacts
            .iter()
            .filter(|w| w.impact > 0.0)
            .take(10)
            .filter(|w| planted.contains(&w.word))
            .count();
    }
    let mean_hits = hits as f64 / docs.len() as f64;
    outcome(
        worst_perm <= 1e-10 && mean_hits >= 8.0,
        format!("max permutation change {worst_perm:.2e}, planted words in top 10: {mean_hits:.2} on average over 50 docs"),
    )
}

fn pipeline_numerics() -> Outcome {
    let records: Vec<CaseRecord> = (0..1615)
        .map(|i| CaseRecord::new(format!("{i:05}"), "text").with_label(if i % 7 < 3 { "housing" } else { "other" }))
        .collect();
    let (train, test) = split(&records, 0.8, 1).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let scores: Vec<ScoredCase> = (0..1000)
        .map(|i| ScoredCase {
            case_id: format!("c{:04}", rng.random_range(0..100_000)),
            // coarse grid to force ties
            score: (rng.random_range(1..400) as f64) / 400.0,
            percentile: 0.0,
            predicted_label: format!("{i}"),
        })
        .collect();
    let ranked = rank(scores.clone());
    let n = scores.len();
    let mut rank_ok = ranked.len() == n;
    for (i, s) in ranked.iter().enumerate() {
        let below = scores.iter().filter(|o| o.score < s.score).count();
        rank_ok &= s.percentile == 100.0 * below as f64 / n as f64;
        if i > 0 {
            let prev = &ranked[i - 1];
            rank_ok &= prev.score > s.score || (prev.score == s.score && prev.case_id <= s.case_id);
        }
    }
    let mut count_ok = true;
    for t in [0.0, 0.1, 0.25, 0.5, 0.502, 0.7, 0.9975, 1.0] {
        count_ok &= count_above(&ranked, t) == scores.iter().filter(|s| s.score > t).count();
    }
    for s in scores.iter().step_by(37) {
        count_ok &= count_above(&ranked, s.score) == scores.iter().filter(|o| o.score > s.score).count();
    }
    outcome(
        train.len() == 1292 && test.len() == 323 && rank_ok && count_ok,
        format!("split {}/{}, rank matches recount: {rank_ok}, count_above matches recount: {count_ok}", train.len(), test.len()),
    )
}

fn serialization(run: &SyntheticRun) -> Outcome {
    let stop = StopList::empty();
    let pipeline = Pipeline::new(&run.corpus.table, &stop, SYNTH_D);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.lvq");
    save_model(&run.model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    let positive = &run.model.class_labels[1];
    let before = batch_score(&run.test, &pipeline, &run.model, positive).unwrap();
    let after = batch_score(&run.test, &pipeline, &loaded, positive).unwrap();
    let identical = before.scored.len() == after.scored.len()
        && before
            .scored
            .iter()
            .zip(&after.scored)
            .all(|(a, b)| a.case_id == b.case_id && a.score.to_bits() == b.score.to_bits());
    outcome(
        identical && before.failures.is_empty(),
        format!("{} scores compared bit for bit: identical {identical}", before.scored.len()),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "gradient correctness", gradient_correctness()));
    results.push((2, "manifold invariants", manifold_invariants()));
    results.push((3, "distance properties", distance_properties()));
    results.push((4, "oracle equivalence", oracle_equivalence()));
    let (synthetic, run) = synthetic_end_to_end();
    results.push((5, "synthetic end-to-end", synthetic));
    results.push((6, "score contract", score_contract()));
    results.push((7, "explanation properties", explanation_properties(&run)));
    results.push((8, "pipeline numerics", pipeline_numerics()));
    results.push((9, "serialization", serialization(&run)));

    let mut failed = 0;
    for (id, name, o) in &results {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        failed += usize::from(!o.passed);
        println!("criterion {id} {name}: {tag} ({})", o.detail);
    }
    println!(
        "criterion 10 published-results reproduction: NOT REPRODUCIBLE (published accuracies, detected-case counts and \
         calibration curves need the unreleased annotated judgment corpus; `evaluate` and `calibrate` produce the \
         matching tables for any labeled corpus in the documented format)"
    );
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
