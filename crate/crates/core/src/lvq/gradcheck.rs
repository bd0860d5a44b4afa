//! Central finite-difference check of the analytic cost gradient.
//!
//! The numeric side only evaluates the total cost; it never touches the
//! analytic derivative code.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::cost::cost_term;
use super::distance::distance_unchecked;
use super::{total_cost_and_gradient, DistanceKind, HyperParams, ModelState, Prototype, RelevanceVector};
use crate::error::Result;
use crate::linalg::qr_retract;
use crate::subspace::{LabeledSubspace, Subspace};

pub const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-5;

/// One randomly drawn problem.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckCase {
    pub embedding_dim: usize,
    pub subspace_dim: usize,
    pub doc_dim: usize,
    pub distance_kind: DistanceKind,
    pub per_class: usize,
    pub max_rel_error_prototypes: f64,
    pub max_rel_error_relevances: f64,
}

impl GradCheckCase {
    pub fn max_rel_error(&self) -> f64 {
        self.max_rel_error_prototypes.max(self.max_rel_error_relevances)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub cases: Vec<GradCheckCase>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Σᵢ Eᵢ evaluated from distances only.
pub fn total_cost(model: &ModelState, data: &[LabeledSubspace]) -> f64 {
    let lam = model.relevances.weights();
    let mut total = 0.0;
    for x in data {
        let dist: Vec<f64> = model
            .prototypes
            .iter()
            .map(|p| distance_unchecked(&x.subspace.basis, &p.basis, lam, model.distance_kind).0)
            .collect();
        let best = |same: bool| {
            model
                .prototypes
                .iter()
                .enumerate()
                .filter(|(_, p)| (p.label == x.label) == same)
                .map(|(i, _)| dist[i])
                .fold(f64::INFINITY, f64::min)
        };
        if let Ok(t) = cost_term(best(true), best(false), model.beta) {
            total += t.cost;
        }
    }
    total
}

/// Largest entrywise error relative to the largest numeric entry of the
/// block; a block with no numeric gradient must be analytically zero too.
fn block_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let worst = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    if scale == 0.0 {
        worst
    } else {
        worst / scale
    }
}

fn random_problem(rng: &mut ChaCha8Rng, dim: usize, d: usize, kind: DistanceKind, per_class: usize) -> (ModelState, Vec<LabeledSubspace>) {
    let mut basis = |k: usize| qr_retract(DMatrix::from_fn(dim, k, |_, _| rng.sample::<f64, _>(StandardNormal)));
    // k + d ≤ D keeps the subspaces in general position (no forced intersection,
    // hence no repeated unit cosines where the distance is not differentiable)
    let doc_dim = d.min(dim - d);
    let labels = ["neg", "pos"];
    let mut prototypes = Vec::new();
    for label in labels {
        for _ in 0..per_class {
            prototypes.push(Prototype::new(basis(d), label));
        }
    }
    let data: Vec<LabeledSubspace> = (0..6)
        .map(|i| LabeledSubspace::new(Subspace::new(format!("doc{i}"), basis(doc_dim)), labels[i % 2]))
        .collect();
    let raw: Vec<f64> = (0..d).map(|_| rng.random::<f64>() + 0.1).collect();
    let sum: f64 = raw.iter().sum();
    let model = ModelState {
        prototypes,
        relevances: RelevanceVector::from_weights(raw.iter().map(|x| x / sum).collect()).expect("normalized"),
        embedding_dim: dim,
        subspace_dim: d,
        beta: 5.0,
        distance_kind: kind,
        class_labels: labels.iter().map(|s| s.to_string()).collect(),
        hyperparams: HyperParams {
            lr_prototypes: 0.0,
            lr_relevances: 0.0,
            epochs: 0,
            per_class,
            seed: 0,
        },
        training_log: Vec::new(),
    };
    (model, data)
}

/// Compares analytic and central-difference gradients for one problem.
pub fn check_problem(model: &ModelState, data: &[LabeledSubspace]) -> Result<(f64, f64)> {
    let analytic = total_cost_and_gradient(model, data)?;
    let mut probe = model.clone();

    let mut proto_err = 0.0f64;
    for (p, grad) in analytic.prototypes.iter().enumerate() {
        let mut numeric = vec![0.0; grad.len()];
        for (idx, slot) in numeric.iter_mut().enumerate() {
            let orig = probe.prototypes[p].basis[idx];
            probe.prototypes[p].basis[idx] = orig + STEP;
            let up = total_cost(&probe, data);
            probe.prototypes[p].basis[idx] = orig - STEP;
            let down = total_cost(&probe, data);
            probe.prototypes[p].basis[idx] = orig;
            *slot = (up - down) / (2.0 * STEP);
        }
        proto_err = proto_err.max(block_error(grad.as_slice(), &numeric));
    }

    let weights = model.relevances.weights().to_vec();
    let mut numeric = vec![0.0; weights.len()];
    for (i, slot) in numeric.iter_mut().enumerate() {
        let mut w = weights.clone();
        w[i] = weights[i] + STEP;
        probe.relevances = RelevanceVector(w.clone());
        let up = total_cost(&probe, data);
        w[i] = weights[i] - STEP;
        probe.relevances = RelevanceVector(w);
        let down = total_cost(&probe, data);
        *slot = (up - down) / (2.0 * STEP);
    }
    let lambda_err = block_error(analytic.relevances.as_slice(), &numeric);
    Ok((proto_err, lambda_err))
}

/// Runs `count` random problems cycling through D ∈ {8, 20}, d ∈ {2, 5},
/// both distance kinds and one or two prototypes per class.
pub fn run(count: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(count);
    for c in 0..count {
        let dim = [8, 20][c % 2];
        let d = [2, 5][(c / 2) % 2];
        let kind = [DistanceKind::Chordal, DistanceKind::Geodesic][(c / 4) % 2];
        let per_class = 1 + (c / 8) % 2;
        let (model, data) = random_problem(&mut rng, dim, d, kind, per_class);
        let (p_err, l_err) = check_problem(&model, &data)?;
        cases.push(GradCheckCase {
            embedding_dim: dim,
            subspace_dim: d,
            doc_dim: data[0].subspace.effective_dim(),
            distance_kind: kind,
            per_class,
            max_rel_error_prototypes: p_err,
            max_rel_error_relevances: l_err,
        });
    }
    let max_rel_error = cases.iter().map(GradCheckCase::max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        passed: max_rel_error < TOLERANCE,
        cases,
        max_rel_error,
        tolerance: TOLERANCE,
    })
}
