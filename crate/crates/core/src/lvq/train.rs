use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cost::cost_term;
use super::distance::{distance_unchecked, prototype_gradient, relevance_gradient};
use super::{DistanceKind, EpochLog, HyperParams, ModelState, Prototype, RelevanceVector};
use crate::error::{Error, Result};
use crate::linalg::{complete_basis, orthonormality_max_abs, qr_retract, sign_normalize_columns};
use crate::subspace::{dominant_directions, LabeledSubspace};

/// Examples stacked per prototype at initialization.
const INIT_SAMPLE: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub subspace_dim: usize,
    pub beta: f64,
    pub distance_kind: DistanceKind,
    pub lr_prototypes: f64,
    pub lr_relevances: f64,
    pub epochs: usize,
    pub per_class: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            subspace_dim: 50,
            beta: 5.0,
            distance_kind: DistanceKind::Chordal,
            lr_prototypes: 0.05,
            lr_relevances: 0.005,
            epochs: 100,
            per_class: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn hyperparams(&self) -> HyperParams {
        HyperParams {
            lr_prototypes: self.lr_prototypes,
            lr_relevances: self.lr_relevances,
            epochs: self.epochs,
            per_class: self.per_class,
            seed: self.seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let invalid = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.subspace_dim == 0 {
            return invalid("subspace dimension must be positive");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return invalid("sigmoid slope must be positive");
        }
        if !(self.lr_prototypes > 0.0 && self.lr_prototypes.is_finite()) {
            return invalid("prototype learning rate must be positive");
        }
        if !(self.lr_relevances >= 0.0 && self.lr_relevances.is_finite()) {
            return invalid("relevance learning rate must be non-negative");
        }
        if self.per_class == 0 {
            return invalid("need at least one prototype per class");
        }
        Ok(())
    }
}

fn class_labels(training: &[LabeledSubspace]) -> Vec<String> {
    let mut labels: Vec<String> = training.iter().map(|x| x.label.clone()).collect();
    labels.sort();
    labels.dedup();
    labels
}

/// Initial prototypes: for each class and each of its `per_class`
/// prototypes, stack the bases of up to ten random class examples and keep
/// the top-`d` left singular vectors.
pub fn init_prototypes(training: &[LabeledSubspace], per_class: usize, d: usize, seed: u64) -> Result<Vec<Prototype>> {
    let labels = class_labels(training);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_with(training, &labels, per_class, d, &mut rng)
}

fn init_with(
    training: &[LabeledSubspace],
    labels: &[String],
    per_class: usize,
    d: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Prototype>> {
    let dim = training
        .first()
        .map(|x| x.subspace.ambient_dim())
        .ok_or(Error::EmptyCorpus)?;
    if d == 0 || d > dim {
        return Err(Error::InvalidArgument(format!(
            "subspace dimension {d} must lie in 1..={dim}"
        )));
    }
    let mut prototypes = Vec::with_capacity(labels.len() * per_class);
    for label in labels {
        let members: Vec<&LabeledSubspace> = training.iter().filter(|x| &x.label == label).collect();
        if members.is_empty() {
            return Err(Error::EmptyClass { label: label.clone() });
        }
        for _ in 0..per_class {
            let take = members.len().min(INIT_SAMPLE);
            let mut picked = index::sample(rng, members.len(), take).into_vec();
            picked.sort_unstable();
            let columns: Vec<DVector<f64>> = picked
                .iter()
                .flat_map(|&i| members[i].subspace.basis.column_iter().map(|c| c.into_owned()))
                .collect();
            let stacked = DMatrix::from_columns(&columns);
            let mut basis = dominant_directions(stacked, d);
            if basis.ncols() < d {
                basis = complete_basis(&basis, d, rng);
                sign_normalize_columns(&mut basis);
            }
            prototypes.push(Prototype::new(basis, label.clone()));
        }
    }
    Ok(prototypes)
}

/// Gradient of one example's cost with respect to its two winners.
struct ExampleGradient {
    cost: f64,
    correct: bool,
    plus: usize,
    minus: usize,
    d_plus: f64,
    d_minus: f64,
    grad_plus: DMatrix<f64>,
    grad_minus: DMatrix<f64>,
    grad_relevances: DVector<f64>,
}

enum ExampleEval {
    Degenerate,
    Done { cost: f64, correct: bool },
}

/// Cost and NPC correctness of one example, without gradients.
fn evaluate_example(model: &ModelState, doc: &DMatrix<f64>, label: &str) -> Result<ExampleEval> {
    let lam = model.relevances.weights();
    let distances: Vec<f64> = model
        .prototypes
        .iter()
        .map(|p| distance_unchecked(doc, &p.basis, lam, model.distance_kind).0)
        .collect();
    let (plus, minus) = winners(model, &distances, label)?;
    match cost_term(distances[plus], distances[minus], model.beta) {
        Ok(t) => Ok(ExampleEval::Done {
            cost: t.cost,
            correct: is_correct(&distances, plus, minus),
        }),
        Err(Error::DegenerateSample) => Ok(ExampleEval::Degenerate),
        Err(e) => Err(e),
    }
}

fn winners(model: &ModelState, distances: &[f64], label: &str) -> Result<(usize, usize)> {
    let plus = model
        .nearest_where(distances, |l| l == label)
        .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
    let minus = model
        .nearest_where(distances, |l| l != label)
        .ok_or_else(|| Error::EmptyClass { label: "<competitor>".into() })?;
    Ok((plus, minus))
}

fn is_correct(distances: &[f64], plus: usize, minus: usize) -> bool {
    distances[plus] < distances[minus] || (distances[plus] == distances[minus] && plus < minus)
}

fn example_gradient(model: &ModelState, doc: &DMatrix<f64>, label: &str) -> Result<Option<ExampleGradient>> {
    let lam = model.relevances.weights();
    let kind = model.distance_kind;
    let mut decomps = Vec::with_capacity(model.prototypes.len());
    let mut distances = Vec::with_capacity(model.prototypes.len());
    for p in &model.prototypes {
        let (dist, pa) = distance_unchecked(doc, &p.basis, lam, kind);
        distances.push(dist);
        decomps.push(pa);
    }
    let (plus, minus) = winners(model, &distances, label)?;
    let (d_plus, d_minus) = (distances[plus], distances[minus]);
    let term = match cost_term(d_plus, d_minus, model.beta) {
        Ok(t) => t,
        Err(Error::DegenerateSample) => return Ok(None),
        Err(e) => return Err(e),
    };
    let (slope_plus, slope_minus) = term.distance_slopes(d_plus, d_minus, model.beta);
    let d = model.subspace_dim;

    let grad_plus = prototype_gradient(&decomps[plus], lam, kind) * slope_plus;
    let grad_minus = prototype_gradient(&decomps[minus], lam, kind) * slope_minus;
    let grad_relevances = relevance_gradient(decomps[plus].cosines.as_slice(), d, kind) * slope_plus
        + relevance_gradient(decomps[minus].cosines.as_slice(), d, kind) * slope_minus;

    Ok(Some(ExampleGradient {
        cost: term.cost,
        correct: is_correct(&distances, plus, minus),
        plus,
        minus,
        d_plus,
        d_minus,
        grad_plus,
        grad_minus,
        grad_relevances,
    }))
}

/// Total cost Σᵢ Eᵢ and its gradient with respect to every prototype basis
/// and the relevance vector (Euclidean, no manifold projection).
#[derive(Debug, Clone)]
pub struct CostGradient {
    pub cost: f64,
    pub prototypes: Vec<DMatrix<f64>>,
    pub relevances: DVector<f64>,
    pub skipped: usize,
}

pub fn total_cost_and_gradient(model: &ModelState, data: &[LabeledSubspace]) -> Result<CostGradient> {
    let mut out = CostGradient {
        cost: 0.0,
        prototypes: model
            .prototypes
            .iter()
            .map(|p| DMatrix::zeros(p.basis.nrows(), p.basis.ncols()))
            .collect(),
        relevances: DVector::zeros(model.subspace_dim),
        skipped: 0,
    };
    for example in data {
        match example_gradient(model, &example.subspace.basis, &example.label)? {
            Some(g) => {
                out.cost += g.cost;
                out.prototypes[g.plus] += &g.grad_plus;
                out.prototypes[g.minus] += &g.grad_minus;
                out.relevances += &g.grad_relevances;
            }
            None => out.skipped += 1,
        }
    }
    Ok(out)
}

/// Result of a single stochastic update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Updated { cost: f64, correct: bool },
    Skipped,
}

/// Sequential stochastic gradient descent over a fixed training set.
pub struct Trainer<'a> {
    data: &'a [LabeledSubspace],
    model: ModelState,
    rng: ChaCha8Rng,
    epoch: usize,
    order: Vec<usize>,
}

impl<'a> Trainer<'a> {
    /// Validates the data, initializes prototypes and records epoch 0.
    pub fn new(data: &'a [LabeledSubspace], config: &TrainConfig) -> Result<Self> {
        Self::build(data, config, None)
    }

    /// Starts from caller-supplied prototypes instead of the sampled
    /// initialization (warm start).
    pub fn with_prototypes(data: &'a [LabeledSubspace], config: &TrainConfig, prototypes: Vec<Prototype>) -> Result<Self> {
        Self::build(data, config, Some(prototypes))
    }

    fn build(data: &'a [LabeledSubspace], config: &TrainConfig, initial: Option<Vec<Prototype>>) -> Result<Self> {
        config.validate()?;
        let labels = class_labels(data);
        if labels.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "training needs at least two classes, found {}",
                labels.len()
            )));
        }
        let dim = data[0].subspace.ambient_dim();
        if config.subspace_dim > dim {
            return Err(Error::InvalidArgument(format!(
                "subspace dimension {} exceeds embedding dimension {dim}",
                config.subspace_dim
            )));
        }
        for x in data {
            if x.subspace.ambient_dim() != dim {
                return Err(Error::DimensionMismatch {
                    context: format!("document {:?}", x.subspace.doc_id),
                    expected: dim,
                    found: x.subspace.ambient_dim(),
                });
            }
            let residual = orthonormality_max_abs(&x.subspace.basis);
            if !(residual <= super::ORTHONORMAL_TOLERANCE) {
                return Err(Error::in_document(&x.subspace.doc_id, Error::NotOrthonormal { residual }));
            }
        }

        let prototypes = match initial {
            Some(p) => p,
            None => {
                let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
                init_with(data, &labels, config.per_class, config.subspace_dim, &mut init_rng)?
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);

        let model = ModelState {
            prototypes,
            relevances: RelevanceVector::uniform(config.subspace_dim),
            embedding_dim: dim,
            subspace_dim: config.subspace_dim,
            beta: config.beta,
            distance_kind: config.distance_kind,
            class_labels: labels,
            hyperparams: config.hyperparams(),
            training_log: Vec::new(),
        };
        model.validate()?;
        for p in &model.prototypes {
            let residual = orthonormality_max_abs(&p.basis);
            if !(residual <= super::ORTHONORMAL_TOLERANCE) {
                return Err(Error::NotOrthonormal { residual });
            }
        }
        let mut trainer = Trainer {
            data,
            model,
            rng,
            epoch: 0,
            order: (0..data.len()).collect(),
        };
        let initial = trainer.measure(0)?;
        info!("epoch 0: cost {:.6}, accuracy {:.4}", initial.mean_cost, initial.accuracy);
        trainer.model.training_log.push(initial);
        Ok(trainer)
    }

    pub fn model(&self) -> &ModelState {
        &self.model
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Mean cost and accuracy of the current model over the training data.
    fn measure(&self, skipped: usize) -> Result<EpochLog> {
        let mut total = 0.0;
        let mut correct = 0usize;
        let mut counted = 0usize;
        for x in self.data {
            match evaluate_example(&self.model, &x.subspace.basis, &x.label)? {
                ExampleEval::Done { cost, correct: ok } => {
                    total += cost;
                    counted += 1;
                    correct += usize::from(ok);
                }
                // both distances zero: the example sits on two prototypes at once
                ExampleEval::Degenerate => {}
            }
        }
        Ok(EpochLog {
            epoch: self.epoch,
            mean_cost: if counted > 0 { total / counted as f64 } else { 0.0 },
            accuracy: correct as f64 / self.data.len() as f64,
            skipped,
        })
    }

    /// One stochastic update on training example `index`.
    pub fn step(&mut self, index: usize) -> Result<StepOutcome> {
        let example = &self.data[index];
        let Some(g) = example_gradient(&self.model, &example.subspace.basis, &example.label)? else {
            debug!("skipping degenerate example {:?}", example.subspace.doc_id);
            return Ok(StepOutcome::Skipped);
        };
        let finite = g.grad_plus.iter().chain(g.grad_minus.iter()).chain(g.grad_relevances.iter()).all(|x| x.is_finite());
        if !finite || !g.cost.is_finite() {
            return Err(Error::NonFiniteGradient {
                epoch: self.epoch,
                example: index,
                doc_id: example.subspace.doc_id.clone(),
                d_plus: g.d_plus,
                d_minus: g.d_minus,
            });
        }

        let eta = self.model.hyperparams.lr_prototypes;
        for (which, grad) in [(g.plus, &g.grad_plus), (g.minus, &g.grad_minus)] {
            let proto = &mut self.model.prototypes[which];
            let stepped = &proto.basis - grad * eta;
            proto.basis = qr_retract(stepped);
        }

        let eta_lambda = self.model.hyperparams.lr_relevances;
        if eta_lambda > 0.0 {
            let stepped: Vec<f64> = self
                .model
                .relevances
                .weights()
                .iter()
                .zip(g.grad_relevances.iter())
                .map(|(l, gl)| l - eta_lambda * gl)
                .collect();
            self.model.relevances = RelevanceVector::projected(&stepped);
        }
        Ok(StepOutcome::Updated {
            cost: g.cost,
            correct: g.correct,
        })
    }

    /// One pass over the shuffled training data, then a full evaluation.
    pub fn run_epoch(&mut self) -> Result<EpochLog> {
        self.epoch += 1;
        let mut order = std::mem::take(&mut self.order);
        order.shuffle(&mut self.rng);
        let mut skipped = 0;
        for &i in &order {
            if self.step(i)? == StepOutcome::Skipped {
                skipped += 1;
            }
        }
        self.order = order;
        if skipped > 0 {
            warn!("epoch {}: skipped {skipped} degenerate examples", self.epoch);
        }
        let log = self.measure(skipped)?;
        info!("epoch {}: cost {:.6}, accuracy {:.4}", log.epoch, log.mean_cost, log.accuracy);
        self.model.training_log.push(log);
        Ok(log)
    }

    pub fn finish(self) -> ModelState {
        self.model
    }
}

/// Trains a model for `config.epochs` epochs.
pub fn train(training: &[LabeledSubspace], config: &TrainConfig) -> Result<ModelState> {
    let mut trainer = Trainer::new(training, config)?;
    for _ in 0..config.epochs {
        trainer.run_epoch()?;
    }
    Ok(trainer.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{orthonormality_residual, projector};
    use crate::subspace::Subspace;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn axis(dim: usize, idx: &[usize]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, idx.len());
        for (j, &i) in idx.iter().enumerate() {
            m[(i, j)] = 1.0;
        }
        m
    }

    fn labeled(id: &str, basis: DMatrix<f64>, label: &str) -> LabeledSubspace {
        LabeledSubspace::new(Subspace::new(id, basis), label)
    }

    fn random_basis(rng: &mut ChaCha8Rng, dim: usize, k: usize) -> DMatrix<f64> {
        qr_retract(DMatrix::from_fn(dim, k, |_, _| rng.sample::<f64, _>(StandardNormal)))
    }

    #[test]
    fn single_document_class_prototype_spans_document() {
        let data = vec![labeled("a", axis(5, &[0, 1]), "A"), labeled("b", axis(5, &[2, 3]), "B")];
        let protos = init_prototypes(&data, 1, 2, 7).unwrap();
        assert_eq!(protos.len(), 2);
        assert_eq!(protos[0].label, "A");
        assert!((projector(&protos[0].basis) - projector(&axis(5, &[0, 1]))).norm() < 1e-12);

        // rank-deficient document gets padded to d columns
        let data = vec![labeled("a", axis(5, &[0]), "A"), labeled("b", axis(5, &[2]), "B")];
        let protos = init_prototypes(&data, 1, 3, 7).unwrap();
        assert_eq!(protos[0].basis.ncols(), 3);
        assert!(orthonormality_residual(&protos[0].basis) < 1e-12);
        let p = projector(&protos[0].basis);
        assert!((p[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn init_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<_> = (0..30)
            .map(|i| labeled(&i.to_string(), random_basis(&mut rng, 12, 3), if i % 2 == 0 { "x" } else { "y" }))
            .collect();
        assert_eq!(init_prototypes(&data, 2, 3, 99).unwrap(), init_prototypes(&data, 2, 3, 99).unwrap());
        assert_ne!(init_prototypes(&data, 2, 3, 99).unwrap(), init_prototypes(&data, 2, 3, 100).unwrap());
    }

    #[test]
    fn stacked_orthogonal_rank_one_documents() {
        // three mutually orthogonal rank-1 documents in one class, d = 3
        let data = vec![
            labeled("a", axis(6, &[0]), "A"),
            labeled("b", axis(6, &[2]), "A"),
            labeled("c", axis(6, &[4]), "A"),
            labeled("z", axis(6, &[5]), "B"),
        ];
        let protos = init_prototypes(&data, 1, 3, 3).unwrap();
        let p = projector(&protos[0].basis);
        for i in [0, 2, 4] {
            let e = axis(6, &[i]);
            assert!((&p * &e - &e).norm() < 1e-12, "direction {i} not contained");
        }
    }

    #[test]
    fn empty_class_rejected() {
        let data = vec![labeled("a", axis(4, &[0]), "A")];
        let labels = vec!["A".to_string(), "B".to_string()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(init_with(&data, &labels, 1, 1, &mut rng), Err(Error::EmptyClass { .. })));
    }

    #[test]
    fn separable_toy_learns_in_one_epoch() {
        let data = vec![labeled("a", axis(4, &[0, 1]), "A"), labeled("b", axis(4, &[2, 3]), "B")];
        let config = TrainConfig { subspace_dim: 2, epochs: 1, ..TrainConfig::default() };

        // sampled initialization reproduces the two documents: already optimal
        let model = train(&data, &config).unwrap();
        assert_eq!(model.training_log[1].accuracy, 1.0);

        // from tilted prototypes one epoch must lower the cost
        let tilt = |a: usize, b: usize, c: usize| {
            let mut m = axis(4, &[a, b]);
            m[(c, 0)] = 0.5;
            qr_retract(m)
        };
        let start = vec![Prototype::new(tilt(0, 1, 2), "A"), Prototype::new(tilt(2, 3, 0), "B")];
        let mut trainer = Trainer::with_prototypes(&data, &config, start).unwrap();
        let log = trainer.run_epoch().unwrap();
        let initial = trainer.model().training_log[0];
        assert_eq!(log.accuracy, 1.0);
        assert!(log.mean_cost < initial.mean_cost);
    }

    #[test]
    fn cost_decreases_on_noisy_toy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_basis(&mut rng, 10, 2);
        let b = random_basis(&mut rng, 10, 2);
        let mut data = Vec::new();
        for i in 0..20 {
            for (base, label) in [(&a, "A"), (&b, "B")] {
                let noise = DMatrix::from_fn(10, 2, |_, _| 0.4 * rng.sample::<f64, _>(StandardNormal));
                data.push(labeled(&format!("{label}{i}"), qr_retract(base + noise), label));
            }
        }
        let config = TrainConfig { subspace_dim: 2, epochs: 5, ..TrainConfig::default() };
        let model = train(&data, &config).unwrap();
        let log = &model.training_log;
        assert!(log.last().unwrap().mean_cost < log[0].mean_cost);
        assert!(log.last().unwrap().accuracy >= 0.9);
    }

    #[test]
    fn frozen_relevances_stay_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<_> = (0..10)
            .map(|i| labeled(&i.to_string(), random_basis(&mut rng, 8, 3), if i < 5 { "x" } else { "y" }))
            .collect();
        let config = TrainConfig { subspace_dim: 3, epochs: 3, lr_relevances: 0.0, ..TrainConfig::default() };
        let model = train(&data, &config).unwrap();
        assert_eq!(model.relevances, RelevanceVector::uniform(3));
    }

    #[test]
    fn identical_seed_identical_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<_> = (0..12)
            .map(|i| labeled(&i.to_string(), random_basis(&mut rng, 8, 2), if i % 3 == 0 { "x" } else { "y" }))
            .collect();
        let config = TrainConfig { subspace_dim: 2, epochs: 4, seed: 11, ..TrainConfig::default() };
        assert_eq!(train(&data, &config).unwrap(), train(&data, &config).unwrap());
    }

    #[test]
    fn rejects_bad_configs() {
        let data = vec![labeled("a", axis(4, &[0]), "A"), labeled("b", axis(4, &[1]), "B")];
        let one_class = vec![labeled("a", axis(4, &[0]), "A")];
        let cfg = |f: fn(&mut TrainConfig)| {
            let mut c = TrainConfig { subspace_dim: 1, epochs: 1, ..TrainConfig::default() };
            f(&mut c);
            c
        };
        assert!(train(&one_class, &cfg(|_| {})).is_err());
        assert!(train(&data, &cfg(|c| c.subspace_dim = 5)).is_err());
        assert!(train(&data, &cfg(|c| c.lr_prototypes = 0.0)).is_err());
        assert!(train(&data, &cfg(|c| c.beta = -1.0)).is_err());
        let bad = vec![labeled("a", axis(4, &[0]) * 2.0, "A"), labeled("b", axis(4, &[1]), "B")];
        assert!(train(&bad, &cfg(|_| {})).is_err());
    }
}
