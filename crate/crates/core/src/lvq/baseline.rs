use nalgebra::DVector;

use crate::error::{Error, Result};

/// Nearest-centroid classifier over mean word vectors, cosine distance.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestCentroid {
    pub labels: Vec<String>,
    pub centroids: Vec<DVector<f64>>,
}

fn cosine_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let norms = a.norm() * b.norm();
    if norms == 0.0 {
        1.0
    } else {
        1.0 - a.dot(b) / norms
    }
}

impl NearestCentroid {
    /// Class order is sorted label order.
    pub fn train(examples: &[(DVector<f64>, String)]) -> Result<Self> {
        let mut labels: Vec<String> = examples.iter().map(|(_, l)| l.clone()).collect();
        labels.sort();
        labels.dedup();
        let dim = examples.first().map(|(v, _)| v.len()).ok_or(Error::EmptyCorpus)?;
        let mut centroids = Vec::with_capacity(labels.len());
        for label in &labels {
            let mut sum = DVector::zeros(dim);
            let mut count = 0usize;
            for (v, l) in examples.iter().filter(|(_, l)| l == label) {
                if v.len() != dim {
                    return Err(Error::DimensionMismatch {
                        context: format!("mean vector of class {l:?}"),
                        expected: dim,
                        found: v.len(),
                    });
                }
                sum += v;
                count += 1;
            }
            centroids.push(sum / count as f64);
        }
        Ok(NearestCentroid { labels, centroids })
    }

    /// Label of the closest centroid; ties go to the earlier class.
    pub fn predict(&self, v: &DVector<f64>) -> &str {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, c) in self.centroids.iter().enumerate() {
            let dist = cosine_distance(v, c);
            if dist < best_dist {
                best = i;
                best_dist = dist;
            }
        }
        &self.labels[best]
    }

    pub fn accuracy(&self, test: &[(DVector<f64>, String)]) -> f64 {
        if test.is_empty() {
            return 0.0;
        }
        let hits = test.iter().filter(|(v, l)| self.predict(v) == l).count();
        hits as f64 / test.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn one_example_per_class() {
        let data = vec![(v(&[1.0, 0.2]), "x".to_string()), (v(&[0.1, 1.0]), "y".to_string())];
        let nc = NearestCentroid::train(&data).unwrap();
        for (vec, label) in &data {
            assert_eq!(nc.predict(vec), label);
        }
        assert_eq!(nc.accuracy(&data), 1.0);
    }

    #[test]
    fn tie_goes_to_first_class() {
        let data = vec![(v(&[0.0, 1.0]), "b".to_string()), (v(&[1.0, 0.0]), "a".to_string())];
        let nc = NearestCentroid::train(&data).unwrap();
        assert_eq!(nc.labels, vec!["a", "b"]);
        assert_eq!(nc.predict(&v(&[1.0, 1.0])), "a");
    }

    #[test]
    fn empty_training_set() {
        assert!(NearestCentroid::train(&[]).is_err());
    }
}
