//! Fixed-size orthonormal summaries of a document's word vectors.

use nalgebra::{DMatrix, DVector};

use crate::embedding::WordMatrix;
use crate::error::{Error, Result};
use crate::linalg::{sign_normalize_columns, thin_svd};

/// Singular values below this fraction of the largest one count as rank deficiency.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Orthonormal D×k basis of a document's dominant word directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    pub doc_id: String,
    pub basis: DMatrix<f64>,
}

impl Subspace {
    pub fn new(doc_id: impl Into<String>, basis: DMatrix<f64>) -> Self {
        Subspace {
            doc_id: doc_id.into(),
            basis,
        }
    }

    /// k, the number of basis columns.
    pub fn effective_dim(&self) -> usize {
        self.basis.ncols()
    }

    /// D, the ambient embedding dimension.
    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSubspace {
    pub subspace: Subspace,
    pub label: String,
}

impl LabeledSubspace {
    pub fn new(subspace: Subspace, label: impl Into<String>) -> Self {
        LabeledSubspace {
            subspace,
            label: label.into(),
        }
    }
}

/// Top left singular vectors of an arbitrary D×n matrix, at most `d` of
/// them, dropping numerically null directions. Columns are sign-normalized.
pub(crate) fn dominant_directions(m: DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let dim = m.nrows();
    if m.ncols() == 0 || d == 0 {
        return DMatrix::zeros(dim, 0);
    }
    let svd = thin_svd(&m);
    let sigma = &svd.s;
    let top = sigma.iter().copied().fold(0.0f64, f64::max);
    let rank = if top > 0.0 {
        sigma.iter().filter(|&&s| s > RANK_TOLERANCE * top).count()
    } else {
        0
    };
    let k = rank.min(d);
    let mut basis = svd.u.columns(0, k).into_owned();
    sign_normalize_columns(&mut basis);
    basis
}

/// Reduces a word matrix to the span of its top `min(d, rank)` left
/// singular vectors, ordered by descending singular value.
pub fn compute_subspace(matrix: &WordMatrix, d: usize) -> Result<Subspace> {
    let dim = matrix.dim();
    if d == 0 {
        return Err(Error::InvalidArgument("subspace dimension must be positive".into()));
    }
    if d > dim {
        return Err(Error::InvalidArgument(format!(
            "subspace dimension {d} exceeds embedding dimension {dim}"
        )));
    }
    if matrix.is_empty() {
        return Err(Error::EmptyDocument {
            doc_id: matrix.doc_id.clone(),
        });
    }
    let basis = dominant_directions(matrix.columns.clone(), d);
    if basis.ncols() == 0 {
        // every word vector is zero
        return Err(Error::EmptyDocument {
            doc_id: matrix.doc_id.clone(),
        });
    }
    Ok(Subspace::new(matrix.doc_id.clone(), basis))
}

/// Arithmetic mean of the word vectors.
pub fn mean_vector(matrix: &WordMatrix) -> Result<DVector<f64>> {
    if matrix.is_empty() {
        return Err(Error::EmptyDocument {
            doc_id: matrix.doc_id.clone(),
        });
    }
    Ok(matrix.columns.column_mean())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{orthonormality_residual, projector};
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn wm(columns: DMatrix<f64>) -> WordMatrix {
        let n = columns.ncols();
        WordMatrix {
            doc_id: "doc".into(),
            columns,
            tokens: (0..n).map(|i| format!("w{i}")).collect(),
        }
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn rank_one_input() {
        let v = [3.0, -4.0, 0.0];
        let m = DMatrix::from_fn(3, 3, |i, _| v[i]);
        let s = compute_subspace(&wm(m), 2).unwrap();
        assert_eq!(s.effective_dim(), 1);
        // largest-magnitude entry forced positive: (-0.6, 0.8, 0) -> sign flip of v/|v|
        let expected = [-0.6, 0.8, 0.0];
        for i in 0..3 {
            assert!((s.basis[(i, 0)] - expected[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_columns_span() {
        let m = DMatrix::from_column_slice(3, 2, &[2.0, 0.0, 0.0, 0.0, 0.5, 0.0]);
        let s = compute_subspace(&wm(m), 2).unwrap();
        let p = projector(&s.basis);
        let mut expected = DMatrix::zeros(3, 3);
        expected[(0, 0)] = 1.0;
        expected[(1, 1)] = 1.0;
        assert!((p - expected).norm() < 1e-12);
    }

    #[test]
    fn matches_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = random_matrix(&mut rng, 10, 6);
        let s = compute_subspace(&wm(m.clone()), 3).unwrap();

        // top-3 eigenvectors of M·Mᵀ
        let eig = SymmetricEigen::new(&m * m.transpose());
        let mut order: Vec<usize> = (0..10).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let top = DMatrix::from_columns(
            &order[..3].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>(),
        );
        assert!((projector(&s.basis) - projector(&top)).norm() < 1e-8);
    }

    #[test]
    fn errors() {
        let m = DMatrix::from_element(3, 2, 1.0);
        assert!(matches!(compute_subspace(&wm(m.clone()), 4), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            compute_subspace(&wm(DMatrix::zeros(3, 0)), 2),
            Err(Error::EmptyDocument { .. })
        ));
        assert!(matches!(mean_vector(&wm(DMatrix::zeros(3, 0))), Err(Error::EmptyDocument { .. })));
    }

    #[test]
    fn mean_vector_examples() {
        let v = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert_eq!(mean_vector(&wm(v.clone())).unwrap(), v.column(0).into_owned());
        let m = DMatrix::from_column_slice(2, 2, &[1.0, -2.0, -1.0, 2.0]);
        assert_eq!(mean_vector(&wm(m)).unwrap(), DVector::zeros(2));
        let m = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(mean_vector(&wm(m)).unwrap(), DVector::from_vec(vec![0.5, 0.5]));
    }

    proptest! {
        #[test]
        fn invariants(seed in 0u64..10_000, dim in 3usize..12, n in 1usize..15, d in 1usize..6, scale in 0.01f64..100.0) {
            let d = d.min(dim);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_matrix(&mut rng, dim, n);
            let s = compute_subspace(&wm(m.clone()), d).unwrap();
            prop_assert_eq!(s.effective_dim(), d.min(n));
            prop_assert!(orthonormality_residual(&s.basis) < 1e-10);

            let p = projector(&s.basis);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.reverse();
            perm.rotate_left(seed as usize % n);
            let permuted = m.select_columns(&perm);
            let sp = compute_subspace(&wm(permuted), d).unwrap();
            prop_assert!((projector(&sp.basis) - &p).norm() < 1e-10);

            let ss = compute_subspace(&wm(m * scale), d).unwrap();
            prop_assert!((projector(&ss.basis) - &p).norm() < 1e-10);
        }
    }
}
