//! Small dense helpers shared by the subspace and training code.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Thin SVD `m = u · diag(s) · vᵀ` with `s` in descending order.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

/// Thin SVD backed by faer. Inputs must be finite.
pub fn thin_svd(m: &DMatrix<f64>) -> ThinSvd {
    let (rows, cols) = m.shape();
    let p = rows.min(cols);
    if p == 0 {
        return ThinSvd {
            u: DMatrix::zeros(rows, 0),
            s: DVector::zeros(0),
            v: DMatrix::zeros(cols, 0),
        };
    }
    let a = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let svd = a.thin_svd().expect("SVD of a finite matrix converges");
    let (fu, fs, fv) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| fs[b].total_cmp(&fs[a]));
    ThinSvd {
        u: DMatrix::from_fn(rows, p, |i, j| fu[(i, order[j])]),
        s: DVector::from_fn(p, |j, _| fs[order[j]]),
        v: DMatrix::from_fn(cols, p, |i, j| fv[(i, order[j])]),
    }
}

/// Flips each column so that its largest-magnitude entry is positive.
/// The first entry wins among equal magnitudes.
pub fn sign_normalize_columns(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Frobenius norm of BᵀB − I.
pub fn orthonormality_residual(b: &DMatrix<f64>) -> f64 {
    let mut g = b.tr_mul(b);
    for i in 0..g.nrows() {
        g[(i, i)] -= 1.0;
    }
    g.norm()
}

/// Largest absolute entry of BᵀB − I.
pub fn orthonormality_max_abs(b: &DMatrix<f64>) -> f64 {
    let mut g = b.tr_mul(b);
    for i in 0..g.nrows() {
        g[(i, i)] -= 1.0;
    }
    g.amax()
}

/// Maps a full-column-rank matrix back to an orthonormal basis of its span:
/// the Q factor of its QR decomposition, with columns flipped so that R has
/// a non-negative diagonal.
pub fn qr_retract(m: DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Extends an orthonormal `basis` to `target` columns with random directions
/// orthogonal to it (twice-iterated Gram–Schmidt).
pub fn complete_basis<R: Rng + ?Sized>(basis: &DMatrix<f64>, target: usize, rng: &mut R) -> DMatrix<f64> {
    let dim = basis.nrows();
    assert!(target <= dim, "cannot hold {target} orthonormal columns in dimension {dim}");
    let mut cols: Vec<DVector<f64>> = basis.column_iter().map(|c| c.into_owned()).collect();
    while cols.len() < target {
        let mut v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dot(&v);
                v.axpy(-proj, c, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / norm);
        }
    }
    DMatrix::from_columns(&cols)
}

/// Orthogonal projector B·Bᵀ onto span(B).
pub fn projector(b: &DMatrix<f64>) -> DMatrix<f64> {
    b * b.transpose()
}
