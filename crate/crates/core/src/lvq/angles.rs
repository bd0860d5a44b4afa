use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{orthonormality_max_abs, thin_svd, ThinSvd};
use crate::subspace::Subspace;

/// Tolerance for the orthonormality check on inputs.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

/// Principal angles between a document subspace and a prototype subspace.
///
/// `cosines[i]` is cos θᵢ, sorted descending. Column `i` of
/// `doc_directions` and of `proto_directions` are the unit principal vectors
/// realizing that angle, so `doc_directionsᵀ · proto_directions` is
/// diagonal with the cosines on the diagonal.
#[derive(Debug, Clone)]
pub struct PrincipalAngleDecomposition {
    pub cosines: DVector<f64>,
    pub doc_directions: DMatrix<f64>,
    pub proto_directions: DMatrix<f64>,
    /// Right singular vectors of docᵀ·proto, one column per angle (d×m).
    pub(crate) proto_coords: DMatrix<f64>,
    /// Unclamped singular values, used for gradients.
    pub(crate) raw_cosines: DVector<f64>,
}

impl PrincipalAngleDecomposition {
    pub fn len(&self) -> usize {
        self.cosines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cosines.is_empty()
    }

    /// θᵢ = arccos σᵢ, ascending.
    pub fn angles(&self) -> Vec<f64> {
        self.cosines.iter().map(|c| c.acos()).collect()
    }
}

/// Checks orthonormality and dimensions, then decomposes.
pub fn principal_angles(doc: &Subspace, proto_basis: &DMatrix<f64>) -> Result<PrincipalAngleDecomposition> {
    check_pair(&doc.basis, proto_basis)?;
    Ok(decompose(&doc.basis, proto_basis))
}

pub(crate) fn check_pair(doc: &DMatrix<f64>, proto: &DMatrix<f64>) -> Result<()> {
    if doc.nrows() != proto.nrows() {
        return Err(Error::DimensionMismatch {
            context: "principal angles".into(),
            expected: proto.nrows(),
            found: doc.nrows(),
        });
    }
    for b in [doc, proto] {
        let residual = orthonormality_max_abs(b);
        if !(residual <= ORTHONORMAL_TOLERANCE) {
            return Err(Error::NotOrthonormal { residual });
        }
    }
    Ok(())
}

/// SVD of docᵀ·proto without input validation.
pub(crate) fn decompose(doc: &DMatrix<f64>, proto: &DMatrix<f64>) -> PrincipalAngleDecomposition {
    let dim = doc.nrows();
    let cross = doc.tr_mul(proto);
    if cross.is_empty() {
        return PrincipalAngleDecomposition {
            cosines: DVector::zeros(0),
            doc_directions: DMatrix::zeros(dim, 0),
            proto_directions: DMatrix::zeros(dim, 0),
            proto_coords: DMatrix::zeros(proto.ncols(), 0),
            raw_cosines: DVector::zeros(0),
        };
    }
    let ThinSvd { u, s: raw, v } = thin_svd(&cross);
    PrincipalAngleDecomposition {
        cosines: raw.map(|s| s.clamp(0.0, 1.0)),
        doc_directions: doc * &u,
        proto_directions: proto * &v,
        proto_coords: v,
        raw_cosines: raw,
    }
}
