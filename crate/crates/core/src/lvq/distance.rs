use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::angles::{check_pair, decompose, PrincipalAngleDecomposition};
use super::{Prototype, RelevanceVector};
use crate::error::{Error, Result};
use crate::subspace::Subspace;

/// Per-angle dissimilarity summed (relevance-weighted) into the distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    /// sin²θ = 1 − cos²θ
    #[default]
    Chordal,
    /// (2θ/π)², scaled so both kinds share the range [0, 1]
    Geodesic,
}

impl DistanceKind {
    /// Contribution of one principal angle with cosine `c`.
    pub fn angle_cost(self, c: f64) -> f64 {
        match self {
            DistanceKind::Chordal => 1.0 - c * c,
            DistanceKind::Geodesic => {
                let theta = c.clamp(-1.0, 1.0).acos();
                4.0 / (PI * PI) * theta * theta
            }
        }
    }

    /// Derivative of [`angle_cost`](Self::angle_cost) with respect to the cosine.
    pub fn angle_cost_slope(self, c: f64) -> f64 {
        match self {
            DistanceKind::Chordal => -2.0 * c,
            DistanceKind::Geodesic => {
                let c = c.clamp(-1.0, 1.0);
                let theta = c.acos();
                let sin = (1.0 - c * c).sqrt();
                // θ / sin θ → 1 as θ → 0
                let ratio = if theta < 1e-6 { 1.0 + theta * theta / 6.0 } else { theta / sin };
                -8.0 / (PI * PI) * ratio
            }
        }
    }

    pub fn code(self) -> u8 {
        match self {
            DistanceKind::Chordal => 0,
            DistanceKind::Geodesic => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DistanceKind::Chordal),
            1 => Some(DistanceKind::Geodesic),
            _ => None,
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceKind::Chordal => "chordal",
            DistanceKind::Geodesic => "geodesic",
        })
    }
}

impl FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "chordal" => Ok(DistanceKind::Chordal),
            "geodesic" => Ok(DistanceKind::Geodesic),
            other => Err(Error::InvalidArgument(format!(
                "unknown distance kind {other:?} (expected chordal or geodesic)"
            ))),
        }
    }
}

/// Σᵢ λᵢ·cost(σᵢ) over all `λ.len()` indices; indices past the available
/// cosines count as σ = 0.
pub fn distance_from_cosines(cosines: &[f64], relevances: &[f64], kind: DistanceKind) -> f64 {
    relevances
        .iter()
        .enumerate()
        .map(|(i, &l)| l * kind.angle_cost(cosines.get(i).copied().unwrap_or(0.0)))
        .sum()
}

/// ∂distance/∂λᵢ = cost(σᵢ).
pub(crate) fn relevance_gradient(cosines: &[f64], d: usize, kind: DistanceKind) -> DVector<f64> {
    DVector::from_fn(d, |i, _| kind.angle_cost(cosines.get(i).copied().unwrap_or(0.0)))
}

/// Relevance-weighted subspace distance between a document and a prototype.
pub fn distance(doc: &Subspace, proto: &Prototype, relevances: &RelevanceVector, kind: DistanceKind) -> Result<f64> {
    check_pair(&doc.basis, &proto.basis)?;
    if relevances.len() != proto.basis.ncols() {
        return Err(Error::DimensionMismatch {
            context: "relevance vector".into(),
            expected: proto.basis.ncols(),
            found: relevances.len(),
        });
    }
    Ok(distance_unchecked(&doc.basis, &proto.basis, relevances.weights(), kind).0)
}

/// Distance and the decomposition it came from, without input validation.
pub(crate) fn distance_unchecked(
    doc: &DMatrix<f64>,
    proto: &DMatrix<f64>,
    relevances: &[f64],
    kind: DistanceKind,
) -> (f64, PrincipalAngleDecomposition) {
    let pa = decompose(doc, proto);
    (distance_from_cosines(pa.cosines.as_slice(), relevances, kind), pa)
}

/// ∂distance/∂W for the prototype basis W (D×d):
/// Σᵢ λᵢ · cost′(σᵢ) · (doc principal direction i)(right singular vector i)ᵀ.
/// Missing angles are constant and contribute nothing.
pub(crate) fn prototype_gradient(
    pa: &PrincipalAngleDecomposition,
    relevances: &[f64],
    kind: DistanceKind,
) -> DMatrix<f64> {
    let dim = pa.doc_directions.nrows();
    let d = pa.proto_coords.nrows();
    let mut grad = DMatrix::zeros(dim, d);
    for i in 0..pa.raw_cosines.len().min(relevances.len()) {
        let weight = relevances[i] * kind.angle_cost_slope(pa.raw_cosines[i]);
        if weight == 0.0 {
            continue;
        }
        grad.ger(weight, &pa.doc_directions.column(i), &pa.proto_coords.column(i), 1.0);
    }
    grad
}
