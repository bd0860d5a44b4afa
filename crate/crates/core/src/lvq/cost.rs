use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Relative distance difference μ and the per-example cost term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTerm {
    /// (d⁺ − d⁻)/(d⁺ + d⁻) ∈ [−1, 1]
    pub mu: f64,
    /// sigmoid(β·μ), the soft misclassification probability
    pub cost: f64,
}

impl CostTerm {
    /// (∂E/∂d⁺, ∂E/∂d⁻) at the given distances.
    pub fn distance_slopes(&self, d_plus: f64, d_minus: f64, beta: f64) -> (f64, f64) {
        let sum = d_plus + d_minus;
        let common = beta * self.cost * (1.0 - self.cost) * 2.0 / (sum * sum);
        (common * d_minus, -common * d_plus)
    }
}

fn check_distances(d_plus: f64, d_minus: f64, beta: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("sigmoid slope must be positive, got {beta}")));
    }
    if !(d_plus >= 0.0 && d_minus >= 0.0) || !d_plus.is_finite() || !d_minus.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "distances must be finite and non-negative, got {d_plus} and {d_minus}"
        )));
    }
    if d_plus + d_minus <= 0.0 {
        return Err(Error::DegenerateSample);
    }
    Ok(())
}

/// GLVQ cost of one example given the distances to its nearest correct
/// (`d_plus`) and nearest wrong (`d_minus`) prototype.
pub fn cost_term(d_plus: f64, d_minus: f64, beta: f64) -> Result<CostTerm> {
    check_distances(d_plus, d_minus, beta)?;
    let mu = (d_plus - d_minus) / (d_plus + d_minus);
    Ok(CostTerm {
        mu,
        cost: sigmoid(beta * mu),
    })
}

/// Probability of the positive class from the distances to the nearest
/// positive and nearest negative prototype.
pub fn score_from_distances(d_pos: f64, d_neg: f64, beta: f64) -> Result<f64> {
    check_distances(d_pos, d_neg, beta)?;
    Ok(sigmoid(beta * (d_neg - d_pos) / (d_neg + d_pos)))
}
