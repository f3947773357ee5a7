//! Sample projection indices and their gradients.

use std::fmt;

use nalgebra::DVector;

use crate::error::{invalid, Error, Result};
use crate::moments::{projected_moments, CenteredData, ProjectedMoments};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    SquaredSkewness,
    SquaredExcessKurtosis,
    Hybrid,
}

/// Which index to maximize. For `Hybrid` the index is w₁γ² + (1−w₁)(κ−3)².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexSpec {
    pub kind: IndexKind,
    pub w1: f64,
}

impl IndexSpec {
    pub fn skewness() -> Self {
        IndexSpec { kind: IndexKind::SquaredSkewness, w1: 1.0 }
    }

    pub fn kurtosis() -> Self {
        IndexSpec { kind: IndexKind::SquaredExcessKurtosis, w1: 0.0 }
    }

    pub fn hybrid(w1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w1) {
            return invalid(format!("hybrid weight w1 must lie in [0,1], got {w1}"));
        }
        Ok(IndexSpec { kind: IndexKind::Hybrid, w1 })
    }

    /// (weight on γ², weight on (κ−3)²)
    pub fn weights(&self) -> (f64, f64) {
        match self.kind {
            IndexKind::SquaredSkewness => (1.0, 0.0),
            IndexKind::SquaredExcessKurtosis => (0.0, 1.0),
            IndexKind::Hybrid => (self.w1, 1.0 - self.w1),
        }
    }
}

impl fmt::Display for IndexSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            IndexKind::SquaredSkewness => write!(f, "skewness"),
            IndexKind::SquaredExcessKurtosis => write!(f, "kurtosis"),
            IndexKind::Hybrid => write!(f, "hybrid({})", self.w1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IndexEvaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub kurtosis: f64,
    pub skewness: f64,
}

fn moments(c: &CenteredData, u: &DVector<f64>) -> Result<ProjectedMoments> {
    if u.len() != c.p() {
        return invalid(format!("direction has length {}, data has {} columns", u.len(), c.p()));
    }
    if (u.norm() - 1.0).abs() > 1e-8 {
        return invalid("direction must have unit norm");
    }
    if c.n() < c.p() {
        return invalid(format!("need n >= p, got n = {} and p = {}", c.n(), c.p()));
    }
    let pm = projected_moments(c, u);
    if !(pm.s2 > f64::EPSILON * f64::EPSILON * c.total_variance) {
        return Err(Error::DegenerateDirection(format!(
            "projected second moment {:e} vanishes",
            pm.s2
        )));
    }
    Ok(pm)
}

pub fn kurtosis_n(c: &CenteredData, u: &DVector<f64>) -> Result<f64> {
    let pm = moments(c, u)?;
    Ok(pm.s4 / (pm.s2 * pm.s2))
}

pub fn skewness_n(c: &CenteredData, u: &DVector<f64>) -> Result<f64> {
    let pm = moments(c, u)?;
    Ok(pm.s3 / pm.s2.powf(1.5))
}

/// g_κ = s₂m₃ − s₄m₁ and g_γ = s₂m₂ − s₃m₁.
fn residuals(pm: &ProjectedMoments) -> (DVector<f64>, DVector<f64>) {
    (&pm.m3 * pm.s2 - &pm.m1 * pm.s4, &pm.m2 * pm.s2 - &pm.m1 * pm.s3)
}

/// Value and unconstrained Euclidean gradient:
/// ∇(κ−3)² = (8/s₂³)(κ−3) g_κ and ∇γ² = (6/s₂^{5/2}) γ g_γ.
pub fn evaluate(spec: &IndexSpec, c: &CenteredData, u: &DVector<f64>) -> Result<IndexEvaluation> {
    let pm = moments(c, u)?;
    let kurtosis = pm.s4 / (pm.s2 * pm.s2);
    let skewness = pm.s3 / pm.s2.powf(1.5);
    let (gk, gg) = residuals(&pm);
    let excess = kurtosis - 3.0;
    let (ws, wk) = spec.weights();
    let value = ws * skewness * skewness + wk * excess * excess;
    let gradient = gg * (ws * 6.0 * skewness / pm.s2.powf(2.5)) + gk * (wk * 8.0 * excess / pm.s2.powi(3));
    Ok(IndexEvaluation { value, gradient, kurtosis, skewness })
}

/// g_κ, g_γ, or for the hybrid 3w₁γ s₂^{1/2} g_γ + 4w₂(κ−3) g_κ, whose
/// multiple 2/s₂³ is the gradient of the hybrid index.
pub fn estimating_residual(spec: &IndexSpec, c: &CenteredData, u: &DVector<f64>) -> Result<DVector<f64>> {
    let pm = moments(c, u)?;
    let (gk, gg) = residuals(&pm);
    Ok(match spec.kind {
        IndexKind::SquaredExcessKurtosis => gk,
        IndexKind::SquaredSkewness => gg,
        IndexKind::Hybrid => {
            let kurtosis = pm.s4 / (pm.s2 * pm.s2);
            let skewness = pm.s3 / pm.s2.powf(1.5);
            gg * (3.0 * spec.w1 * skewness * pm.s2.sqrt()) + gk * (4.0 * (1.0 - spec.w1) * (kurtosis - 3.0))
        }
    })
}
