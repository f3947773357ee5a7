//! Limiting covariances of the direction estimators and the efficiency
//! quantities derived from them.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::linalg::{orthogonal_projector, spd_inverse, sym_eigen, SymmetricMatrix};
use crate::mixture::{derive, population_projected_moment, DerivedParams, MixtureModel};

/// Above this Mahalanobis distance the τ → ∞ limits are used.
pub const LARGE_TAU: f64 = 1e8;
const SNAP: f64 = 1e-12;
pub const W1_MIN: f64 = 1e-6;
pub const W1_MAX: f64 = 1.0 - 1e-6;
const SCAN_POINTS: usize = 2001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegeneratePoints {
    pub delta1: f64,
    pub delta2: f64,
    pub half: f64,
}

impl DegeneratePoints {
    pub fn new() -> Self {
        let r = 1.0 / 12f64.sqrt();
        DegeneratePoints { delta1: 0.5 - r, delta2: 0.5 + r, half: 0.5 }
    }
}

impl Default for DegeneratePoints {
    fn default() -> Self {
        Self::new()
    }
}

fn snap(x: f64) -> f64 {
    if x.abs() < SNAP {
        0.0
    } else {
        x
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 0.25) {
        return invalid(format!("beta must lie in (0, 1/4], got {beta}"));
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return invalid(format!("tau must be positive, got {tau}"));
    }
    Ok(())
}

fn check_w1(w1: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&w1) {
        return invalid(format!("w1 must lie in [0,1], got {w1}"));
    }
    Ok(())
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

pub fn beta_of(alpha1: f64) -> Result<f64> {
    if !(alpha1 > 0.0 && alpha1 < 1.0) {
        return invalid(format!("alpha1 must lie in (0,1), got {alpha1}"));
    }
    Ok(alpha1 * (1.0 - alpha1))
}

/// C_κ = Δ / (βτ³(1−6β)²), Δ = 6 + 24βτ + 9β(1−2β)τ² + β(1−3β)τ³.
pub fn c_kappa(beta: f64, tau: f64) -> Result<f64> {
    check_beta(beta)?;
    check_tau(tau)?;
    let b2 = snap(1.0 - 6.0 * beta).powi(2);
    if tau > LARGE_TAU {
        return Ok(ratio(1.0 - 3.0 * beta, b2));
    }
    Ok(ratio(delta(beta, tau), beta * tau.powi(3) * b2))
}

fn delta(beta: f64, tau: f64) -> f64 {
    6.0 + 24.0 * beta * tau + 9.0 * beta * (1.0 - 2.0 * beta) * tau * tau + beta * (1.0 - 3.0 * beta) * tau.powi(3)
}

/// C_γ = (2 + 6βτ + βτ²) / (βτ²(1−4β)).
pub fn c_gamma(beta: f64, tau: f64) -> Result<f64> {
    check_beta(beta)?;
    check_tau(tau)?;
    let a = snap(1.0 - 4.0 * beta);
    if tau > LARGE_TAU {
        return Ok(ratio(1.0, a));
    }
    Ok(ratio(2.0 + 6.0 * beta * tau + beta * tau * tau, beta * tau * tau * a))
}

pub fn c_eta(beta: f64, tau: f64, w1: f64) -> Result<f64> {
    check_beta(beta)?;
    check_tau(tau)?;
    check_w1(w1)?;
    let w2 = 1.0 - w1;
    let a = snap(1.0 - 4.0 * beta);
    let b = snap(1.0 - 6.0 * beta);
    if tau > LARGE_TAU {
        return Ok(c_eta_limit(beta, w1, a, b));
    }
    let q = 1.0 + beta * tau;
    let num = q
        * a
        * (9.0 * w1 * w1 * q * (2.0 + 6.0 * beta * tau + beta * tau * tau)
            + 24.0 * w1 * w2 * tau * tau * beta * b * (6.0 + tau))
        + 16.0 * w2 * w2 * tau * b * b * delta(beta, tau);
    let den = beta * tau * tau * (3.0 * w1 * q * a + 4.0 * w2 * tau * b * b).powi(2);
    Ok(ratio(num, den))
}

fn c_eta_limit(beta: f64, w1: f64, a: f64, b: f64) -> f64 {
    let w2 = 1.0 - w1;
    let num = 9.0 * w1 * w1 * beta * beta * a
        + 24.0 * w1 * w2 * beta * a * b
        + 16.0 * w2 * w2 * b * b * (1.0 - 3.0 * beta);
    ratio(num, (3.0 * w1 * beta * a + 4.0 * w2 * b * b).powi(2))
}

/// (Eff_κ, Eff_γ) = ((1−6β)²/(1−3β), 1−4β), the τ → ∞ efficiencies vs LDA.
pub fn efficiency_limits(beta: f64) -> Result<(f64, f64)> {
    check_beta(beta)?;
    Ok((snap(1.0 - 6.0 * beta).powi(2) / (1.0 - 3.0 * beta), snap(1.0 - 4.0 * beta)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AsymptoticMethod {
    Lda,
    Kurtosis,
    Skewness,
    Hybrid(f64),
}

impl fmt::Display for AsymptoticMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AsymptoticMethod::Lda => write!(f, "lda"),
            AsymptoticMethod::Kurtosis => write!(f, "kurtosis"),
            AsymptoticMethod::Skewness => write!(f, "skewness"),
            AsymptoticMethod::Hybrid(w) => write!(f, "hybrid({w})"),
        }
    }
}

impl AsymptoticMethod {
    pub fn constant(&self, beta: f64, tau: f64) -> Result<f64> {
        match *self {
            AsymptoticMethod::Lda => Ok(1.0),
            AsymptoticMethod::Kurtosis => c_kappa(beta, tau),
            AsymptoticMethod::Skewness => c_gamma(beta, tau),
            AsymptoticMethod::Hybrid(w1) => c_eta(beta, tau, w1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AsymptoticSummary {
    pub method: String,
    pub constant: f64,
    /// None when the constant is infinite.
    pub psi: Option<SymmetricMatrix>,
    pub trace: f64,
    pub efficiency_vs_lda: f64,
}

/// Ψ_U = ((1+βτ)/(‖θ‖²β)) P Σ⁻¹ P with P = I − θθᵀ/‖θ‖².
pub fn psi_lda(model: &MixtureModel) -> Result<(SymmetricMatrix, DerivedParams)> {
    let d = derive(model)?;
    let p = orthogonal_projector(&d.theta)?;
    let sinv = spd_inverse(model.sigma())?;
    let scale = (1.0 + d.beta * d.tau) / (d.theta.norm_squared() * d.beta);
    let m = p.matrix() * sinv.matrix() * p.matrix() * scale;
    Ok((SymmetricMatrix::symmetrized(m), d))
}

pub fn psi_matrix(method: AsymptoticMethod, model: &MixtureModel) -> Result<AsymptoticSummary> {
    let (psi_u, d) = psi_lda(model)?;
    let constant = method.constant(d.beta, d.tau)?;
    let (psi, trace) = if constant.is_finite() {
        let m = SymmetricMatrix::symmetrized(psi_u.into_inner() * constant);
        let t = m.trace();
        (Some(m), t)
    } else {
        (None, f64::INFINITY)
    };
    Ok(AsymptoticSummary {
        method: method.to_string(),
        constant,
        psi,
        trace,
        efficiency_vs_lda: 1.0 / constant,
    })
}

/// Minimizes `f` on [a, b] by golden-section search.
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Grid scan followed by golden-section refinement around the best node.
fn scan_then_refine(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> (f64, f64, f64) {
    let step = (hi - lo) / (points - 1) as f64;
    let values: Vec<f64> = (0..points).map(|i| f(lo + i as f64 * step)).collect();
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    let fmin = values[best];
    let fmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let a = lo + best.saturating_sub(1) as f64 * step;
    let b = lo + (best + 1).min(points - 1) as f64 * step;
    let x = golden_min(&f, a, b, 1e-10);
    let x = if f(x) <= fmin { x } else { lo + best as f64 * step };
    (x, fmin, fmax)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalWeight {
    pub w1: f64,
    pub unique: bool,
    pub c_eta: f64,
}

/// The w₁ ∈ [1e-6, 1−1e-6] minimizing C_η. Where C_η does not depend on w₁
/// the weight goes entirely to the index that still carries information.
pub fn optimal_weight(alpha1: f64, tau: f64) -> Result<OptimalWeight> {
    let beta = beta_of(alpha1)?;
    check_tau(tau)?;
    let f = |w: f64| c_eta(beta, tau, w).unwrap_or(f64::INFINITY);
    let (w, fmin, fmax) = scan_then_refine(f, W1_MIN, W1_MAX, SCAN_POINTS);
    if fmax - fmin < 1e-9 * fmin {
        let w1 = if snap(1.0 - 4.0 * beta) == 0.0 {
            W1_MIN
        } else if snap(1.0 - 6.0 * beta) == 0.0 {
            W1_MAX
        } else {
            w
        };
        return Ok(OptimalWeight { w1, unique: false, c_eta: f(w1) });
    }
    Ok(OptimalWeight { w1: w, unique: true, c_eta: f(w) })
}

/// A(w₁, τ) = ∫ 1/C_η dα₁ over [0.01, 0.99], composite Simpson on 2001 nodes.
pub fn average_efficiency(w1: f64, tau: f64) -> Result<f64> {
    check_w1(w1)?;
    check_tau(tau)?;
    let (lo, hi) = (0.01, 0.99);
    let intervals = SCAN_POINTS - 1;
    let h = (hi - lo) / intervals as f64;
    let mut sum = 0.0;
    for i in 0..=intervals {
        let a = lo + i as f64 * h;
        let c = c_eta(a * (1.0 - a), tau, w1)?;
        let weight = if i == 0 || i == intervals {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += weight / c;
    }
    Ok(sum * h / 3.0)
}

pub fn best_average_weight(tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let f = |w: f64| -average_efficiency(w, tau).unwrap_or(f64::NEG_INFINITY);
    Ok(scan_then_refine(f, W1_MIN, W1_MAX, 101).0)
}

/// α₁ ∈ (δ₁, 1/2) where kurtosis- and skewness-based pursuit are equally
/// efficient, together with its mirror image 1 − α₁.
pub fn equal_efficiency_frontier(tau: f64) -> Result<(f64, f64)> {
    check_tau(tau)?;
    let gap = |a: f64| -> f64 {
        let beta = a * (1.0 - a);
        1.0 / c_kappa(beta, tau).unwrap_or(f64::INFINITY) - 1.0 / c_gamma(beta, tau).unwrap_or(f64::INFINITY)
    };
    let pts = DegeneratePoints::new();
    let (mut lo, mut hi) = (pts.delta1 + 1e-9, 0.5 - 1e-9);
    if gap(lo) >= 0.0 || gap(hi) <= 0.0 {
        return Err(Error::Estimation(format!("no efficiency crossing bracketed at tau = {tau}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    Ok((a, 1.0 - a))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherCheck {
    pub consistent: bool,
    /// φ(1+βτ) minus the largest eigenvalue of Cov(x) once the eigenpair
    /// closest to θ is removed.
    pub eigen_margin: f64,
    /// ‖Σh − φh‖/‖h‖ with φ = hᵀΣh/hᵀh.
    pub eigenvector_residual: f64,
    pub phi: f64,
}

pub fn pca_fisher_check(model: &MixtureModel) -> Result<FisherCheck> {
    let d = derive(model)?;
    let sigma = model.sigma();
    let hh = d.h.norm_squared();
    let phi = sigma.quad_form(&d.h) / hh;
    let eigenvector_residual = (sigma.matrix() * &d.h - &d.h * phi).norm() / hh.sqrt();
    let (eig, j1) = aligned_covariance_eigen(model, &d);
    let others = (0..eig.values.len()).filter(|&j| j != j1).map(|j| eig.values[j]);
    let phi2 = others.fold(f64::NEG_INFINITY, f64::max);
    let eigen_margin = phi * (1.0 + d.beta * d.tau) - phi2;
    Ok(FisherCheck {
        consistent: eigenvector_residual < 1e-8 && eigen_margin > 0.0,
        eigen_margin,
        eigenvector_residual,
        phi,
    })
}

fn aligned_covariance_eigen(model: &MixtureModel, d: &DerivedParams) -> (crate::linalg::EigenDecomposition, usize) {
    let eig = sym_eigen(&model.covariance());
    let mut j1 = 0;
    for j in 0..eig.values.len() {
        if eig.vector(j).dot(&d.theta_unit).abs() > eig.vector(j1).dot(&d.theta_unit).abs() {
            j1 = j;
        }
    }
    (eig, j1)
}

/// Ψ_PCA = ((1+βτ)/‖θ‖²) M† [τ(Σ − hhᵀ/τ) + (1+βτ)(κ(θ)−1) hhᵀ] M†.
pub fn psi_pca(model: &MixtureModel) -> Result<AsymptoticSummary> {
    let check = pca_fisher_check(model)?;
    if !check.consistent {
        return Err(Error::Inapplicable(format!(
            "PCA is not Fisher consistent for this model (eigen margin {:e}, eigenvector residual {:e})",
            check.eigen_margin, check.eigenvector_residual
        )));
    }
    let (psi_u, d) = psi_lda(model)?;
    let (eig, j1) = aligned_covariance_eigen(model, &d);
    let p = model.dim();
    let lambda1 = eig.values[j1];
    let mut m_pinv = DMatrix::<f64>::zeros(p, p);
    for j in (0..p).filter(|&j| j != j1) {
        let u = eig.vector(j);
        m_pinv += &u * u.transpose() / (eig.values[j] - lambda1);
    }
    let s2 = population_projected_moment(model, &d.theta_unit, 2)?;
    let s4 = population_projected_moment(model, &d.theta_unit, 4)?;
    let kurt = s4 / (s2 * s2);
    let q = 1.0 + d.beta * d.tau;
    let hh = &d.h * d.h.transpose();
    let inner = (model.sigma().matrix() - &hh / d.tau) * d.tau + hh * (q * (kurt - 1.0));
    let psi = SymmetricMatrix::symmetrized(&m_pinv * inner * &m_pinv * (q / d.theta.norm_squared()));
    let trace = psi.trace();
    let ratio = trace / psi_u.trace();
    Ok(AsymptoticSummary {
        method: "pca".into(),
        constant: ratio,
        psi: Some(psi),
        trace,
        efficiency_vs_lda: 1.0 / ratio,
    })
}
