//! Direction estimators: LDA, projection pursuit started from FOBI, PCA.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::indices::{evaluate, IndexSpec};
use crate::linalg::{spd_inverse_sqrt, spd_solve, sym_eigen, SymmetricMatrix};
use crate::mixture::{derive, population_index_with_gradient, Dataset, LabeledDataset, MixtureModel};
use crate::moments::{center, pooled_covariance, sample_covariance, scatter, split_groups, CenteredData, Divisor};

const LOW_INFORMATION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Lda,
    Pca,
    Fobi(IndexSpec),
    Pursuit(IndexSpec),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Lda => write!(f, "lda"),
            Method::Pca => write!(f, "pca"),
            Method::Fobi(s) => write!(f, "fobi-{s}"),
            Method::Pursuit(s) => write!(f, "pp-{s}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub direction: DVector<f64>,
    /// The maximized index for pursuit and FOBI, the leading eigenvalue for
    /// PCA, and the sample Mahalanobis distance for LDA.
    pub index_value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
    pub grad_norm_at_opt: f64,
    pub method: Method,
    pub low_information: bool,
}

impl EstimateResult {
    fn closed_form(direction: DVector<f64>, index_value: f64, method: Method) -> Self {
        EstimateResult {
            direction,
            index_value,
            iterations: 0,
            converged: true,
            restarts_used: 0,
            grad_norm_at_opt: 0.0,
            method,
            low_information: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    pub max_iter: usize,
    /// Threshold on the change of direction, and relative threshold on the
    /// tangent gradient.
    pub tol: f64,
    pub restarts: usize,
    /// Angle of the first trial step, in radians.
    pub initial_step: f64,
    /// Largest angle a single step may take.
    pub max_step: f64,
    /// Relative tangent-gradient bound under which a stalled line search
    /// still counts as converged.
    pub stall_grad_tol: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            max_iter: 2000,
            tol: 1e-10,
            restarts: 10,
            initial_step: 0.1,
            max_step: 1.0,
            stall_grad_tol: 1e-6,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return invalid("max_iter must be positive");
        }
        for (name, v) in [
            ("tol", self.tol),
            ("initial_step", self.initial_step),
            ("max_step", self.max_step),
            ("stall_grad_tol", self.stall_grad_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// A smooth function on the unit sphere, evaluated at unit vectors.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value_and_gradient(&self, u: &DVector<f64>) -> Result<(f64, DVector<f64>)>;
}

pub struct SampleIndex<'a> {
    pub spec: IndexSpec,
    pub data: &'a CenteredData,
}

impl Objective for SampleIndex<'_> {
    fn dim(&self) -> usize {
        self.data.p()
    }

    fn value_and_gradient(&self, u: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let ev = evaluate(&self.spec, self.data, u)?;
        Ok((ev.value, ev.gradient))
    }
}

pub struct PopulationIndex<'a> {
    pub spec: IndexSpec,
    pub model: &'a MixtureModel,
}

impl Objective for PopulationIndex<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn value_and_gradient(&self, u: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        Ok(population_index_with_gradient(self.model, u, &self.spec))
    }
}

#[derive(Debug, Clone)]
pub struct Ascent {
    pub direction: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

fn tangent(g: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    g - u * u.dot(g)
}

/// Projected gradient ascent with normalization retraction. The step grows
/// after every accepted move and is halved until the index increases.
pub fn maximize_on_sphere<O: Objective + ?Sized>(
    obj: &O,
    start: &DVector<f64>,
    opts: &OptimizerOptions,
) -> Result<Ascent> {
    let norm = start.norm();
    if start.len() != obj.dim() || !(norm > 0.0) || !norm.is_finite() {
        return invalid("start must be a non-zero finite vector of the objective's dimension");
    }
    let mut u = start / norm;
    let (mut v, g) = obj.value_and_gradient(&u)?;
    let mut gt = tangent(&g, &u);
    let mut gn = gt.norm();
    let mut step = opts.initial_step / gn.max(f64::MIN_POSITIVE);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        if gn <= opts.tol * (1.0 + v.abs()) {
            converged = true;
            break;
        }
        iterations += 1;
        let accepted = loop {
            let cand = (&u + &gt * step).normalize();
            if let Ok((vc, gc)) = obj.value_and_gradient(&cand) {
                if vc > v {
                    break Some((cand, vc, gc));
                }
            }
            step *= 0.5;
            if step * gn < 1e-16 {
                break None;
            }
        };
        let Some((cand, vc, gc)) = accepted else {
            converged = gn <= opts.stall_grad_tol * (1.0 + v.abs());
            break;
        };
        let change = (&cand - &u).norm();
        u = cand;
        v = vc;
        gt = tangent(&gc, &u);
        gn = gt.norm();
        if change < opts.tol {
            converged = true;
            break;
        }
        step = (2.0 * step).min(opts.max_step / gn.max(f64::MIN_POSITIVE));
    }
    Ok(Ascent { direction: u, value: v, iterations, converged, grad_norm: gn })
}

/// Flips the sign so that the first coordinate of largest magnitude is positive.
pub fn canonical_sign(u: DVector<f64>) -> DVector<f64> {
    let mut best = 0;
    for (j, x) in u.iter().enumerate() {
        if x.abs() > u[best].abs() {
            best = j;
        }
    }
    if u[best] < 0.0 {
        -u
    } else {
        u
    }
}

pub fn align_sign(u: &DVector<f64>, reference: &DVector<f64>) -> (DVector<f64>, f64) {
    if u.dot(reference) < 0.0 {
        (-u, -1.0)
    } else {
        (u.clone(), 1.0)
    }
}

/// (msi, 2(1 − msi)) against a unit reference direction.
pub fn msi_against(u: &DVector<f64>, reference_unit: &DVector<f64>) -> (f64, f64) {
    let (aligned, _) = align_sign(u, reference_unit);
    let m = aligned.dot(reference_unit);
    (m, 2.0 * (1.0 - m))
}

pub fn msi(u: &DVector<f64>, model: &MixtureModel) -> Result<(f64, f64)> {
    if u.len() != model.dim() {
        return invalid("direction dimension does not match the model");
    }
    Ok(msi_against(u, &derive(model)?.theta_unit))
}

/// w_n = S_n⁻¹(x̄₀ − x̄₁), where label 0 is the μ₂ group.
pub fn lda_direction(ld: &LabeledDataset) -> Result<EstimateResult> {
    let (n, p) = (ld.data.n(), ld.data.p());
    if n < p + 2 {
        return invalid(format!("LDA needs n >= p + 2, got n = {n}, p = {p}"));
    }
    let (ones, zeros) = split_groups(ld)?;
    let d = center(&zeros).mean - center(&ones).mean;
    let s = pooled_covariance(ld)?;
    let w = spd_solve(&s, &d)?;
    let norm = w.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Singular("pooled covariance solve gave a degenerate direction".into()));
    }
    let distance = d.dot(&w);
    Ok(EstimateResult::closed_form(w / norm, distance, Method::Lda))
}

pub fn fobi_direction(data: &Dataset, spec: &IndexSpec) -> Result<DVector<f64>> {
    fobi_centered(&center(data), spec)
}

/// Whitens with C_n^{-1/2}, eigendecomposes B = n⁻¹ Σ ‖z‖² z zᵀ and keeps the
/// back-transformed eigenvector with the largest index.
pub(crate) fn fobi_centered(c: &CenteredData, spec: &IndexSpec) -> Result<DVector<f64>> {
    let (n, p) = (c.n(), c.p());
    if n < p + 1 {
        return invalid(format!("FOBI needs n >= p + 1, got n = {n}, p = {p}"));
    }
    let r = spd_inverse_sqrt(&(scatter(c) / n as f64))?;
    let r = r.matrix();
    let mut b = DMatrix::<f64>::zeros(p, p);
    let mut z = DVector::<f64>::zeros(p);
    for row in c.rows() {
        z.gemv(1.0, r, &DVector::from_column_slice(row), 0.0);
        let w = z.norm_squared();
        b.ger(w, &z, &z, 1.0);
    }
    let eig = sym_eigen(&SymmetricMatrix::symmetrized(b / n as f64));
    let mut best: Option<(f64, DVector<f64>)> = None;
    for j in 0..p {
        let u = (r * eig.vector(j)).normalize();
        if let Ok(ev) = evaluate(spec, c, &u) {
            if best.as_ref().is_none_or(|(v, _)| ev.value > *v) {
                best = Some((ev.value, u));
            }
        }
    }
    best.map(|(_, u)| canonical_sign(u))
        .ok_or_else(|| Error::Estimation("index undefined along every FOBI direction".into()))
}

pub fn pp_direction(data: &Dataset, spec: &IndexSpec, opts: &OptimizerOptions, seed: u64) -> Result<EstimateResult> {
    opts.validate()?;
    let (n, p) = (data.n(), data.p());
    if n < p {
        return invalid(format!("projection pursuit needs n >= p, got n = {n}, p = {p}"));
    }
    let c = center(data);
    let obj = SampleIndex { spec: *spec, data: &c };
    let mut starts = vec![fobi_centered(&c, spec)?];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..opts.restarts {
        starts.push(DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal)));
    }
    let mut best: Option<Ascent> = None;
    for s in &starts {
        if let Ok(a) = maximize_on_sphere(&obj, s, opts) {
            if best.as_ref().is_none_or(|b| a.value > b.value) {
                best = Some(a);
            }
        }
    }
    let best = best.ok_or_else(|| Error::Estimation("index undefined at every start".into()))?;
    Ok(EstimateResult {
        direction: canonical_sign(best.direction),
        index_value: best.value,
        iterations: best.iterations,
        converged: best.converged,
        restarts_used: starts.len(),
        grad_norm_at_opt: best.grad_norm,
        method: Method::Pursuit(*spec),
        low_information: best.value < LOW_INFORMATION,
    })
}

pub fn pca_direction(data: &Dataset) -> Result<EstimateResult> {
    let cov = sample_covariance(data, Divisor::N)?;
    let eig = sym_eigen(&cov);
    Ok(EstimateResult::closed_form(canonical_sign(eig.vector(0)), eig.values[0], Method::Pca))
}
