//! The two-group Gaussian mixture `y ~ Ber(α₁)`, `x | y ~ N(yμ₁ + (1−y)μ₂, Σ)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::indices::IndexSpec;
use crate::linalg::{spd_solve, spd_sqrt, SymmetricMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    alpha1: f64,
    mu1: DVector<f64>,
    mu2: DVector<f64>,
    sigma: SymmetricMatrix,
}

impl MixtureModel {
    pub fn new(
        alpha1: f64,
        mu1: DVector<f64>,
        mu2: DVector<f64>,
        sigma: SymmetricMatrix,
    ) -> Result<Self> {
        if !(alpha1 > 0.0 && alpha1 < 1.0) {
            return invalid(format!("alpha1 must lie in (0,1), got {alpha1}"));
        }
        let p = sigma.dim();
        if mu1.len() != p || mu2.len() != p {
            return invalid(format!(
                "mean dimensions ({}, {}) do not match sigma ({p})",
                mu1.len(),
                mu2.len()
            ));
        }
        if mu1.iter().chain(mu2.iter()).any(|x| !x.is_finite()) {
            return invalid("means must be finite");
        }
        if mu1 == mu2 {
            return invalid("mu1 and mu2 must differ");
        }
        if nalgebra::Cholesky::new(sigma.matrix().clone()).is_none() {
            return Err(Error::Singular("sigma is not positive definite".into()));
        }
        Ok(MixtureModel { alpha1, mu1, mu2, sigma })
    }

    /// μ₁ = 0.
    pub fn centered(alpha1: f64, mu2: DVector<f64>, sigma: SymmetricMatrix) -> Result<Self> {
        let p = mu2.len();
        Self::new(alpha1, DVector::zeros(p), mu2, sigma)
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn alpha2(&self) -> f64 {
        1.0 - self.alpha1
    }

    pub fn beta(&self) -> f64 {
        self.alpha1 * (1.0 - self.alpha1)
    }

    pub fn mu1(&self) -> &DVector<f64> {
        &self.mu1
    }

    pub fn mu2(&self) -> &DVector<f64> {
        &self.mu2
    }

    pub fn sigma(&self) -> &SymmetricMatrix {
        &self.sigma
    }

    pub fn h(&self) -> DVector<f64> {
        &self.mu2 - &self.mu1
    }

    pub fn mean(&self) -> DVector<f64> {
        &self.mu1 * self.alpha1 + &self.mu2 * self.alpha2()
    }

    /// Σ + β h hᵀ
    pub fn covariance(&self) -> SymmetricMatrix {
        let h = self.h();
        SymmetricMatrix::symmetrized(self.sigma.matrix() + &h * h.transpose() * self.beta())
    }
}

#[derive(Debug, Clone)]
pub struct DerivedParams {
    pub h: DVector<f64>,
    pub beta: f64,
    pub theta: DVector<f64>,
    pub tau: f64,
    pub theta_unit: DVector<f64>,
}

pub fn derive(model: &MixtureModel) -> Result<DerivedParams> {
    let h = model.h();
    let theta = spd_solve(model.sigma(), &h)?;
    let tau = h.dot(&theta);
    if !(tau > 0.0) {
        return Err(Error::Singular(format!("Mahalanobis distance {tau} is not positive")));
    }
    let theta_unit = theta.normalize();
    Ok(DerivedParams { h, beta: model.beta(), theta, tau, theta_unit })
}

/// n×p observations stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    p: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn from_row_major(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || p == 0 {
            return invalid("dataset needs at least one row and one column");
        }
        if values.len() != n * p {
            return invalid(format!("expected {} values, got {}", n * p, values.len()));
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return invalid(format!("non-finite value in row {}, column {}", i / p, i % p));
        }
        Ok(Dataset { n, p, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return invalid("rows have unequal lengths");
        }
        Self::from_row_major(rows.len(), p, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.p)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Applies `x ↦ A x + b` to every row.
    pub fn affine(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Dataset> {
        if a.ncols() != self.p || b.len() != a.nrows() {
            return invalid("affine map has incompatible shape");
        }
        let q = a.nrows();
        let mut out = Vec::with_capacity(self.n * q);
        for row in self.rows() {
            for i in 0..q {
                let mut s = b[i];
                for (j, x) in row.iter().enumerate() {
                    s += a[(i, j)] * x;
                }
                out.push(s);
            }
        }
        Dataset::from_row_major(self.n, q, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub data: Dataset,
    /// 1 marks the μ₁ group, 0 the μ₂ group.
    pub labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(data: Dataset, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != data.n() {
            return invalid(format!("{} labels for {} rows", labels.len(), data.n()));
        }
        if let Some(i) = labels.iter().position(|&l| l > 1) {
            return invalid(format!("label in row {i} is not 0 or 1"));
        }
        Ok(LabeledDataset { data, labels })
    }
}

pub fn sample(model: &MixtureModel, n: usize, seed: u64) -> Result<LabeledDataset> {
    sample_with(model, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sample_with<R: Rng + ?Sized>(
    model: &MixtureModel,
    n: usize,
    rng: &mut R,
) -> Result<LabeledDataset> {
    if n == 0 {
        return invalid("sample size must be at least 1");
    }
    let p = model.dim();
    let root = spd_sqrt(model.sigma())?;
    let root = root.matrix();
    let mut values = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n);
    let mut z = vec![0.0; p];
    for _ in 0..n {
        let first = rng.random::<f64>() < model.alpha1;
        let mu = if first { &model.mu1 } else { &model.mu2 };
        for zj in z.iter_mut() {
            *zj = rng.sample(StandardNormal);
        }
        for i in 0..p {
            let mut s = mu[i];
            for (j, zj) in z.iter().enumerate() {
                s += root[(i, j)] * zj;
            }
            values.push(s);
        }
        labels.push(first as u8);
    }
    LabeledDataset::new(Dataset::from_row_major(n, p, values)?, labels)
}

fn normal_moment(j: u32) -> f64 {
    if j % 2 == 1 {
        0.0
    } else {
        (1..j).step_by(2).map(f64::from).product()
    }
}

fn binomial(k: u32, j: u32) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * f64::from(k - i) / f64::from(i + 1))
}

/// E[(m + √g Z)^k]
fn shifted_normal_moment(m: f64, g: f64, k: u32) -> f64 {
    (0..=k)
        .map(|j| binomial(k, j) * m.powi((k - j) as i32) * g.powf(f64::from(j) / 2.0) * normal_moment(j))
        .sum()
}

/// E[(uᵀ(x − E x))^k]. The projection is the univariate mixture
/// α₁ N(−α₂t, g) + α₂ N(α₁t, g) with t = uᵀh, g = uᵀΣu.
pub fn population_projected_moment(model: &MixtureModel, u: &DVector<f64>, k: u32) -> Result<f64> {
    if !(2..=6).contains(&k) {
        return Err(Error::UnsupportedOrder(k));
    }
    if u.len() != model.dim() {
        return invalid("direction dimension does not match the model");
    }
    if (u.norm() - 1.0).abs() > 1e-8 {
        return invalid("direction must have unit norm");
    }
    let t = u.dot(&model.h());
    let g = model.sigma.quad_form(u);
    let (a1, a2) = (model.alpha1, model.alpha2());
    Ok(a1 * shifted_normal_moment(-a2 * t, g, k) + a2 * shifted_normal_moment(a1 * t, g, k))
}

fn snap(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        0.0
    } else {
        x
    }
}

/// Value and Euclidean gradient of the population index, both through
/// f = t²/g: {κ−3}² = β²(1−6β)² f⁴/(1+βf)⁴ and γ² = β²(1−4β) f³/(1+βf)³.
pub fn population_index_with_gradient(
    model: &MixtureModel,
    u: &DVector<f64>,
    spec: &IndexSpec,
) -> (f64, DVector<f64>) {
    let beta = model.beta();
    let h = model.h();
    let su = model.sigma.matrix() * u;
    let t = u.dot(&h);
    let g = u.dot(&su);
    let f = t * t / g;
    let df = &h * (2.0 * t / g) - su * (2.0 * t * t / (g * g));
    let q = 1.0 + beta * f;

    let ck = beta * beta * snap(1.0 - 6.0 * beta).powi(2);
    let kurt = ck * f.powi(4) / q.powi(4);
    let dkurt = 4.0 * ck * f.powi(3) / q.powi(5);

    let cs = beta * beta * snap(1.0 - 4.0 * beta);
    let skew = cs * f.powi(3) / q.powi(3);
    let dskew = 3.0 * cs * f * f / q.powi(4);

    let (ws, wk) = spec.weights();
    (ws * skew + wk * kurt, df * (ws * dskew + wk * dkurt))
}

pub fn population_index(model: &MixtureModel, u: &DVector<f64>, spec: &IndexSpec) -> f64 {
    population_index_with_gradient(model, u, spec).0
}

pub fn random_mean_at_distance(sigma: &SymmetricMatrix, tau: f64, seed: u64) -> Result<DVector<f64>> {
    random_mean_at_distance_with(sigma, tau, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// μ = Σ^{1/2} d √τ / ‖d‖ for a standard normal d, so that μᵀΣ⁻¹μ = τ.
pub fn random_mean_at_distance_with<R: Rng + ?Sized>(
    sigma: &SymmetricMatrix,
    tau: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return invalid(format!("tau must be positive and finite, got {tau}"));
    }
    let p = sigma.dim();
    let d = loop {
        let d = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        if d.norm() > 0.0 {
            break d;
        }
    };
    let scale = tau.sqrt() / d.norm();
    let root = spd_sqrt(sigma)?;
    Ok(root.matrix() * d * scale)
}

pub fn ar1_covariance(p: usize, rho: f64) -> Result<SymmetricMatrix> {
    if p == 0 {
        return invalid("dimension must be positive");
    }
    if !(rho.abs() < 1.0) {
        return invalid(format!("AR(1) coefficient must satisfy |rho| < 1, got {rho}"));
    }
    Ok(SymmetricMatrix::symmetrized(DMatrix::from_fn(p, p, |i, j| {
        rho.powi(i.abs_diff(j) as i32)
    })))
}

/// I_p + 1_p 1_pᵀ
pub fn ones_plus_identity(p: usize) -> SymmetricMatrix {
    SymmetricMatrix::symmetrized(DMatrix::from_fn(p, p, |i, j| if i == j { 2.0 } else { 1.0 }))
}

/// Serializable description of a model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub alpha1: f64,
    #[serde(default)]
    pub mu1: Option<Vec<f64>>,
    pub mu2: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<MixtureModel> {
        let p = self.mu2.len();
        let mu1 = self.mu1.clone().unwrap_or_else(|| vec![0.0; p]);
        let sigma = SymmetricMatrix::from_rows(&self.sigma)?;
        MixtureModel::new(self.alpha1, DVector::from_vec(mu1), DVector::from_vec(self.mu2.clone()), sigma)
    }
}
