//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ppda_core::linalg::SymmetricMatrix;
use ppda_core::mixture::MixtureModel;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn normal_vector(p: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(p, |_, _| rng.sample(StandardNormal))
}

pub fn random_unit(p: usize, rng: &mut impl Rng) -> DVector<f64> {
    normal_vector(p, rng).normalize()
}

/// A Aᵀ/p + I/2 for a standard normal A.
pub fn random_spd(p: usize, rng: &mut impl Rng) -> SymmetricMatrix {
    let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let m = &a * a.transpose() / p as f64 + DMatrix::identity(p, p) * 0.5;
    SymmetricMatrix::new((&m + m.transpose()) / 2.0).unwrap()
}

pub fn random_model(p: usize, alpha1: f64, rng: &mut impl Rng) -> MixtureModel {
    let sigma = random_spd(p, rng);
    let mu1 = normal_vector(p, rng);
    let mu2 = &mu1 + normal_vector(p, rng) * rng.random_range(0.5..2.5);
    MixtureModel::new(alpha1, mu1, mu2, sigma).unwrap()
}

pub fn dense_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().lu().try_inverse().expect("invertible")
}

pub fn max_rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / a.amax().max(b.amax())
}

/// Raw moments E[Y^k], k = 0..=kmax, of Y ~ N(m, v).
fn normal_raw_moments(m: f64, v: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![1.0, m];
    for k in 2..=kmax {
        out.push(m * out[k - 1] + (k - 1) as f64 * v * out[k - 2]);
    }
    out.truncate(kmax + 1);
    out
}

/// Exact projected moments of the centred mixture along a unit u:
/// s_k = E t^k, m_k = E t^k x and G_k = E t^k x xᵀ with t = uᵀx, obtained by
/// conditioning x on t within each Gaussian component.
pub struct MixtureMoments {
    s: Vec<f64>,
    m: Vec<DVector<f64>>,
    g: Vec<DMatrix<f64>>,
}

impl MixtureMoments {
    pub fn new(model: &MixtureModel, u: &DVector<f64>, kmax: usize) -> Self {
        let p = model.dim();
        let sigma = model.sigma().matrix();
        let mean = model.mean();
        let su = sigma * u;
        let var = u.dot(&su);
        let b = &su / var;
        let r = sigma - &su * su.transpose() / var;
        let mut s = vec![0.0; kmax + 1];
        let mut m = vec![DVector::zeros(p); kmax + 1];
        let mut g = vec![DMatrix::zeros(p, p); kmax + 1];
        for (w, mu) in [(model.alpha1(), model.mu1()), (model.alpha2(), model.mu2())] {
            let a = mu - &mean;
            let mt = u.dot(&a);
            let d = &a - &b * mt;
            let e = normal_raw_moments(mt, var, kmax + 2);
            let ddr = &d * d.transpose() + &r;
            let db = &d * b.transpose() + &b * d.transpose();
            let bb = &b * b.transpose();
            for k in 0..=kmax {
                s[k] += w * e[k];
                m[k] += (&d * e[k] + &b * e[k + 1]) * w;
                g[k] += (&ddr * e[k] + &db * e[k + 1] + &bb * e[k + 2]) * w;
            }
        }
        MixtureMoments { s, m, g }
    }

    pub fn s(&self, k: usize) -> f64 {
        self.s[k]
    }

    pub fn m(&self, k: usize) -> &DVector<f64> {
        &self.m[k]
    }

    pub fn g(&self, k: usize) -> &DMatrix<f64> {
        &self.g[k]
    }
}

/// One term c · tᵉ · v of an influence function, where v is a fixed vector
/// or x itself.
pub struct Term {
    pub coef: f64,
    pub power: usize,
    pub vector: Option<DVector<f64>>,
}

fn term(coef: f64, power: usize, vector: Option<DVector<f64>>) -> Term {
    Term { coef, power, vector }
}

/// Cov of Σ terms under the mixture, from the exact moments.
pub fn influence_covariance(terms: &[Term], mm: &MixtureMoments) -> DMatrix<f64> {
    let p = mm.m(0).len();
    let mut mean = DVector::zeros(p);
    for t in terms {
        mean += match &t.vector {
            Some(v) => v * (t.coef * mm.s(t.power)),
            None => mm.m(t.power) * t.coef,
        };
    }
    let mut second = DMatrix::zeros(p, p);
    for a in terms {
        for b in terms {
            let e = a.power + b.power;
            let block = match (&a.vector, &b.vector) {
                (Some(va), Some(vb)) => va * vb.transpose() * mm.s(e),
                (Some(va), None) => va * mm.m(e).transpose(),
                (None, Some(vb)) => mm.m(e) * vb.transpose(),
                (None, None) => mm.g(e).clone(),
            };
            second += block * (a.coef * b.coef);
        }
    }
    second - &mean * mean.transpose()
}

pub enum Sandwich {
    Kurtosis,
    Skewness,
    Hybrid(f64),
}

/// Influence terms of √n g_n(u₀) and the limiting Jacobian of g_n at u₀.
fn residual_linearization(which: &Sandwich, mm: &MixtureMoments) -> (Vec<Term>, DMatrix<f64>) {
    let s = |k| mm.s(k);
    let m = |k| mm.m(k).clone();
    let kurt = || {
        let f = m(1) * (4.0 * s(3)) - m(2) * (3.0 * s(2));
        let terms = vec![
            term(1.0, 2, Some(m(3))),
            term(s(2), 3, None),
            term(-1.0, 4, Some(m(1))),
            term(-s(4), 1, None),
            term(1.0, 1, Some(f)),
            term(-s(2) * s(3), 0, None),
        ];
        let jac = m(3) * m(1).transpose() * 2.0 + mm.g(2) * (3.0 * s(2))
            - m(1) * m(3).transpose() * 4.0
            - mm.g(0) * s(4);
        (terms, jac)
    };
    let skew = || {
        let terms = vec![
            term(1.0, 2, Some(m(2))),
            term(s(2), 2, None),
            term(-1.0, 3, Some(m(1))),
            term(-s(3), 1, None),
            term(s(2), 1, Some(m(1))),
            term(-s(2) * s(2), 0, None),
        ];
        let jac = m(2) * m(1).transpose() * 2.0 + mm.g(1) * (2.0 * s(2))
            - m(1) * m(2).transpose() * 3.0
            - mm.g(0) * s(3);
        (terms, jac)
    };
    match which {
        Sandwich::Kurtosis => kurt(),
        Sandwich::Skewness => skew(),
        Sandwich::Hybrid(w1) => {
            let gamma = s(3) / s(2).powf(1.5);
            let excess = s(4) / (s(2) * s(2)) - 3.0;
            let a = 3.0 * w1 * gamma * s(2).sqrt();
            let b = 4.0 * (1.0 - w1) * excess;
            let (tg, jg) = skew();
            let (tk, jk) = kurt();
            let mut terms: Vec<Term> = tg.into_iter().map(|t| term(a * t.coef, t.power, t.vector)).collect();
            terms.extend(tk.into_iter().map(|t| term(b * t.coef, t.power, t.vector)));
            (terms, jg * a + jk * b)
        }
    }
}

/// Ψ = G⁻¹ Π G⁻ᵀ, with Π the exact covariance of the influence function of
/// the estimating residual and G its Jacobian augmented by h u₀ᵀ to account
/// for the unit-norm constraint.
pub fn sandwich_psi(model: &MixtureModel, which: &Sandwich) -> DMatrix<f64> {
    let h = model.h();
    let sinv = dense_inverse(model.sigma().matrix());
    let u0 = (&sinv * &h).normalize();
    let mm = MixtureMoments::new(model, &u0, 10);
    let (terms, jac) = residual_linearization(which, &mm);
    let pi = influence_covariance(&terms, &mm);
    let g = &jac + &h * u0.transpose() * (jac.norm() / h.norm());
    let ginv = dense_inverse(&g);
    let psi = &ginv * pi * ginv.transpose();
    (&psi + psi.transpose()) / 2.0
}

/// J [(θᵀh + 1/β) Σ⁻¹ + θθᵀ] Jᵀ with J = (‖θ‖² I − θθᵀ)/‖θ‖³, the delta
/// method applied to the limit of √n(w_n − θ).
pub fn lda_delta_psi(model: &MixtureModel) -> DMatrix<f64> {
    let p = model.dim();
    let h = model.h();
    let sinv = dense_inverse(model.sigma().matrix());
    let theta = &sinv * &h;
    let nt = theta.norm();
    let tt = &theta * theta.transpose();
    let j = (DMatrix::identity(p, p) * (nt * nt) - &tt) / nt.powi(3);
    let inner = &sinv * (theta.dot(&h) + 1.0 / model.beta()) + tt;
    &j * inner * j.transpose()
}

/// Sample index at an arbitrary non-zero v, straight from the data.
pub fn sample_index(rows: &[Vec<f64>], v: &DVector<f64>, w_skew: f64) -> f64 {
    let n = rows.len() as f64;
    let t: Vec<f64> = rows.iter().map(|r| r.iter().zip(v.iter()).map(|(a, b)| a * b).sum()).collect();
    let mean = t.iter().sum::<f64>() / n;
    let moment = |k: i32| t.iter().map(|x| (x - mean).powi(k)).sum::<f64>() / n;
    let (s2, s3, s4) = (moment(2), moment(3), moment(4));
    let gamma = s3 / s2.powf(1.5);
    let excess = s4 / (s2 * s2) - 3.0;
    w_skew * gamma * gamma + (1.0 - w_skew) * excess * excess
}

pub fn central_difference(f: impl Fn(&DVector<f64>) -> f64, u: &DVector<f64>, step: f64) -> DVector<f64> {
    DVector::from_fn(u.len(), |j, _| {
        let mut a = u.clone();
        let mut b = u.clone();
        a[j] += step;
        b[j] -= step;
        (f(&a) - f(&b)) / (2.0 * step)
    })
}
