//! Sample moments. Sums are taken in a single sequential pass over the rows;
//! sums of fourth and higher degree use Neumaier compensation.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::mixture::{Dataset, LabeledDataset};

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Neumaier {
    sum: f64,
    c: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.c
    }
}

#[derive(Debug, Clone)]
pub struct CenteredData {
    pub mean: DVector<f64>,
    n: usize,
    p: usize,
    rows: Vec<f64>,
    /// Mean squared row norm, a scale for degeneracy checks.
    pub total_variance: f64,
}

impl CenteredData {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.chunks_exact(self.p)
    }

    pub fn as_dataset(&self) -> Dataset {
        Dataset::from_row_major(self.n, self.p, self.rows.clone()).expect("centered rows are finite")
    }

    /// uᵀx̃_i for every row.
    pub fn scores(&self, u: &DVector<f64>) -> Vec<f64> {
        let u = u.as_slice();
        self.rows()
            .map(|r| r.iter().zip(u).map(|(a, b)| a * b).sum())
            .collect()
    }
}

pub fn center(data: &Dataset) -> CenteredData {
    let (n, p) = (data.n(), data.p());
    let mut mean = DVector::zeros(p);
    for r in data.rows() {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean /= n as f64;
    let mut rows = Vec::with_capacity(n * p);
    let mut ss = 0.0;
    for r in data.rows() {
        for (x, m) in r.iter().zip(mean.iter()) {
            let d = x - m;
            ss += d * d;
            rows.push(d);
        }
    }
    CenteredData { mean, n, p, rows, total_variance: ss / n as f64 }
}

fn check_direction(c: &CenteredData, u: &DVector<f64>) -> Result<()> {
    if u.len() != c.p {
        return invalid(format!("direction has length {}, data has {} columns", u.len(), c.p));
    }
    if (u.norm() - 1.0).abs() > 1e-8 {
        return invalid("direction must have unit norm");
    }
    Ok(())
}

pub fn projected_moment(c: &CenteredData, u: &DVector<f64>, k: u32) -> Result<f64> {
    if !(1..=6).contains(&k) {
        return Err(Error::UnsupportedOrder(k));
    }
    check_direction(c, u)?;
    let mut acc = Neumaier::default();
    for z in c.scores(u) {
        acc.add(z.powi(k as i32));
    }
    Ok(acc.value() / c.n as f64)
}

pub fn projected_moment_vector(c: &CenteredData, u: &DVector<f64>, k: u32) -> Result<DVector<f64>> {
    if k > 3 {
        return Err(Error::UnsupportedOrder(k));
    }
    check_direction(c, u)?;
    let mut acc = vec![Neumaier::default(); c.p];
    for (z, r) in c.scores(u).into_iter().zip(c.rows()) {
        let w = z.powi(k as i32);
        for (a, x) in acc.iter_mut().zip(r) {
            a.add(w * x);
        }
    }
    Ok(DVector::from_iterator(c.p, acc.iter().map(|a| a.value() / c.n as f64)))
}

/// The projected moments the indices need, from one pass over the scores.
#[derive(Debug, Clone)]
pub(crate) struct ProjectedMoments {
    pub s2: f64,
    pub s3: f64,
    pub s4: f64,
    pub m1: DVector<f64>,
    pub m2: DVector<f64>,
    pub m3: DVector<f64>,
}

pub(crate) fn projected_moments(c: &CenteredData, u: &DVector<f64>) -> ProjectedMoments {
    let p = c.p;
    let u = u.as_slice();
    let (mut s2, mut s3, mut s4) = (0.0, 0.0, Neumaier::default());
    let mut m1 = vec![0.0; p];
    let mut m2 = vec![0.0; p];
    let mut m3 = vec![Neumaier::default(); p];
    for r in c.rows() {
        let z: f64 = r.iter().zip(u).map(|(a, b)| a * b).sum();
        let z2 = z * z;
        let z3 = z2 * z;
        s2 += z2;
        s3 += z3;
        s4.add(z2 * z2);
        for j in 0..p {
            let x = r[j];
            m1[j] += z * x;
            m2[j] += z2 * x;
            m3[j].add(z3 * x);
        }
    }
    let inv = 1.0 / c.n as f64;
    ProjectedMoments {
        s2: s2 * inv,
        s3: s3 * inv,
        s4: s4.value() * inv,
        m1: DVector::from_iterator(p, m1.into_iter().map(|x| x * inv)),
        m2: DVector::from_iterator(p, m2.into_iter().map(|x| x * inv)),
        m3: DVector::from_iterator(p, m3.iter().map(|x| x.value() * inv)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Divisor {
    N,
    NMinusOne,
}

pub fn sample_covariance(data: &Dataset, divisor: Divisor) -> Result<SymmetricMatrix> {
    let n = data.n();
    if n < 2 {
        return invalid("sample covariance needs at least two rows");
    }
    let c = center(data);
    let d = match divisor {
        Divisor::N => n as f64,
        Divisor::NMinusOne => (n - 1) as f64,
    };
    Ok(scatter(&c) / d)
}

pub(crate) fn scatter(c: &CenteredData) -> SymmetricMatrix {
    let p = c.p;
    let mut s = DMatrix::<f64>::zeros(p, p);
    for r in c.rows() {
        for i in 0..p {
            for j in 0..=i {
                s[(i, j)] += r[i] * r[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            s[(j, i)] = s[(i, j)];
        }
    }
    SymmetricMatrix::symmetrized(s)
}

impl std::ops::Div<f64> for SymmetricMatrix {
    type Output = SymmetricMatrix;

    fn div(self, d: f64) -> SymmetricMatrix {
        SymmetricMatrix::symmetrized(self.into_inner() / d)
    }
}

/// Splits a labeled dataset into its label-1 and label-0 groups.
pub(crate) fn split_groups(ld: &LabeledDataset) -> Result<(Dataset, Dataset)> {
    let p = ld.data.p();
    let mut ones = Vec::new();
    let mut zeros = Vec::new();
    for (r, &l) in ld.data.rows().zip(&ld.labels) {
        if l == 1 {
            ones.extend_from_slice(r);
        } else {
            zeros.extend_from_slice(r);
        }
    }
    if ones.is_empty() || zeros.is_empty() {
        return Err(Error::Estimation("both label groups must be non-empty".into()));
    }
    Ok((
        Dataset::from_row_major(ones.len() / p, p, ones)?,
        Dataset::from_row_major(zeros.len() / p, p, zeros)?,
    ))
}

/// S_n = (n−2)⁻¹ Σ_groups Σ_i (x_i − x̄_g)(x_i − x̄_g)ᵀ
pub fn pooled_covariance(ld: &LabeledDataset) -> Result<SymmetricMatrix> {
    let n = ld.data.n();
    if n < 3 {
        return invalid("pooled covariance needs at least three rows");
    }
    let (a, b) = split_groups(ld)?;
    let s = scatter(&center(&a)).into_inner() + scatter(&center(&b)).into_inner();
    Ok(SymmetricMatrix::symmetrized(s / (n - 2) as f64))
}
