//! Dense symmetric linear algebra on small matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const SPD_FLOOR: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// A finite, square matrix that is symmetric up to a relative tolerance of
/// 1e-12. Stored exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return invalid(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            ));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return invalid("matrix has non-finite entries");
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let p = m.nrows();
        for i in 0..p {
            for j in 0..i {
                let d = (m[(i, j)] - m[(j, i)]).abs();
                if d > SYMMETRY_TOL * scale {
                    return invalid(format!(
                        "matrix is not symmetric: entries ({i},{j}) and ({j},{i}) differ by {d:e}"
                    ));
                }
            }
        }
        Ok(Self::symmetrized(m))
    }

    /// Averages `m` with its transpose without checking.
    pub(crate) fn symmetrized(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        SymmetricMatrix((m + t) * 0.5)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if rows.iter().any(|r| r.len() != p) {
            return invalid("matrix rows must all have length equal to the row count");
        }
        Self::new(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
    }

    pub fn identity(p: usize) -> Self {
        SymmetricMatrix(DMatrix::identity(p, p))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn quad_form(&self, u: &DVector<f64>) -> f64 {
        u.dot(&(&self.0 * u))
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Sorted descending.
    pub values: DVector<f64>,
    /// Column `j` pairs with `values[j]`.
    pub vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn vector(&self, j: usize) -> DVector<f64> {
        self.vectors.column(j).into_owned()
    }

    /// V diag(f(λ)) Vᵀ
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> SymmetricMatrix {
        let p = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..p {
            let s = f(self.values[j]);
            scaled.column_mut(j).scale_mut(s);
        }
        SymmetricMatrix::symmetrized(scaled * self.vectors.transpose())
    }
}

/// Cyclic Jacobi eigensolver.
pub fn sym_eigen(a: &SymmetricMatrix) -> EigenDecomposition {
    let p = a.dim();
    let mut m = a.matrix().clone();
    let mut v = DMatrix::<f64>::identity(p, p);
    let total = m.norm_squared();

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..p {
            for j in 0..i {
                off += 2.0 * m[(i, j)] * m[(i, j)];
            }
        }
        if off <= f64::EPSILON * f64::EPSILON * total * 1e-2 || off == 0.0 {
            break;
        }
        for q in 1..p {
            for r in 0..q {
                let apq = m[(r, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(r, r)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..p {
                    let mkr = m[(k, r)];
                    let mkq = m[(k, q)];
                    m[(k, r)] = c * mkr - s * mkq;
                    m[(k, q)] = s * mkr + c * mkq;
                }
                for k in 0..p {
                    let mrk = m[(r, k)];
                    let mqk = m[(q, k)];
                    m[(r, k)] = c * mrk - s * mqk;
                    m[(q, k)] = s * mrk + c * mqk;
                }
                m[(r, q)] = 0.0;
                m[(q, r)] = 0.0;
                for k in 0..p {
                    let vkr = v[(k, r)];
                    let vkq = v[(k, q)];
                    v[(k, r)] = c * vkr - s * vkq;
                    v[(k, q)] = s * vkr + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    let values = DVector::from_iterator(p, order.iter().map(|&i| m[(i, i)]));
    let mut vectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    EigenDecomposition { values, vectors }
}

fn checked_spd_eigen(a: &SymmetricMatrix) -> Result<EigenDecomposition> {
    let eig = sym_eigen(a);
    let max = eig.values[0];
    let min = eig.values[eig.values.len() - 1];
    if max <= 0.0 || min <= SPD_FLOOR * max {
        return Err(Error::Singular(format!(
            "smallest eigenvalue {min:e} is below {SPD_FLOOR:e} times the largest {max:e}"
        )));
    }
    Ok(eig)
}

pub fn spd_inverse_sqrt(a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    Ok(checked_spd_eigen(a)?.spectral_map(|l| 1.0 / l.sqrt()))
}

pub fn spd_sqrt(a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    Ok(checked_spd_eigen(a)?.spectral_map(f64::sqrt))
}

pub fn spd_inverse(a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let chol = nalgebra::Cholesky::new(a.matrix().clone())
        .ok_or_else(|| Error::Singular("Cholesky factorization failed".into()))?;
    Ok(SymmetricMatrix::symmetrized(chol.inverse()))
}

pub fn spd_solve(a: &SymmetricMatrix, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = nalgebra::Cholesky::new(a.matrix().clone())
        .ok_or_else(|| Error::Singular("Cholesky factorization failed".into()))?;
    Ok(chol.solve(b))
}

/// Inverse of `A = Σ_{j≥2} λ_j w_j w_jᵀ + w₁ w₁ᵀ C` through
/// `B† + (w₁ᵀCw₁)⁻¹ w₁w₁ᵀ(I − C B†)` with `B† = Σ_{j≥2} λ_j⁻¹ w_j w_jᵀ`.
///
/// `w` holds w₁..w_p as columns and `lambda[j-2]` pairs with w_j. A is not
/// symmetric in general, hence the plain matrix result.
pub fn structured_rank1_inverse(
    lambda: &[f64],
    w: &DMatrix<f64>,
    c: &SymmetricMatrix,
) -> Result<DMatrix<f64>> {
    let p = c.dim();
    if w.nrows() != p || w.ncols() != p {
        return invalid(format!("w must be {p}x{p}, got {}x{}", w.nrows(), w.ncols()));
    }
    if lambda.len() + 1 != p {
        return invalid(format!("expected {} lambdas, got {}", p - 1, lambda.len()));
    }
    let gram = w.transpose() * w - DMatrix::<f64>::identity(p, p);
    if gram.amax() > 1e-10 {
        return invalid("w columns are not orthonormal");
    }
    if let Some(j) = lambda.iter().position(|&l| l == 0.0 || !l.is_finite()) {
        return Err(Error::Singular(format!("lambda_{} is zero", j + 2)));
    }
    let w1 = w.column(0).into_owned();
    let d = c.quad_form(&w1);
    if d <= 0.0 {
        return Err(Error::Singular(format!("w1' C w1 = {d:e} is not positive")));
    }
    let mut b_pinv = DMatrix::<f64>::zeros(p, p);
    for (k, &l) in lambda.iter().enumerate() {
        let wj = w.column(k + 1);
        b_pinv += (wj * wj.transpose()) / l;
    }
    let rest = DMatrix::<f64>::identity(p, p) - c.matrix() * &b_pinv;
    Ok(&b_pinv + (&w1 * w1.transpose()) * rest / d)
}

pub fn orthogonal_projector(v: &DVector<f64>) -> Result<SymmetricMatrix> {
    let nn = v.norm_squared();
    if !(nn > 0.0) || !nn.is_finite() {
        return invalid("projector direction must be a non-zero finite vector");
    }
    let p = v.len();
    Ok(SymmetricMatrix::symmetrized(
        DMatrix::identity(p, p) - v * v.transpose() / nn,
    ))
}
