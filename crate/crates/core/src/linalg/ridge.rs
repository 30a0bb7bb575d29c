//! Shifted symmetric solves `(A + λI)c = y` and a low-rank spectral path for
//! evaluating many shifts against one kernel matrix.

use crate::error::{Error, Result};
use crate::linalg::matrix::{dot, norm2, Matrix};
use crate::linalg::svd::svd;

const SYMMETRY_TOL: f64 = 1e-10;
/// Relative residual accepted from [`solve_ridge`].
pub const RIDGE_RESIDUAL_TOL: f64 = 1e-6;
const REFINEMENT_STEPS: usize = 3;

/// Solves `(a + lambda_eff·I) c = y` for symmetric `a`.
///
/// The effective shift is the caller's responsibility: the objective
/// `(1/m)Σ(f(x_i) − y_i)² + λ‖f‖²` leads to `lambda_eff = m·λ`.
/// With `lambda_eff = 0` and singular `a` the least-norm solution `pinv(a)·y` is
/// returned; its residual is then checked only inside the range of `a`.
pub fn solve_ridge(a: &Matrix, lambda_eff: f64, y: &[f64]) -> Result<Vec<f64>> {
    let m = a.rows();
    if a.cols() != m {
        return Err(Error::DimensionMismatch {
            context: "solve_ridge (square matrix)",
            expected: m,
            found: a.cols(),
        });
    }
    if y.len() != m {
        return Err(Error::DimensionMismatch {
            context: "solve_ridge (right-hand side)",
            expected: m,
            found: y.len(),
        });
    }
    if !(lambda_eff >= 0.0) || !lambda_eff.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda_eff must be finite and >= 0, got {lambda_eff}")));
    }
    if m == 0 {
        return Err(Error::Empty("solve_ridge"));
    }
    if !a.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::NotSymmetric {
            asymmetry: a.asymmetry().unwrap_or(f64::NAN),
        });
    }
    let y_norm = norm2(y);
    if y_norm == 0.0 {
        return Ok(vec![0.0; m]);
    }
    let bound = RIDGE_RESIDUAL_TOL * y_norm;
    let shifted = a.add_diagonal(lambda_eff);

    let direct = cholesky(&shifted)
        .map(Factor::Cholesky)
        .or_else(|| lu(&shifted).map(Factor::Lu));
    if let Some(factor) = direct {
        let mut c = factor.solve(y);
        let mut res = residual(&shifted, &c, y);
        for _ in 0..REFINEMENT_STEPS {
            if norm2(&res) <= bound * 1e-3 {
                break;
            }
            let delta = factor.solve(&res);
            let trial: Vec<f64> = c.iter().zip(&delta).map(|(ci, di)| ci + di).collect();
            let trial_res = residual(&shifted, &trial, y);
            if norm2(&trial_res) < norm2(&res) {
                c = trial;
                res = trial_res;
            } else {
                break;
            }
        }
        let r = norm2(&res);
        if c.iter().all(|v| v.is_finite()) && r <= bound {
            return Ok(c);
        }
        if lambda_eff > 0.0 {
            return Err(Error::ResidualTooLarge { residual: r, bound });
        }
    } else if lambda_eff > 0.0 {
        return Err(Error::ResidualTooLarge {
            residual: f64::INFINITY,
            bound,
        });
    }

    // Singular, unshifted system: least-norm least-squares solution.
    let f = svd(a)?;
    let cutoff = f.default_cutoff();
    let c = f.pinv_with_cutoff(cutoff).mul_vec(y)?;
    let res = residual(a, &c, y);
    let r_rank = f.rank_above(cutoff);
    let mut in_range = vec![0.0; m];
    for p in 0..r_rank {
        let u = f.left.column(p);
        let coef = dot(&u, &res);
        for (o, ui) in in_range.iter_mut().zip(&u) {
            *o += coef * ui;
        }
    }
    let r = norm2(&in_range);
    if r <= bound {
        Ok(c)
    } else {
        Err(Error::ResidualTooLarge { residual: r, bound })
    }
}

fn residual(a: &Matrix, c: &[f64], y: &[f64]) -> Vec<f64> {
    (0..a.rows()).map(|i| y[i] - dot(a.row(i), c)).collect()
}

enum Factor {
    Cholesky(Matrix),
    Lu((Matrix, Vec<usize>)),
}

impl Factor {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Factor::Cholesky(l) => cholesky_solve(l, b),
            Factor::Lu((lu, perm)) => lu_solve(lu, perm, b),
        }
    }
}

/// Lower Cholesky factor, or `None` when the matrix is not numerically positive definite.
pub(crate) fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let row_j = &l[j * n..j * n + j];
        let mut diag = a.get(j, j) - dot(row_j, row_j);
        if !(diag > 0.0) || !diag.is_finite() {
            return None;
        }
        diag = diag.sqrt();
        l[j * n + j] = diag;
        for i in (j + 1)..n {
            let s = a.get(i, j) - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            l[i * n + j] = s / diag;
        }
    }
    Some(Matrix::from_raw(n, n, l))
}

fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut z = b.to_vec();
    for i in 0..n {
        let s = dot(&l.row(i)[..i], &z[..i]);
        z[i] = (z[i] - s) / l.get(i, i);
    }
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in (i + 1)..n {
            s -= l.get(k, i) * z[k];
        }
        z[i] = s / l.get(i, i);
    }
    z
}

/// LU with partial pivoting; `None` on an exactly zero pivot.
fn lu(a: &Matrix) -> Option<(Matrix, Vec<usize>)> {
    let n = a.rows();
    let mut m: Vec<f64> = a.as_slice().to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (piv, pval) = (k..n)
            .map(|i| (i, m[i * n + k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pval == 0.0 {
            return None;
        }
        if piv != k {
            for j in 0..n {
                m.swap(k * n + j, piv * n + j);
            }
            perm.swap(k, piv);
        }
        let pivot = m[k * n + k];
        for i in (k + 1)..n {
            let f = m[i * n + k] / pivot;
            m[i * n + k] = f;
            if f != 0.0 {
                for j in (k + 1)..n {
                    m[i * n + j] -= f * m[k * n + j];
                }
            }
        }
    }
    Some((Matrix::from_raw(n, n, m), perm))
}

fn lu_solve(lu: &Matrix, perm: &[usize], b: &[f64]) -> Vec<f64> {
    let n = lu.rows();
    let mut z: Vec<f64> = perm.iter().map(|&p| b[p]).collect();
    for i in 0..n {
        let s = dot(&lu.row(i)[..i], &z[..i]);
        z[i] -= s;
    }
    for i in (0..n).rev() {
        let s = dot(&lu.row(i)[i + 1..], &z[i + 1..]);
        z[i] = (z[i] - s) / lu.get(i, i);
    }
    z
}

/// Rank-revealing pivoted Cholesky `K ≈ L·Lᵀ` of a positive semidefinite matrix.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    /// m×r factor.
    pub factor: Matrix,
    /// Pivot order; the first `r` entries are the selected rows.
    pub pivots: Vec<usize>,
}

/// Stops once every residual diagonal entry is `≤ rel_tol · max diag(K)`.
pub fn pivoted_cholesky(k: &Matrix, rel_tol: f64) -> Result<PivotedCholesky> {
    let m = k.rows();
    if k.cols() != m {
        return Err(Error::DimensionMismatch {
            context: "pivoted_cholesky (square matrix)",
            expected: m,
            found: k.cols(),
        });
    }
    let mut diag: Vec<f64> = (0..m).map(|i| k.get(i, i)).collect();
    let max_diag = diag.iter().fold(0.0_f64, |a, &b| a.max(b));
    let stop = rel_tol * max_diag;
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut pivots: Vec<usize> = (0..m).collect();
    let mut taken = vec![false; m];
    for j in 0..m {
        let (p, dp) = (0..m)
            .filter(|&i| !taken[i])
            .map(|i| (i, diag[i]))
            .fold((usize::MAX, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        if p == usize::MAX || !(dp > stop) || dp <= 0.0 {
            break;
        }
        taken[p] = true;
        let at = pivots.iter().position(|&x| x == p).unwrap_or(j);
        pivots.swap(j, at);
        let lpp = dp.sqrt();
        let mut col = vec![0.0; m];
        col[p] = lpp;
        for i in 0..m {
            if taken[i] {
                continue;
            }
            let mut s = k.get(i, p);
            for c in &cols {
                s -= c[i] * c[p];
            }
            let v = s / lpp;
            col[i] = v;
            diag[i] -= v * v;
        }
        cols.push(col);
    }
    let r = cols.len();
    let mut data = vec![0.0; m * r];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..m {
            data[i * r + j] = c[i];
        }
    }
    Ok(PivotedCholesky {
        factor: Matrix::from_raw(m, r, data),
        pivots,
    })
}

/// Spectral form `K ≈ U·diag(eig)·Uᵀ` for solving `(K + μI)c = y` at many shifts μ.
#[derive(Debug, Clone)]
pub struct RidgePath {
    basis: Matrix,
    eig: Vec<f64>,
}

impl RidgePath {
    /// Factors a positive semidefinite kernel matrix via pivoted Cholesky followed by a thin SVD.
    pub fn from_psd(k: &Matrix) -> Result<Self> {
        let m = k.rows();
        let pc = pivoted_cholesky(k, m as f64 * f64::EPSILON)?;
        if pc.factor.cols() == 0 {
            return Ok(Self {
                basis: Matrix::zeros(m, 0),
                eig: Vec::new(),
            });
        }
        let f = svd(&pc.factor)?;
        let eig = f.singulars.iter().map(|s| s * s).collect();
        Ok(Self { basis: f.left, eig })
    }

    pub fn rank(&self) -> usize {
        self.eig.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig
    }

    /// `c = (K + μI)⁻¹ y` for μ > 0; least-norm `pinv(K)·y` for μ = 0.
    pub fn solve(&self, mu: f64, y: &[f64]) -> Result<Vec<f64>> {
        let m = self.basis.rows();
        if y.len() != m {
            return Err(Error::DimensionMismatch {
                context: "RidgePath::solve",
                expected: m,
                found: y.len(),
            });
        }
        let proj = self.basis.tr_mul_vec(y)?;
        if mu > 0.0 {
            let in_span = self.basis.mul_vec(&proj)?;
            let scaled: Vec<f64> = proj.iter().zip(&self.eig).map(|(p, e)| p / (e + mu)).collect();
            let mut c = self.basis.mul_vec(&scaled)?;
            for ((ci, yi), si) in c.iter_mut().zip(y).zip(&in_span) {
                *ci += (yi - si) / mu;
            }
            Ok(c)
        } else {
            let cutoff = m as f64 * f64::EPSILON * self.eig.first().copied().unwrap_or(0.0);
            let scaled: Vec<f64> = proj
                .iter()
                .zip(&self.eig)
                .map(|(p, &e)| if e > cutoff { p / e } else { 0.0 })
                .collect();
            self.basis.mul_vec(&scaled)
        }
    }
}
