//! Thin singular value decomposition and the Moore–Penrose pseudo-inverse.
//!
//! Tall inputs are first reduced by Householder QR; the square triangular
//! factor is then diagonalized with one-sided (Hestenes) Jacobi rotations.
//! Wide inputs are handled through their transpose. Every step runs in a
//! fixed order, so results are bit-reproducible for a given input.

use crate::error::{Error, Result};
use crate::linalg::matrix::{dot, norm2, Matrix};

const MAX_SWEEPS: usize = 80;

/// `a = left · diag(singulars) · rightᵀ` with `k = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// m×k, orthonormal columns.
    pub left: Matrix,
    /// Nonincreasing, nonnegative.
    pub singulars: Vec<f64>,
    /// n×k, orthonormal columns.
    pub right: Matrix,
}

impl SvdFactors {
    pub fn sigma_max(&self) -> f64 {
        self.singulars.first().copied().unwrap_or(0.0)
    }

    /// Default cutoff `max(m, n) · σ_max · ε`.
    pub fn default_cutoff(&self) -> f64 {
        let (m, n) = (self.left.rows(), self.right.rows());
        m.max(n) as f64 * self.sigma_max() * f64::EPSILON
    }

    /// Number of singular values strictly above `cutoff`.
    pub fn rank_above(&self, cutoff: f64) -> usize {
        self.singulars.iter().take_while(|&&s| s > cutoff).count()
    }

    pub fn reconstruct(&self) -> Matrix {
        let (m, n, k) = (self.left.rows(), self.right.rows(), self.singulars.len());
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let s = self.singulars[p];
            if s == 0.0 {
                continue;
            }
            for i in 0..m {
                let u = self.left.get(i, p) * s;
                if u == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += u * self.right.get(j, p);
                }
            }
        }
        Matrix::from_raw(m, n, out)
    }

    /// `pinv(a)·y` without forming the pseudo-inverse.
    pub fn solve(&self, y: &[f64], cutoff: f64) -> Result<Vec<f64>> {
        let proj = self.left.tr_mul_vec(y)?;
        let r = self.rank_above(cutoff);
        let scaled: Vec<f64> = (0..self.singulars.len())
            .map(|p| if p < r { proj[p] / self.singulars[p] } else { 0.0 })
            .collect();
        self.right.mul_vec(&scaled)
    }

    /// Pseudo-inverse from the factors, zeroing singular values `≤ cutoff`.
    pub fn pinv_with_cutoff(&self, cutoff: f64) -> Matrix {
        let (m, n) = (self.left.rows(), self.right.rows());
        let r = self.rank_above(cutoff);
        let mut out = vec![0.0; n * m];
        for p in 0..r {
            let inv = 1.0 / self.singulars[p];
            for i in 0..n {
                let v = self.right.get(i, p) * inv;
                if v == 0.0 {
                    continue;
                }
                let row = &mut out[i * m..(i + 1) * m];
                for (j, o) in row.iter_mut().enumerate() {
                    *o += v * self.left.get(j, p);
                }
            }
        }
        Matrix::from_raw(n, m, out)
    }
}

/// Thin SVD of a nonempty matrix.
pub fn svd(a: &Matrix) -> Result<SvdFactors> {
    if a.is_empty() {
        return Err(Error::Empty("svd"));
    }
    if a.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svd"));
    }
    if a.rows() >= a.cols() {
        svd_tall(a)
    } else {
        let f = svd_tall(&a.transpose())?;
        Ok(SvdFactors {
            left: f.right,
            singulars: f.singulars,
            right: f.left,
        })
    }
}

/// Moore–Penrose pseudo-inverse. Singular values `≤ tol` (default
/// `max(m, n) · σ_max · ε`) are treated as zero.
pub fn pinv(a: &Matrix, tol: Option<f64>) -> Result<Matrix> {
    if let Some(t) = tol {
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("pinv tolerance must be >= 0, got {t}")));
        }
    }
    let f = svd(a)?;
    let cutoff = tol.unwrap_or_else(|| f.default_cutoff());
    Ok(f.pinv_with_cutoff(cutoff))
}

/// Numerical rank: singular values strictly above the pinv cutoff.
pub fn rank(a: &Matrix, tol: Option<f64>) -> Result<usize> {
    let f = svd(a)?;
    let cutoff = tol.unwrap_or_else(|| f.default_cutoff());
    Ok(f.rank_above(cutoff))
}

struct Reflector {
    start: usize,
    v: Vec<f64>,
    vnorm_sq: f64,
}

impl Reflector {
    fn apply(&self, x: &mut [f64]) {
        let tail = &mut x[self.start..];
        let f = 2.0 * dot(&self.v, tail) / self.vnorm_sq;
        if f != 0.0 {
            for (t, v) in tail.iter_mut().zip(&self.v) {
                *t -= f * v;
            }
        }
    }
}

fn svd_tall(a: &Matrix) -> Result<SvdFactors> {
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();

    // Householder QR, R left in the upper triangle of `cols`.
    let mut reflectors = Vec::with_capacity(n);
    for k in 0..n {
        let x = &cols[k][k..];
        let alpha = norm2(x);
        if alpha == 0.0 || m - k == 1 {
            continue;
        }
        let mut v = x.to_vec();
        v[0] += alpha.copysign(x[0]);
        let vnorm_sq = dot(&v, &v);
        let h = Reflector { start: k, v, vnorm_sq };
        for col in cols.iter_mut().skip(k) {
            h.apply(col);
        }
        reflectors.push(h);
    }

    // R is upper triangular; the subdiagonal holds rounding residue only.
    let mut w: Vec<Vec<f64>> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let mut r = c[..n].to_vec();
            r.iter_mut().skip(j + 1).for_each(|x| *x = 0.0);
            r
        })
        .collect();

    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    // Columns below ε·‖A‖_F carry rounding noise only; they are not rotated
    // and end up as exact zero singular values (always below the pinv cutoff).
    let negligible = f64::EPSILON * a.frobenius_norm();
    one_sided_jacobi(&mut w, &mut v, negligible).ok_or(Error::NoConvergence { rows: m, cols: n })?;

    let mut sigma: Vec<f64> = w
        .iter()
        .map(|c| norm2(c))
        .map(|s| if s <= negligible { 0.0 } else { s })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));

    let mut u_small: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut v_sorted: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut sorted_sigma = Vec::with_capacity(n);
    let mut pending_zero = Vec::new();
    for &j in &order {
        let s = sigma[j];
        let col = if s > 0.0 {
            let c: Vec<f64> = w[j].iter().map(|x| x / s).collect();
            if c.iter().all(|x| x.is_finite()) {
                Some(c)
            } else {
                None
            }
        } else {
            None
        };
        match col {
            Some(c) => u_small.push(c),
            None => {
                sigma[j] = 0.0;
                pending_zero.push(u_small.len());
                u_small.push(Vec::new());
            }
        }
        sorted_sigma.push(sigma[j]);
        v_sorted.push(std::mem::take(&mut v[j]));
    }
    complete_orthonormal(&mut u_small, &pending_zero, n);

    // left = Q · [u_small; 0]
    let mut left = vec![0.0; m * n];
    for (p, uc) in u_small.iter().enumerate() {
        let mut full = vec![0.0; m];
        full[..n].copy_from_slice(uc);
        for h in reflectors.iter().rev() {
            h.apply(&mut full);
        }
        for i in 0..m {
            left[i * n + p] = full[i];
        }
    }
    let mut right = vec![0.0; n * n];
    for (p, vc) in v_sorted.iter().enumerate() {
        for i in 0..n {
            right[i * n + p] = vc[i];
        }
    }

    Ok(SvdFactors {
        left: Matrix::from_raw(m, n, left),
        singulars: sorted_sigma,
        right: Matrix::from_raw(n, n, right),
    })
}

/// Orthogonalizes the columns of `w` in place, accumulating rotations in `v`.
/// Returns `None` when the sweep cap is hit.
fn one_sided_jacobi(w: &mut [Vec<f64>], v: &mut [Vec<f64>], negligible: f64) -> Option<()> {
    let n = w.len();
    if n < 2 {
        return Some(());
    }
    let tol = f64::EPSILON * n as f64;
    let floor = negligible * negligible;
    let mut norms: Vec<f64> = w.iter().map(|c| dot(c, c)).collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha <= floor || beta <= floor {
                    continue;
                }
                let gamma = dot(&w[p], &w[q]);
                if gamma.abs() <= tol * (alpha.sqrt() * beta.sqrt()) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (wp, wq) = pair_mut(w, p, q);
                rotate(wp, wq, c, s);
                let (vp, vq) = pair_mut(v, p, q);
                rotate(vp, vq, c, s);
                norms[p] = dot(&w[p], &w[p]);
                norms[q] = dot(&w[q], &w[q]);
            }
        }
        if !rotated {
            return Some(());
        }
    }
    None
}

#[inline]
fn rotate(xp: &mut [f64], xq: &mut [f64], c: f64, s: f64) {
    for (a, b) in xp.iter_mut().zip(xq.iter_mut()) {
        let (ap, bq) = (*a, *b);
        *a = c * ap - s * bq;
        *b = s * ap + c * bq;
    }
}

fn pair_mut<T>(v: &mut [T], p: usize, q: usize) -> (&mut T, &mut T) {
    debug_assert!(p < q);
    let (lo, hi) = v.split_at_mut(q);
    (&mut lo[p], &mut hi[0])
}

/// Fills the listed empty slots with unit vectors orthogonal to every other column.
fn complete_orthonormal(cols: &mut [Vec<f64>], slots: &[usize], n: usize) {
    for &slot in slots {
        let mut best: Option<Vec<f64>> = None;
        let mut best_norm = -1.0;
        for e in 0..n {
            let mut cand = vec![0.0; n];
            cand[e] = 1.0;
            // Two passes of Gram–Schmidt against the filled columns.
            for _ in 0..2 {
                for (k, c) in cols.iter().enumerate() {
                    if k == slot || c.is_empty() {
                        continue;
                    }
                    let proj = dot(c, &cand);
                    for (x, y) in cand.iter_mut().zip(c) {
                        *x -= proj * y;
                    }
                }
            }
            let nrm = norm2(&cand);
            if nrm > best_norm {
                best_norm = nrm;
                best = Some(cand.into_iter().map(|x| x / nrm).collect());
            }
            if best_norm > 0.5 {
                break;
            }
        }
        cols[slot] = best.unwrap_or_else(|| vec![0.0; n]);
    }
}
