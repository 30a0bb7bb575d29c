//! Polynomial and Gaussian kernels, kernel matrices and the clipping operator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, Matrix};

/// A list of points in R^d stored as one flat coordinate array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Points {
    dim: usize,
    coords: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("point dimension must be >= 1"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                context: "Points::new (coordinate count)",
                expected: (coords.len() / dim + 1) * dim,
                found: coords.len(),
            });
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Points::new"));
        }
        Ok(Self { dim, coords })
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, coords: Vec::new() }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "Points::from_rows",
                    expected: dim,
                    found: r.len(),
                });
            }
            coords.extend_from_slice(r);
        }
        Self::new(dim, coords)
    }

    /// One-dimensional points from scalars.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(1, values.to_vec())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub(crate) fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn push(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "Points::push",
                expected: self.dim,
                found: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Points::push"));
        }
        self.coords.extend_from_slice(p);
        Ok(())
    }

    /// Points at the given indices, in that order.
    pub fn select(&self, idx: &[usize]) -> Points {
        let mut coords = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            coords.extend_from_slice(self.point(i));
        }
        Points { dim: self.dim, coords }
    }

    pub fn max_norm(&self) -> f64 {
        self.iter().map(|p| dot(p, p).sqrt()).fold(0.0, f64::max)
    }
}

/// `K_s(x, y) = (1 + x·y)^s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolyKernel {
    degree: u32,
}

impl PolyKernel {
    pub fn new(degree: u32) -> Result<Self> {
        if degree == 0 {
            return Err(invalid("polynomial kernel degree must be >= 1"));
        }
        Ok(Self { degree })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        powi_exact(1.0 + dot(x, y), self.degree)
    }
}

/// `exp(−‖x − y‖² / δ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussKernel {
    width: f64,
}

impl GaussKernel {
    pub fn new(width: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(invalid(format!("gaussian width must be > 0, got {width}")));
        }
        Ok(Self { width })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        (-d2 / (self.width * self.width)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Kernel {
    Poly(PolyKernel),
    Gauss(GaussKernel),
}

impl Kernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "kernel evaluation",
                expected: x.len(),
                found: y.len(),
            });
        }
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Kernel::Poly(k) => k.eval_unchecked(x, y),
            Kernel::Gauss(k) => k.eval_unchecked(x, y),
        }
    }
}

impl From<PolyKernel> for Kernel {
    fn from(k: PolyKernel) -> Self {
        Kernel::Poly(k)
    }
}

impl From<GaussKernel> for Kernel {
    fn from(k: GaussKernel) -> Self {
        Kernel::Gauss(k)
    }
}

/// Integer power by repeated squaring.
#[inline]
pub fn powi_exact(base: f64, exp: u32) -> f64 {
    let mut result = 1.0;
    let mut b = base;
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            result *= b;
        }
        e >>= 1;
        if e > 0 {
            b *= b;
        }
    }
    result
}

pub fn poly_eval(k: PolyKernel, x: &[f64], y: &[f64]) -> Result<f64> {
    Kernel::Poly(k).eval(x, y)
}

pub fn gauss_eval(k: GaussKernel, x: &[f64], y: &[f64]) -> Result<f64> {
    Kernel::Gauss(k).eval(x, y)
}

/// `(kernel(rows_i, cols_j))`, m×n. Rows are filled in parallel; each entry
/// is computed independently, so the result does not depend on scheduling.
pub fn kernel_matrix(kernel: &Kernel, rows: &Points, cols: &Points) -> Result<Matrix> {
    if rows.is_empty() {
        return Err(Error::Empty("kernel_matrix rows"));
    }
    if cols.is_empty() {
        return Err(Error::Empty("kernel_matrix cols"));
    }
    if rows.dim() != cols.dim() {
        return Err(Error::DimensionMismatch {
            context: "kernel_matrix",
            expected: rows.dim(),
            found: cols.dim(),
        });
    }
    let (m, n) = (rows.len(), cols.len());
    let mut data = vec![0.0; m * n];
    data.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
        let x = rows.point(i);
        for (j, o) in out.iter_mut().enumerate() {
            *o = kernel.eval_unchecked(x, cols.point(j));
        }
    });
    Matrix::from_row_major(m, n, data).map_err(|_| Error::NonFinite("kernel_matrix (entry overflow)"))
}

/// `Π_M t = min(M, |t|)·sgn(t)`.
#[inline]
pub fn clip(value: f64, bound: f64) -> f64 {
    debug_assert!(bound >= 0.0);
    value.clamp(-bound, bound)
}
