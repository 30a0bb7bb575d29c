//! EPKR, classical polynomial kernel ridge regression, coefficient-regularized
//! EPKR and the Gaussian baseline.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::centers::CenterSet;
use crate::data::{Dataset, NormalizationRecord};
use crate::error::{invalid, Error, Result};
use crate::kernel::{clip, kernel_matrix, GaussKernel, Kernel, Points, PolyKernel};
use crate::linalg::{dot, solve_ridge, svd, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Epkr,
    Pkr,
    CbrEpkr,
    Gkr,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Epkr => "epkr",
            Variant::Pkr => "pkr",
            Variant::CbrEpkr => "cbr-epkr",
            Variant::Gkr => "gkr",
        }
    }

    /// Whether the basis is a center set rather than the training inputs.
    pub fn uses_centers(self) -> bool {
        matches!(self, Variant::Epkr | Variant::CbrEpkr)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epkr" => Ok(Variant::Epkr),
            "pkr" => Ok(Variant::Pkr),
            "cbr-epkr" => Ok(Variant::CbrEpkr),
            "gkr" => Ok(Variant::Gkr),
            other => Err(invalid(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitOptions {
    /// Allow unverified centers and more centers than samples.
    pub force: bool,
    /// Overrides the default clipping bound `max |y_i|`.
    pub clip_bound: Option<f64>,
}

/// A fitted estimator `f(x) = Σ_j c_j K(basis_j, x)`.
///
/// Equality ignores `fit_seconds`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub variant: Variant,
    pub kernel: Kernel,
    pub basis: Points,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub clip_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizationRecord>,
    #[serde(skip)]
    pub fit_seconds: f64,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.variant == other.variant
            && self.kernel == other.kernel
            && self.basis == other.basis
            && self.coefficients == other.coefficients
            && self.lambda == other.lambda
            && self.clip_bound == other.clip_bound
            && self.normalization == other.normalization
    }
}

impl Model {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Number of basis functions.
    pub fn sparsity(&self) -> usize {
        self.basis.len()
    }

    pub fn degree(&self) -> Option<u32> {
        match self.kernel {
            Kernel::Poly(k) => Some(k.degree()),
            Kernel::Gauss(_) => None,
        }
    }

    pub fn width(&self) -> Option<f64> {
        match self.kernel {
            Kernel::Gauss(k) => Some(k.width()),
            Kernel::Poly(_) => None,
        }
    }

    pub fn predict(&self, x: &[f64], clipped: bool) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "Model::predict",
                expected: self.dim(),
                found: x.len(),
            });
        }
        let raw: f64 = self
            .basis
            .iter()
            .zip(&self.coefficients)
            .map(|(b, c)| c * self.kernel.eval_unchecked(b, x))
            .sum();
        Ok(if clipped { clip(raw, self.clip_bound) } else { raw })
    }

    pub fn predict_many(&self, xs: &Points, clipped: bool) -> Result<Vec<f64>> {
        if xs.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "Model::predict_many",
                expected: self.dim(),
                found: xs.dim(),
            });
        }
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let k = kernel_matrix(&self.kernel, xs, &self.basis)?;
        let raw = k.mul_vec(&self.coefficients)?;
        Ok(if clipped {
            raw.into_iter().map(|v| clip(v, self.clip_bound)).collect()
        } else {
            raw
        })
    }

    /// Plug-in rule: class 1 when the unclipped prediction is at least 1/2.
    pub fn classify_plugin(&self, x: &[f64]) -> Result<u8> {
        Ok(u8::from(self.predict(x, false)? >= 0.5))
    }
}

fn clip_bound(data: &Dataset, opts: &FitOptions) -> Result<f64> {
    match opts.clip_bound {
        Some(m) if m > 0.0 && m.is_finite() => Ok(m),
        Some(m) => Err(invalid(format!("clip bound must be positive, got {m}"))),
        None => Ok(data.max_abs_target()),
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("lambda must be finite and >= 0, got {lambda}")))
    }
}

fn check_centers(data: &Dataset, centers: &CenterSet, opts: &FitOptions) -> Result<()> {
    if centers.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            context: "centers vs data",
            expected: data.dim(),
            found: centers.dim(),
        });
    }
    if !centers.verified() && !opts.force {
        return Err(Error::RankDeficient {
            achieved: centers.rank(),
            required: centers.len(),
            attempts: centers.attempts(),
        });
    }
    if centers.len() > data.len() && !opts.force {
        return Err(Error::Underdetermined {
            centers: centers.len(),
            samples: data.len(),
        });
    }
    Ok(())
}

/// `pinv(a)·y` at the default cutoff.
pub(crate) fn least_squares(a: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    let f = svd(a)?;
    f.solve(y, f.default_cutoff())
}

/// Least squares with rows sorted by (input, target), so the result does not
/// depend on sample order even for ill-conditioned designs.
fn canonical_least_squares(a: &Matrix, data: &Dataset) -> Result<Vec<f64>> {
    let x = data.inputs();
    let y = data.targets();
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&i, &j| {
        x.point(i)
            .iter()
            .zip(x.point(j))
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or_else(|| y[i].total_cmp(&y[j]))
    });
    let sorted = Matrix::from_fn(a.rows(), a.cols(), |i, j| a.get(order[i], j))?;
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    least_squares(&sorted, &ys)
}

/// Design matrix `A_{m,n} = (K_s(x_i, η_j))`.
pub fn design_matrix(data: &Dataset, centers: &CenterSet) -> Result<Matrix> {
    let kernel = Kernel::Poly(PolyKernel::new(centers.degree())?);
    kernel_matrix(&kernel, data.inputs(), centers.points())
}

/// Least squares over the span of `(1 + η_j·x)^s`: `c = pinv(A_{m,n})·y`.
pub fn fit_epkr(data: &Dataset, centers: &CenterSet, opts: &FitOptions) -> Result<Model> {
    fit_cbr_epkr(data, centers, 0.0, opts).map(|mut m| {
        m.variant = Variant::Epkr;
        m
    })
}

/// `c = pinv(A_{m,n} + λ·I_{m,n})·y` with the rectangular identity `I_{m,n}`.
pub fn fit_cbr_epkr(data: &Dataset, centers: &CenterSet, lambda: f64, opts: &FitOptions) -> Result<Model> {
    let start = Instant::now();
    check_lambda(lambda)?;
    check_centers(data, centers, opts)?;
    let bound = clip_bound(data, opts)?;
    let a = design_matrix(data, centers)?;
    let coefficients = if lambda > 0.0 {
        least_squares(&a.add_diagonal(lambda), data.targets())?
    } else {
        canonical_least_squares(&a, data)?
    };
    Ok(Model {
        variant: Variant::CbrEpkr,
        kernel: Kernel::Poly(PolyKernel::new(centers.degree())?),
        basis: centers.points().clone(),
        coefficients,
        lambda,
        clip_bound: bound,
        normalization: None,
        fit_seconds: start.elapsed().as_secs_f64(),
    })
}

fn fit_kernel_ridge(data: &Dataset, kernel: Kernel, variant: Variant, lambda: f64, opts: &FitOptions) -> Result<Model> {
    let start = Instant::now();
    check_lambda(lambda)?;
    let bound = clip_bound(data, opts)?;
    let k = kernel_matrix(&kernel, data.inputs(), data.inputs())?;
    let m = data.len() as f64;
    let coefficients = if lambda > 0.0 {
        solve_ridge(&k, m * lambda, data.targets())?
    } else {
        least_squares(&k, data.targets())?
    };
    Ok(Model {
        variant,
        kernel,
        basis: data.inputs().clone(),
        coefficients,
        lambda,
        clip_bound: bound,
        normalization: None,
        fit_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Kernel ridge regression with `K_s`: `(K + mλI)c = y`; λ = 0 uses the pseudo-inverse.
pub fn fit_pkr(data: &Dataset, s: u32, lambda: f64, opts: &FitOptions) -> Result<Model> {
    fit_kernel_ridge(data, Kernel::Poly(PolyKernel::new(s)?), Variant::Pkr, lambda, opts)
}

/// Kernel ridge regression with the Gaussian kernel of width `delta`.
pub fn fit_gkr(data: &Dataset, delta: f64, lambda: f64, opts: &FitOptions) -> Result<Model> {
    fit_kernel_ridge(data, Kernel::Gauss(GaussKernel::new(delta)?), Variant::Gkr, lambda, opts)
}

/// Mean squared residual of a model on its own data, without clipping.
pub fn training_residual(model: &Model, data: &Dataset) -> Result<f64> {
    let p = model.predict_many(data.inputs(), false)?;
    let r: Vec<f64> = p.iter().zip(data.targets()).map(|(a, b)| a - b).collect();
    Ok((dot(&r, &r) / r.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::centers::{build_fundamental_system, CenterOptions};
    use crate::data::{rmse, Provenance};

    fn data_1d(xs: &[f64], f: impl Fn(f64) -> f64) -> Dataset {
        Dataset::new(
            Points::from_scalars(xs).unwrap(),
            xs.iter().map(|&x| f(x)).collect(),
            Provenance::Synthetic { seed: 0 },
        )
        .unwrap()
    }

    fn grid(m: usize) -> Vec<f64> {
        (0..m).map(|i| -0.95 + 1.9 * i as f64 / (m - 1) as f64).collect()
    }

    #[test]
    fn epkr_recovers_polynomial_in_span() {
        let data = data_1d(&grid(20), |x| (1.0 + 0.3 * x).powi(2));
        let c = build_fundamental_system(2, 1, &CenterOptions::default(), None, 1).unwrap();
        let model = fit_epkr(&data, &c, &FitOptions::default()).unwrap();
        assert!(training_residual(&model, &data).unwrap() < 1e-8);
        assert_eq!(model.lambda, 0.0);
        assert_eq!(model.sparsity(), 3);
        assert_eq!(model.clip_bound, data.max_abs_target());
    }

    #[test]
    fn constants_are_reproduced() {
        let data = data_1d(&grid(15), |_| 5.0);
        for s in 1..5 {
            let c = build_fundamental_system(s, 1, &CenterOptions::default(), None, s as u64).unwrap();
            let model = fit_epkr(&data, &c, &FitOptions::default()).unwrap();
            for x in [-1.0, -0.3, 0.0, 0.77, 1.0] {
                assert!((model.predict(&[x], false).unwrap() - 5.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn cbr_at_zero_matches_epkr() {
        let data = data_1d(&grid(30), |x| x.sin());
        let c = build_fundamental_system(4, 1, &CenterOptions::default(), None, 2).unwrap();
        let a = fit_epkr(&data, &c, &FitOptions::default()).unwrap();
        let b = fit_cbr_epkr(&data, &c, 0.0, &FitOptions::default()).unwrap();
        for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
        let big = fit_cbr_epkr(&data, &c, 1e9, &FitOptions::default()).unwrap();
        assert!(big.coefficients.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn ridge_limits() {
        let data = data_1d(&grid(12), |x| x.cos());
        for model in [
            fit_pkr(&data, 3, 1e12, &FitOptions::default()).unwrap(),
            fit_gkr(&data, 0.5, 1e12, &FitOptions::default()).unwrap(),
        ] {
            let p = model.predict_many(data.inputs(), false).unwrap();
            assert!(p.iter().all(|v| v.abs() < 1e-6));
        }
    }

    #[test]
    fn pkr_interpolates_five_points() {
        let xs = [-0.9, -0.4, 0.1, 0.5, 0.8];
        let data = data_1d(&xs, |x| (3.0 * x).sin());
        let model = fit_pkr(&data, 4, 0.0, &FitOptions::default()).unwrap();
        assert!(training_residual(&model, &data).unwrap() < 1e-6);
    }

    #[test]
    fn gkr_single_point() {
        let data = data_1d(&[0.3], |_| -2.0);
        let model = fit_gkr(&data, 0.2, 0.0, &FitOptions::default()).unwrap();
        assert!((model.predict(&[0.3], false).unwrap() + 2.0).abs() < 1e-10);
    }

    #[test]
    fn prediction_contract() {
        let basis = Points::from_rows(2, &[vec![0.5, 0.0]]).unwrap();
        let mut model = Model {
            variant: Variant::Epkr,
            kernel: Kernel::Poly(PolyKernel::new(1).unwrap()),
            basis,
            coefficients: vec![1.0],
            lambda: 0.0,
            clip_bound: 0.8,
            normalization: None,
            fit_seconds: 0.0,
        };
        assert_eq!(model.predict(&[0.0, 1.0], false).unwrap(), 1.0);
        assert_eq!(model.predict(&[0.0, 1.0], true).unwrap(), 0.8);
        assert!(model.predict(&[0.0], false).is_err());
        model.coefficients = vec![0.0];
        assert_eq!(model.predict(&[0.3, 0.3], true).unwrap(), 0.0);
    }

    #[test]
    fn plugin_boundary() {
        let mk = |c: f64| Model {
            variant: Variant::Epkr,
            kernel: Kernel::Poly(PolyKernel::new(1).unwrap()),
            basis: Points::from_scalars(&[0.0]).unwrap(),
            coefficients: vec![c],
            lambda: 0.0,
            clip_bound: 1.0,
            normalization: None,
            fit_seconds: 0.0,
        };
        assert_eq!(mk(0.7).classify_plugin(&[0.4]).unwrap(), 1);
        assert_eq!(mk(0.5).classify_plugin(&[0.4]).unwrap(), 1);
        assert_eq!(mk(0.2).classify_plugin(&[0.4]).unwrap(), 0);
    }

    #[test]
    fn guards() {
        let data = data_1d(&grid(5), |x| x);
        let c = build_fundamental_system(6, 1, &CenterOptions::default(), None, 3).unwrap();
        assert!(matches!(
            fit_epkr(&data, &c, &FitOptions::default()),
            Err(Error::Underdetermined { centers: 7, samples: 5 })
        ));
        assert!(fit_pkr(&data, 2, -1.0, &FitOptions::default()).is_err());
        assert!(fit_gkr(&data, 0.0, 1.0, &FitOptions::default()).is_err());
        let test = data_1d(&[0.1, 0.2], |x| x);
        let model = fit_pkr(&data, 1, 1e-3, &FitOptions::default()).unwrap();
        let p = model.predict_many(test.inputs(), true).unwrap();
        assert!(rmse(&p, test.targets()).unwrap() < 0.1);
    }
}
