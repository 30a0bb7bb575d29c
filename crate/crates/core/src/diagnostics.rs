//! Empirical checks of two matrix-analytic claims: a lower bound on the
//! smallest eigenvalue of `((1 + ξ_i·ξ_j)^s)` for sphere points, and a norm
//! equivalence between the empirical quadratic form and a Chebyshev-weighted
//! L² norm in one dimension.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::centers::{build_fundamental_system, poly_dim, sample_sphere, CenterOptions};
use crate::error::{invalid, Result};
use crate::kernel::{kernel_matrix, Kernel, Points, PolyKernel};
use crate::linalg::{dot, min_eig_sym, rank};
use crate::rng::{derive_seed, rng_from_seed};

/// Largest `n` accepted by [`check_eig_bound`].
pub const MAX_EIG_DIM: usize = 2000;
pub const EIG_SLACK: f64 = 1e-9;
pub const DEFAULT_NORM_SLACK: f64 = 0.2;

/// `Γ(two_a / 2)` for a positive integer `two_a`.
pub fn gamma_half_integer(two_a: u32) -> Result<f64> {
    if two_a == 0 {
        return Err(invalid("gamma argument must be positive"));
    }
    if two_a.is_multiple_of(2) {
        let k = two_a / 2;
        Ok((1..k).map(f64::from).product())
    } else {
        let k = (two_a - 1) / 2;
        Ok((1..=k).map(|i| f64::from(i) - 0.5).product::<f64>() * PI.sqrt())
    }
}

/// `s!·Γ(d/2) / (2^s·Γ(s + d/2))`.
pub fn eig_lower_bound(s: u32, d: usize) -> Result<f64> {
    let d32 = u32::try_from(d).map_err(|_| invalid("dimension too large"))?;
    // s!/Γ(s + d/2) = Π_{i=1..s} i / (i − 1 + d/2) · 1/Γ(d/2), so the Γ(d/2) cancels.
    let mut acc = 1.0;
    for i in 1..=s {
        acc *= f64::from(i) / (2.0 * (f64::from(i) - 1.0 + f64::from(d32) / 2.0));
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigBoundReport {
    pub s: u32,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    pub observed: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Smallest eigenvalue of `((1 + ξ_i·ξ_j)^s)` for `n = C(s+d, d)` uniform sphere points.
pub fn check_eig_bound(s: u32, d: usize, seed: u64) -> Result<EigBoundReport> {
    if d < 2 {
        return Err(invalid("eigenvalue check needs d >= 2"));
    }
    if s == 0 {
        return Err(invalid("eigenvalue check needs s >= 1"));
    }
    let n = poly_dim(s, d)?;
    if n > MAX_EIG_DIM {
        return Err(invalid(format!("n = {n} exceeds {MAX_EIG_DIM}")));
    }
    let xi = sample_sphere(d, n, seed)?;
    let a = kernel_matrix(&Kernel::Poly(PolyKernel::new(s)?), &xi, &xi)?;
    let observed = min_eig_sym(&a)?;
    let bound = eig_lower_bound(s, d)?;
    Ok(EigBoundReport {
        s,
        d,
        n,
        seed,
        observed,
        bound,
        pass: observed >= bound - EIG_SLACK,
    })
}

/// Gauss–Chebyshev rule for `∫ f(x) dx/√(1−x²)` on [−1, 1].
pub fn chebyshev_quadrature(count: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if count == 0 {
        return Err(invalid("node count must be >= 1"));
    }
    let nodes = (1..=count)
        .map(|k| ((2 * k - 1) as f64 * PI / (2 * count) as f64).cos())
        .collect();
    Ok((nodes, vec![PI / count as f64; count]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEquivReport {
    pub s: u32,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    /// `∫ f² dx/√(1−x²)`.
    pub weighted_norm: f64,
    /// `(1/m)‖A_{m,n} c‖²`.
    pub quadratic_form: f64,
    pub ratio: f64,
    /// `π · ratio`: the same comparison against the probability-normalized weight.
    pub normalized_ratio: f64,
    pub full_rank: bool,
    pub slack: f64,
    pub pass: bool,
}

/// Draws `m` points from the arcsine law on [−1, 1].
pub fn sample_arcsine(m: usize, seed: u64) -> Result<Points> {
    let mut rng = rng_from_seed(seed);
    let xs: Vec<f64> = (0..m).map(|_| (PI * rng.random::<f64>()).cos()).collect();
    Points::from_scalars(&xs)
}

/// Norm-equivalence trial with a random standard normal coefficient vector.
pub fn check_norm_equivalence(s: u32, m: usize, seed: u64, slack: f64) -> Result<NormEquivReport> {
    let n = poly_dim(s, 1)?;
    let mut rng = rng_from_seed(derive_seed(seed, &[1]));
    let c: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    check_norm_equivalence_with(s, m, &c, seed, slack)
}

/// Norm-equivalence trial for a given coefficient vector.
pub fn check_norm_equivalence_with(s: u32, m: usize, coeffs: &[f64], seed: u64, slack: f64) -> Result<NormEquivReport> {
    if s == 0 {
        return Err(invalid("norm equivalence needs s >= 1"));
    }
    let n = poly_dim(s, 1)?;
    if m < n {
        return Err(invalid(format!("need m >= n = {n}, got {m}")));
    }
    if coeffs.len() != n {
        return Err(invalid(format!("expected {n} coefficients, got {}", coeffs.len())));
    }
    let centers = build_fundamental_system(s, 1, &CenterOptions::default(), None, derive_seed(seed, &[0]))?;
    let kernel = Kernel::Poly(PolyKernel::new(s)?);

    let (nodes, weights) = chebyshev_quadrature(n)?;
    let at_nodes = kernel_matrix(&kernel, &Points::from_scalars(&nodes)?, centers.points())?.mul_vec(coeffs)?;
    let weighted_norm: f64 = at_nodes.iter().zip(&weights).map(|(f, w)| w * f * f).sum();

    let x = sample_arcsine(m, derive_seed(seed, &[2]))?;
    let a = kernel_matrix(&kernel, &x, centers.points())?;
    let ac = a.mul_vec(coeffs)?;
    let quadratic_form = dot(&ac, &ac) / m as f64;
    let full_rank = rank(&a, None)? == n;

    let ratio = if weighted_norm == 0.0 && quadratic_form == 0.0 {
        1.0
    } else {
        quadratic_form / weighted_norm
    };
    Ok(NormEquivReport {
        s,
        m,
        n,
        seed,
        weighted_norm,
        quadratic_form,
        ratio,
        normalized_ratio: PI * ratio,
        full_rank,
        slack,
        pass: ratio >= 1.0 - slack && ratio <= 3.0 + slack,
    })
}

/// Fraction of norm-equivalence trials that must land inside the band.
pub const NORM_PASS_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigBattery {
    pub s: u32,
    pub d: usize,
    pub seeds: usize,
    pub bound: f64,
    pub min_observed: f64,
    pub violations: usize,
    pub failing_seeds: Vec<u64>,
    pub trials: Vec<EigBoundReport>,
    pub pass: bool,
}

/// `seeds` eigenvalue trials; trial `t` uses `derive_seed(seed, [d, s, t])`.
pub fn eig_battery(s: u32, d: usize, seeds: usize, seed: u64) -> Result<EigBattery> {
    if seeds == 0 {
        return Err(invalid("battery needs at least one seed"));
    }
    let trials = (0..seeds as u64)
        .map(|t| check_eig_bound(s, d, derive_seed(seed, &[d as u64, u64::from(s), t])))
        .collect::<Result<Vec<_>>>()?;
    let failing_seeds: Vec<u64> = trials.iter().filter(|t| !t.pass).map(|t| t.seed).collect();
    Ok(EigBattery {
        s,
        d,
        seeds,
        bound: trials[0].bound,
        min_observed: trials.iter().map(|t| t.observed).fold(f64::INFINITY, f64::min),
        violations: failing_seeds.len(),
        pass: failing_seeds.is_empty(),
        failing_seeds,
        trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormBattery {
    pub s: u32,
    pub m: usize,
    pub seeds: usize,
    pub pass_fraction: f64,
    pub mean_ratio: f64,
    pub mean_normalized_ratio: f64,
    /// Every passing trial had a full-column-rank design.
    pub rank_ok: bool,
    pub failing_seeds: Vec<u64>,
    pub trials: Vec<NormEquivReport>,
    pub pass: bool,
}

/// `seeds` norm-equivalence trials; trial `t` uses `derive_seed(seed, [s, t])`.
pub fn norm_battery(s: u32, m: usize, seeds: usize, seed: u64, slack: f64) -> Result<NormBattery> {
    if seeds == 0 {
        return Err(invalid("battery needs at least one seed"));
    }
    let trials = (0..seeds as u64)
        .map(|t| check_norm_equivalence(s, m, derive_seed(seed, &[u64::from(s), t]), slack))
        .collect::<Result<Vec<_>>>()?;
    let passing = trials.iter().filter(|t| t.pass).count();
    let pass_fraction = passing as f64 / seeds as f64;
    let rank_ok = trials.iter().filter(|t| t.pass).all(|t| t.full_rank);
    let k = seeds as f64;
    Ok(NormBattery {
        s,
        m,
        seeds,
        pass_fraction,
        mean_ratio: trials.iter().map(|t| t.ratio).sum::<f64>() / k,
        mean_normalized_ratio: trials.iter().map(|t| t.normalized_ratio).sum::<f64>() / k,
        rank_ok,
        failing_seeds: trials.iter().filter(|t| !t.pass).map(|t| t.seed).collect(),
        pass: pass_fraction >= NORM_PASS_FRACTION && rank_ok,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_values() {
        assert_eq!(gamma_half_integer(2).unwrap(), 1.0);
        assert!((gamma_half_integer(1).unwrap() - PI.sqrt()).abs() < 1e-15);
        assert!((gamma_half_integer(5).unwrap() - 0.75 * PI.sqrt()).abs() < 1e-15);
        assert_eq!(gamma_half_integer(10).unwrap(), 24.0);
        assert!(gamma_half_integer(0).is_err());
    }

    #[test]
    fn gamma_matches_closed_forms() {
        let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
        for k in 0..12u32 {
            let closed = fact(2 * k) * PI.sqrt() / (4f64.powi(k as i32) * fact(k));
            let g = gamma_half_integer(2 * k + 1).unwrap();
            assert!((g - closed).abs() <= 1e-13 * closed);
            if k >= 1 {
                assert_eq!(gamma_half_integer(2 * k).unwrap(), fact(k - 1));
            }
        }
    }

    #[test]
    fn bound_spot_values() {
        assert!((eig_lower_bound(1, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!((eig_lower_bound(1, 3).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // Direct evaluation of the Γ form.
        for (s, d) in [(2u32, 2usize), (3, 3), (2, 5)] {
            let fact: f64 = (1..=s).map(f64::from).product();
            let direct = fact * gamma_half_integer(d as u32).unwrap()
                / (2f64.powi(s as i32) * gamma_half_integer(2 * s + d as u32).unwrap());
            assert!((eig_lower_bound(s, d).unwrap() - direct).abs() < 1e-14);
        }
        assert_eq!(eig_lower_bound(0, 4).unwrap(), 1.0);
    }

    #[test]
    fn quadrature_moments() {
        let (x, w) = chebyshev_quadrature(1).unwrap();
        assert!((w.iter().sum::<f64>() - PI).abs() < 1e-15);
        assert!(x[0].abs() < 1e-15);
        let (x, w) = chebyshev_quadrature(2).unwrap();
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        assert!((m2 - PI / 2.0).abs() < 1e-12);
        for n in 1..8 {
            let (x, w) = chebyshev_quadrature(n).unwrap();
            let m1: f64 = x.iter().zip(&w).map(|(x, w)| w * x).sum();
            assert!(m1.abs() < 1e-14);
        }
    }

    #[test]
    fn zero_coefficients_give_unit_ratio() {
        let r = check_norm_equivalence_with(2, 30, &[0.0; 3], 1, DEFAULT_NORM_SLACK).unwrap();
        assert_eq!((r.weighted_norm, r.quadratic_form, r.ratio), (0.0, 0.0, 1.0));
    }

    #[test]
    fn quadratic_form_positive_with_full_rank() {
        for seed in 0..10 {
            let r = check_norm_equivalence(3, 40, seed, DEFAULT_NORM_SLACK).unwrap();
            assert!(r.full_rank);
            assert!(r.quadratic_form > 0.0);
            assert!(r.weighted_norm > 0.0);
        }
    }

    #[test]
    fn eig_report_fields() {
        let r = check_eig_bound(1, 2, 4).unwrap();
        assert_eq!(r.n, 3);
        assert_eq!(r.bound, 0.5);
        assert_eq!(r.pass, r.observed >= r.bound - EIG_SLACK);
        assert!(check_eig_bound(1, 1, 0).is_err());
        assert!(check_eig_bound(0, 2, 0).is_err());
    }

    #[test]
    fn batteries_aggregate_trials() {
        let b = eig_battery(1, 3, 5, 7).unwrap();
        assert_eq!(b.trials.len(), 5);
        assert_eq!(b.violations, b.trials.iter().filter(|t| !t.pass).count());
        assert_eq!(b.pass, b.violations == 0);
        let n = norm_battery(2, 300, 4, 7, DEFAULT_NORM_SLACK).unwrap();
        assert_eq!(n.trials.len(), 4);
        assert_eq!(n.failing_seeds.len() as f64, 4.0 * (1.0 - n.pass_fraction));
        assert!(eig_battery(1, 2, 0, 0).is_err());
    }
}
