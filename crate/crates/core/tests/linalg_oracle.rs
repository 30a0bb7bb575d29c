use std::f64::consts::PI;

use epkr::diagnostics::chebyshev_quadrature;
use epkr::linalg::{norm2, pinv, rank, solve_ridge, svd, sym_eigen, Matrix};
use epkr::rng::rng_from_seed;
use proptest::prelude::*;
use rand::Rng;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = rng_from_seed(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0)).unwrap()
}

/// Random shape up to 40×25; every third case is a product of thin factors.
fn case(seed: u64) -> Matrix {
    let mut rng = rng_from_seed(seed ^ 0xabcdef);
    let rows = rng.random_range(1..=40);
    let cols = rng.random_range(1..=25);
    let a = if seed.is_multiple_of(3) {
        let k = rng.random_range(1..=rows.min(cols));
        random_matrix(rows, k, seed).matmul(&random_matrix(k, cols, seed + 1_000_000)).unwrap()
    } else {
        random_matrix(rows, cols, seed)
    };
    if seed.is_multiple_of(2) {
        a.transpose()
    } else {
        a
    }
}

fn asym(a: &Matrix) -> f64 {
    a.sub(&a.transpose()).unwrap().max_abs()
}

#[test]
fn moore_penrose_identities_on_200_matrices() {
    for seed in 0..200 {
        let a = case(seed);
        let p = pinv(&a, None).unwrap();
        assert_eq!(p.shape(), (a.cols(), a.rows()));
        let apa = a.matmul(&p).unwrap().matmul(&a).unwrap();
        let pap = p.matmul(&a).unwrap().matmul(&p).unwrap();
        assert!(apa.sub(&a).unwrap().frobenius_norm() <= 1e-8 * a.frobenius_norm(), "seed {seed}");
        assert!(pap.sub(&p).unwrap().frobenius_norm() <= 1e-8 * p.frobenius_norm(), "seed {seed}");
        assert!(asym(&a.matmul(&p).unwrap()) <= 1e-8, "seed {seed}");
        assert!(asym(&p.matmul(&a).unwrap()) <= 1e-8, "seed {seed}");
    }
}

#[test]
fn rank_is_transpose_invariant_and_sees_products() {
    for seed in 0..60 {
        let a = case(seed);
        assert_eq!(rank(&a, None).unwrap(), rank(&a.transpose(), None).unwrap(), "seed {seed}");
    }
    let a = random_matrix(30, 3, 5).matmul(&random_matrix(3, 20, 6)).unwrap();
    assert_eq!(rank(&a, None).unwrap(), 3);
}

#[test]
fn singular_values_match_gram_spectrum() {
    for seed in 0..40 {
        let a = random_matrix(6, 4, seed + 500);
        let f = svd(&a).unwrap();
        let gram = a.transpose().matmul(&a).unwrap();
        let mut eig: Vec<f64> = sym_eigen(&gram).unwrap().values.iter().map(|v| v.max(0.0).sqrt()).collect();
        eig.reverse();
        for (s, e) in f.singulars.iter().zip(&eig) {
            assert!((s - e).abs() <= 1e-6 * e.max(1e-300), "seed {seed}: {s} vs {e}");
        }
    }
}

#[test]
fn ridge_residual_is_tight() {
    for seed in 0..30 {
        let b = random_matrix(25, 25, seed + 900);
        let k = b.matmul(&b.transpose()).unwrap();
        let y: Vec<f64> = random_matrix(25, 1, seed + 950).column(0);
        for lambda in [1e-6, 1e-2, 1.0, 1e3] {
            let c = solve_ridge(&k, lambda, &y).unwrap();
            let r: Vec<f64> = k.add_diagonal(lambda).mul_vec(&c).unwrap().iter().zip(&y).map(|(a, b)| a - b).collect();
            assert!(norm2(&r) <= 1e-8 * norm2(&y), "seed {seed}, λ {lambda}");
        }
    }
}

/// `∫ x^k dx/√(1−x²)` over [−1, 1].
fn chebyshev_moment(k: u32) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    // π·C(k, k/2)/2^k, built as a running product to stay in range.
    (1..=k / 2).fold(PI, |acc, j| acc * (2 * j - 1) as f64 / (2 * j) as f64)
}

#[test]
fn chebyshev_quadrature_is_exact_to_degree_2n_minus_1() {
    for n in 1..=12usize {
        let (x, w) = chebyshev_quadrature(n).unwrap();
        for k in 0..(2 * n as u32) {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
            assert!((q - chebyshev_moment(k)).abs() <= 1e-12, "N={n}, k={k}: {q}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pinv_solves_consistent_systems(seed in 0u64..10_000, rows in 1usize..20, cols in 1usize..12) {
        let a = random_matrix(rows, cols, seed);
        let x = random_matrix(cols, 1, seed + 77).column(0);
        let b = a.mul_vec(&x).unwrap();
        let xh = pinv(&a, None).unwrap().mul_vec(&b).unwrap();
        let r: Vec<f64> = a.mul_vec(&xh).unwrap().iter().zip(&b).map(|(p, q)| p - q).collect();
        prop_assert!(norm2(&r) <= 1e-9 * (1.0 + norm2(&b)));
    }

    #[test]
    fn svd_reconstructs(seed in 0u64..10_000, rows in 1usize..15, cols in 1usize..15) {
        let a = random_matrix(rows, cols, seed);
        let f = svd(&a).unwrap();
        prop_assert!(f.reconstruct().sub(&a).unwrap().frobenius_norm() <= 1e-12 * (1.0 + a.frobenius_norm()));
        prop_assert!(f.singulars.windows(2).all(|w| w[0] >= w[1]));
    }
}
