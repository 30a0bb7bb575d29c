use std::f64::consts::PI;
use std::fs;

use epkr::centers::{
    build_fundamental_system, draw_centers, poly_dim, sample_sphere, sample_uniform_ball, CenterOptions, CenterStrategy,
};
use epkr::data::{gen_toy, load_csv, normalize_ball, rmse, toy_target, Provenance};
use epkr::estimators::{fit_epkr, FitOptions};
use epkr::Error;
use tempfile::TempDir;

#[test]
fn first_draw_verifies_for_s2_d2() {
    let opts = CenterOptions::default();
    let first_try = (0..200u64)
        .filter(|&seed| build_fundamental_system(2, 2, &opts, None, seed).unwrap().attempts() == 1)
        .count();
    assert!(first_try >= 199, "{first_try}/200");
}

#[test]
fn uniform_failure_rate_small_for_low_degrees() {
    let opts = CenterOptions::default();
    for d in 1..=3 {
        for s in 1..=4 {
            let failures = (0..200u64).filter(|&seed| !draw_centers(s, d, &opts, None, seed).unwrap().verified()).count();
            assert!(failures <= 2, "s={s}, d={d}: {failures}/200");
        }
    }
}

#[test]
fn equispaced_cubic_verifies() {
    let c = build_fundamental_system(3, 1, &CenterOptions::with_strategy(CenterStrategy::Equispaced), None, 0).unwrap();
    assert!(c.verified());
    let xs: Vec<f64> = c.points().iter().map(|p| p[0]).collect();
    for (j, x) in xs.iter().enumerate() {
        assert!((x - j as f64 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn ball_sampling_statistics() {
    let p = sample_uniform_ball(3, 10_000, 11).unwrap();
    for j in 0..3 {
        let mean = p.iter().map(|x| x[j]).sum::<f64>() / 10_000.0;
        assert!(mean.abs() < 0.05, "coordinate {j}: {mean}");
    }
    assert!(p.iter().all(|x| x.iter().map(|v| v * v).sum::<f64>() <= 1.0 + 1e-12));
    let p = sample_uniform_ball(2, 10_000, 12).unwrap();
    let inner = p.iter().filter(|x| x[0].hypot(x[1]) <= 0.5).count() as f64 / 10_000.0;
    assert!((inner - 0.25).abs() < 0.02, "{inner}");
}

#[test]
fn sphere_angles_are_uniform() {
    let p = sample_sphere(2, 10_000, 13).unwrap();
    let mut u: Vec<f64> = p.iter().map(|x| (x[1].atan2(x[0]) + PI) / (2.0 * PI)).collect();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let ks = u
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).max((i + 1) as f64 / n - v))
        .fold(0.0, f64::max);
    assert!(ks < 0.02, "KS = {ks}");

    let p = sample_sphere(3, 10_000, 14).unwrap();
    for j in 0..3 {
        let mean = p.iter().map(|x| x[j]).sum::<f64>() / 10_000.0;
        assert!(mean.abs() < 0.05);
    }
    assert!(p.iter().all(|x| (x.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-12));
}

#[test]
fn fitted_values_do_not_depend_on_center_seed() {
    let data = gen_toy(300, 0.1, 21).unwrap();
    for s in [2, 5, 8] {
        let opts = CenterOptions::default();
        let a = build_fundamental_system(s, 1, &opts, None, 1).unwrap();
        let b = build_fundamental_system(s, 1, &opts, None, 2).unwrap();
        let pa = fit_epkr(&data, &a, &FitOptions::default()).unwrap().predict_many(data.inputs(), false).unwrap();
        let pb = fit_epkr(&data, &b, &FitOptions::default()).unwrap().predict_many(data.inputs(), false).unwrap();
        assert!(rmse(&pa, &pb).unwrap() < 1e-6, "s={s}");
    }
}

#[test]
fn center_count_is_binomial() {
    for (s, d) in [(1, 1), (4, 2), (3, 3)] {
        let c = build_fundamental_system(s, d, &CenterOptions::default(), None, 5).unwrap();
        assert_eq!(c.len(), poly_dim(s, d).unwrap());
        assert!(c.points().max_norm() <= 1.0 + 1e-12);
    }
}

#[test]
fn load_csv_files() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("ok.csv");
    fs::write(&p, "a,b,y\n1.0, 2.0, 3.5\n-1,0,1e-3\n").unwrap();
    let d = load_csv(&p, true).unwrap();
    assert_eq!((d.len(), d.dim()), (2, 2));
    assert_eq!(d.targets(), &[3.5, 1e-3]);
    assert_eq!(d.inputs().point(1), &[-1.0, 0.0]);
    assert!(matches!(d.provenance(), Provenance::File { .. }));

    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "1,2,3\n4,5\n").unwrap();
    assert!(matches!(load_csv(&ragged, false), Err(Error::RaggedRow { row: 2, expected: 3, found: 2 })));

    let text = dir.path().join("text.csv");
    fs::write(&text, "1,2\n3,NaN\n").unwrap();
    assert!(matches!(load_csv(&text, false), Err(Error::NonNumeric { row: 2, column: 2, .. })));

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert!(matches!(load_csv(&empty, false), Err(Error::EmptyFile(_))));

    let narrow = dir.path().join("narrow.csv");
    fs::write(&narrow, "1\n2\n").unwrap();
    assert!(matches!(load_csv(&narrow, false), Err(Error::TooFewColumns { found: 1 })));

    assert!(matches!(load_csv(&dir.path().join("nope.csv"), false), Err(Error::MissingFile(_))));
}

#[test]
fn normalization_round_trip_on_file_data() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("raw.csv");
    let mut s = String::new();
    for i in 0..50 {
        s.push_str(&format!("{},{},{}\n", 1000.0 + i as f64 * 3.7, -0.002 * i as f64, i % 5));
    }
    fs::write(&p, s).unwrap();
    let raw = load_csv(&p, false).unwrap();
    let (norm, rec) = normalize_ball(&raw).unwrap();
    assert!(norm.inputs().max_norm() <= 1.0 + 1e-12);
    for (x, z) in raw.inputs().iter().zip(norm.inputs().iter()) {
        let back = rec.invert(z).unwrap();
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
    }
    match norm.provenance() {
        Provenance::File { normalization, .. } => assert_eq!(normalization.as_ref(), Some(&rec)),
        other => panic!("unexpected provenance {other:?}"),
    }
}

#[test]
fn noise_averages_out_around_regression_function() {
    let k = 4000;
    let sigma_sq = 0.1;
    let d = gen_toy(k, sigma_sq, 99).unwrap();
    let resid: Vec<f64> = d.inputs().iter().zip(d.targets()).map(|(x, y)| y - toy_target(x[0])).collect();
    let mean = resid.iter().sum::<f64>() / k as f64;
    assert!(mean.abs() <= 3.0 * sigma_sq.sqrt() / (k as f64).sqrt(), "{mean}");
    let var = resid.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (k - 1) as f64;
    assert!((var - sigma_sq).abs() < 0.01, "{var}");
    let clean = gen_toy(50, 0.0, 3).unwrap();
    assert!(clean.inputs().iter().zip(clean.targets()).all(|(x, y)| *y == toy_target(x[0])));
}
