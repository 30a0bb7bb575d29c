//! Experiment harness: the toy comparison table, parameter sweeps, the
//! sample-size scaling run and the center-strategy comparison.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::centers::{build_or_draw, CenterOptions, CenterStrategy};
use crate::data::{gen_toy, gen_toy_test, rmse, Dataset};
use crate::error::{invalid, Error, Result};
use crate::estimators::{fit_cbr_epkr, fit_epkr, FitOptions, Model, Variant};
use crate::kernel::{kernel_matrix, GaussKernel, Kernel, PolyKernel};
use crate::linalg::{norm2, solve_ridge, RidgePath, RIDGE_RESIDUAL_TOL};
use crate::rng::derive_seed;
use crate::selection::{
    arithmetic_lambda_grid, default_lambda_grid, kfold_cv, theoretical_degree, SelectionConfig, SelectionGrid,
};

const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;
const CENTER_STREAM: u64 = 3;
const CV_STREAM: u64 = 4;

/// A named estimator configuration, e.g. EPKR with first-sample centers.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub label: String,
    pub variant: Variant,
    pub strategy: CenterStrategy,
}

impl MethodSpec {
    pub fn new(label: &str, variant: Variant, strategy: CenterStrategy) -> Self {
        Self {
            label: label.to_string(),
            variant,
            strategy,
        }
    }

    /// GKR, PKR, EPKR and EPKR with the first samples as centers.
    pub fn toy_table() -> Vec<MethodSpec> {
        vec![
            MethodSpec::new("GKR", Variant::Gkr, CenterStrategy::Uniform),
            MethodSpec::new("PKR", Variant::Pkr, CenterStrategy::Uniform),
            MethodSpec::new("EPKR", Variant::Epkr, CenterStrategy::Uniform),
            MethodSpec::new("EPKR1", Variant::Epkr, CenterStrategy::FirstSamples),
        ]
    }

    /// EPKR under each of the four center strategies.
    pub fn center_strategies() -> Vec<MethodSpec> {
        [
            ("EPKR", CenterStrategy::Uniform),
            ("EPKR1", CenterStrategy::FirstSamples),
            ("EPKRF", CenterStrategy::Equispaced),
            ("EPKRG", CenterStrategy::Gaussian),
        ]
        .into_iter()
        .map(|(l, s)| MethodSpec::new(l, Variant::Epkr, s))
        .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaGridKind {
    #[default]
    Log,
    Arithmetic,
}

impl LambdaGridKind {
    pub fn values(self) -> Vec<f64> {
        match self {
            LambdaGridKind::Log => default_lambda_grid(),
            LambdaGridKind::Arithmetic => arithmetic_lambda_grid(),
        }
    }
}

/// Toy protocol: noisy training sample, noiseless test sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub m_train: usize,
    pub m_test: usize,
    pub sigma_sq: f64,
    pub replicates: usize,
    pub folds: usize,
    pub seed: u64,
    pub lambda_grid: LambdaGridKind,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            m_train: 1000,
            m_test: 1000,
            sigma_sq: 0.1,
            replicates: 10,
            folds: 3,
            seed: 0,
            lambda_grid: LambdaGridKind::Log,
        }
    }
}

impl ToyConfig {
    fn check(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(invalid("replicates must be >= 1"));
        }
        Ok(())
    }

    /// Training and test sets of replicate `r`.
    pub fn replicate(&self, r: usize) -> Result<(Dataset, Dataset)> {
        let train = gen_toy(self.m_train, self.sigma_sq, derive_seed(self.seed, &[r as u64, TRAIN_STREAM]))?;
        let test = gen_toy_test(self.m_test, derive_seed(self.seed, &[r as u64, TEST_STREAM]))?;
        Ok((train, test))
    }

    fn replicate_seed(&self, r: usize, stream: u64) -> u64 {
        derive_seed(self.seed, &[r as u64, stream])
    }
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub method: String,
    pub param_s: Option<u32>,
    pub param_lambda: Option<f64>,
    pub param_delta: Option<f64>,
    pub train_rmse: f64,
    pub test_rmse: f64,
    pub train_seconds: f64,
    pub test_seconds: f64,
    pub sparsity: f64,
    pub replicates: usize,
    pub seed: u64,
}

pub const REPORT_COLUMNS: [&str; 11] = [
    "method",
    "param_s",
    "param_lambda",
    "param_delta",
    "train_rmse",
    "test_rmse",
    "train_seconds",
    "test_seconds",
    "sparsity",
    "replicates",
    "seed",
];

/// Writes reports as CSV with the fixed column order; the header is always present.
pub fn write_reports_csv<W: Write>(out: W, reports: &[ExperimentReport]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(REPORT_COLUMNS)?;
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Outcome of one method on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub s: Option<u32>,
    pub lambda: f64,
    pub delta: Option<f64>,
    pub train_rmse: f64,
    pub test_rmse: f64,
    /// Selection plus final fit.
    pub train_seconds: f64,
    pub test_seconds: f64,
    pub fit_seconds: f64,
    pub sparsity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: MethodSpec,
    pub outcomes: Vec<ReplicateOutcome>,
    pub report: ExperimentReport,
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

fn summarize(method: &MethodSpec, outcomes: &[ReplicateOutcome], seed: u64) -> ExperimentReport {
    let lambda = match method.variant {
        Variant::Epkr => None,
        _ => median(outcomes.iter().map(|o| o.lambda).collect()),
    };
    ExperimentReport {
        method: method.label.clone(),
        param_s: median(outcomes.iter().filter_map(|o| o.s.map(f64::from)).collect()).map(|v| v as u32),
        param_lambda: lambda,
        param_delta: median(outcomes.iter().filter_map(|o| o.delta).collect()),
        train_rmse: mean(outcomes.iter().map(|o| o.train_rmse)),
        test_rmse: mean(outcomes.iter().map(|o| o.test_rmse)),
        train_seconds: mean(outcomes.iter().map(|o| o.train_seconds)),
        test_seconds: mean(outcomes.iter().map(|o| o.test_seconds)),
        sparsity: mean(outcomes.iter().map(|o| o.sparsity as f64)),
        replicates: outcomes.len(),
        seed,
    }
}

fn evaluate(model: &Model, train: &Dataset, test: &Dataset) -> Result<(f64, f64, f64)> {
    let train_rmse = rmse(&model.predict_many(train.inputs(), true)?, train.targets())?;
    let t = Instant::now();
    let pred = model.predict_many(test.inputs(), true)?;
    let test_seconds = t.elapsed().as_secs_f64();
    Ok((train_rmse, rmse(&pred, test.targets())?, test_seconds))
}

/// Cross-validated selection and evaluation of one method on one replicate.
pub fn run_replicate(method: &MethodSpec, cfg: &ToyConfig, r: usize) -> Result<ReplicateOutcome> {
    let (train, test) = cfg.replicate(r)?;
    let mut grid = SelectionGrid::defaults(method.variant, train.len(), train.dim())?;
    if method.variant != Variant::Epkr {
        grid.lambda_values = cfg.lambda_grid.values();
    }
    let sel_cfg = SelectionConfig {
        centers: CenterOptions::with_strategy(method.strategy),
        ..SelectionConfig::new(method.variant)
    };
    let start = Instant::now();
    let sel = kfold_cv(&train, &grid, &sel_cfg, cfg.folds, cfg.replicate_seed(r, CV_STREAM))?;
    let train_seconds = start.elapsed().as_secs_f64();
    let (train_rmse, test_rmse, test_seconds) = evaluate(&sel.model, &train, &test)?;
    Ok(ReplicateOutcome {
        replicate: r,
        s: sel.params.s,
        lambda: sel.params.lambda,
        delta: sel.params.delta,
        train_rmse,
        test_rmse,
        train_seconds,
        test_seconds,
        fit_seconds: sel.model.fit_seconds,
        sparsity: sel.model.sparsity(),
    })
}

/// Every method over every replicate, aggregated into one report row per method.
pub fn toy_table(methods: &[MethodSpec], cfg: &ToyConfig) -> Result<Vec<MethodResult>> {
    cfg.check()?;
    methods
        .iter()
        .map(|method| {
            let outcomes = (0..cfg.replicates)
                .into_par_iter()
                .map(|r| run_replicate(method, cfg, r))
                .collect::<Result<Vec<_>>>()?;
            Ok(MethodResult {
                method: method.clone(),
                report: summarize(method, &outcomes, cfg.seed),
                outcomes,
            })
        })
        .collect()
}

/// One grid point of a sweep, averaged over replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub variable: String,
    pub value: f64,
    pub param_s: Option<u32>,
    pub test_rmse: f64,
    pub test_mse: f64,
    pub train_rmse: f64,
    pub replicates: usize,
    pub failures: usize,
    pub unverified: usize,
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record([
        "method",
        "variable",
        "value",
        "param_s",
        "test_rmse",
        "test_mse",
        "train_rmse",
        "replicates",
        "failures",
        "unverified",
    ])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    test_rmse: f64,
    test_mse: f64,
    train_rmse: f64,
    unverified: bool,
}

fn cell(model: &Model, train: &Dataset, test: &Dataset, unverified: bool) -> Result<Cell> {
    let (train_rmse, test_rmse, _) = evaluate(model, train, test)?;
    Ok(Cell {
        test_rmse,
        test_mse: test_rmse * test_rmse,
        train_rmse,
        unverified,
    })
}

fn aggregate(
    method: &str,
    variable: &str,
    values: &[f64],
    s_of: impl Fn(usize) -> Option<u32>,
    cells: &[Vec<Result<Cell>>],
) -> Vec<SweepRow> {
    values
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            let ok: Vec<Cell> = cells.iter().filter_map(|rep| rep[i].as_ref().ok().copied()).collect();
            SweepRow {
                method: method.to_string(),
                variable: variable.to_string(),
                value,
                param_s: s_of(i),
                test_rmse: mean(ok.iter().map(|c| c.test_rmse)),
                test_mse: mean(ok.iter().map(|c| c.test_mse)),
                train_rmse: mean(ok.iter().map(|c| c.train_rmse)),
                replicates: ok.len(),
                failures: cells.len() - ok.len(),
                unverified: ok.iter().filter(|c| c.unverified).count(),
            }
        })
        .collect()
}

/// Degree picked by 3-fold cross-validation of EPKR on replicate 0.
pub fn cv_degree(cfg: &ToyConfig) -> Result<u32> {
    let (train, _) = cfg.replicate(0)?;
    let grid = SelectionGrid::defaults(Variant::Epkr, train.len(), train.dim())?;
    let sel = kfold_cv(&train, &grid, &SelectionConfig::new(Variant::Epkr), cfg.folds, cfg.replicate_seed(0, CV_STREAM))?;
    sel.params.s.ok_or_else(|| invalid("selection returned no degree"))
}

fn ridge_models(train: &Dataset, kernel: Kernel, variant: Variant, lambdas: &[f64]) -> Result<Vec<Result<Model>>> {
    let k = kernel_matrix(&kernel, train.inputs(), train.inputs())?;
    let path = RidgePath::from_psd(&k)?;
    let y = train.targets();
    let m = y.len() as f64;
    let bound = train.max_abs_target();
    Ok(lambdas
        .iter()
        .map(|&lambda| {
            let mu = m * lambda;
            let mut c = path.solve(mu, y)?;
            let kc = k.mul_vec(&c)?;
            let r: Vec<f64> = kc.iter().zip(&c).zip(y).map(|((a, ci), yi)| a + mu * ci - yi).collect();
            if norm2(&r) > RIDGE_RESIDUAL_TOL * norm2(y) {
                c = solve_ridge(&k, mu, y)?;
            }
            Ok(Model {
                variant,
                kernel,
                basis: train.inputs().clone(),
                coefficients: c,
                lambda,
                clip_bound: bound,
                normalization: None,
                fit_seconds: 0.0,
            })
        })
        .collect())
}

/// Test error against λ at fixed degree (PKR, CBR-EPKR) or width (GKR).
pub fn lambda_sweep(method: &MethodSpec, param: f64, lambdas: &[f64], cfg: &ToyConfig) -> Result<Vec<SweepRow>> {
    cfg.check()?;
    if lambdas.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let s = param as u32;
    let cells: Vec<Vec<Result<Cell>>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<Result<Cell>>> {
            let (train, test) = cfg.replicate(r)?;
            let per = match method.variant {
                Variant::CbrEpkr | Variant::Epkr => {
                    let centers = build_or_draw(
                        s,
                        train.dim(),
                        &CenterOptions::with_strategy(method.strategy),
                        Some(train.inputs()),
                        cfg.replicate_seed(r, CENTER_STREAM),
                    )?;
                    let opts = FitOptions {
                        force: true,
                        ..FitOptions::default()
                    };
                    lambdas
                        .iter()
                        .map(|&l| {
                            fit_cbr_epkr(&train, &centers, l, &opts)
                                .and_then(|m| cell(&m, &train, &test, !centers.verified()))
                        })
                        .collect()
                }
                Variant::Pkr | Variant::Gkr => {
                    let kernel = if method.variant == Variant::Pkr {
                        Kernel::Poly(PolyKernel::new(s)?)
                    } else {
                        Kernel::Gauss(GaussKernel::new(param)?)
                    };
                    ridge_models(&train, kernel, method.variant, lambdas)?
                        .into_iter()
                        .map(|m| m.and_then(|m| cell(&m, &train, &test, false)))
                        .collect()
                }
            };
            Ok(per)
        })
        .collect::<Result<_>>()?;
    let s_col = if method.variant == Variant::Gkr { None } else { Some(s) };
    Ok(aggregate(&method.label, "lambda", lambdas, |_| s_col, &cells))
}

/// EPKR test error against the degree. Degrees whose centers cannot be
/// verified fall back to a single unverified draw and are counted in `unverified`.
pub fn degree_sweep(method: &MethodSpec, degrees: &[u32], cfg: &ToyConfig) -> Result<Vec<SweepRow>> {
    cfg.check()?;
    if degrees.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let opts = FitOptions {
        force: true,
        ..FitOptions::default()
    };
    let cells: Vec<Vec<Result<Cell>>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<Result<Cell>>> {
            let (train, test) = cfg.replicate(r)?;
            Ok(degrees
                .iter()
                .map(|&s| {
                    let centers = build_or_draw(
                        s,
                        train.dim(),
                        &CenterOptions::with_strategy(method.strategy),
                        Some(train.inputs()),
                        derive_seed(cfg.replicate_seed(r, CENTER_STREAM), &[s as u64]),
                    )?;
                    let model = fit_epkr(&train, &centers, &opts)?;
                    cell(&model, &train, &test, !centers.verified())
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = degrees.iter().map(|&s| f64::from(s)).collect();
    Ok(aggregate(&method.label, "s", &values, |i| Some(degrees[i]), &cells))
}

/// EPKR at `s = theoretical_degree(m, d, r)` for each sample size.
pub fn size_sweep(sizes: &[usize], smoothness: u32, cfg: &ToyConfig) -> Result<Vec<SweepRow>> {
    cfg.check()?;
    if sizes.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let degrees = sizes
        .iter()
        .map(|&m| theoretical_degree(m, 1, smoothness))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<Vec<Result<Cell>>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<Result<Cell>>> {
            Ok(sizes
                .iter()
                .zip(&degrees)
                .map(|(&m, &s)| {
                    let sub = ToyConfig {
                        m_train: m,
                        seed: derive_seed(cfg.seed, &[m as u64]),
                        ..cfg.clone()
                    };
                    let (train, test) = sub.replicate(r)?;
                    let centers = build_or_draw(
                        s,
                        1,
                        &CenterOptions::default(),
                        None,
                        sub.replicate_seed(r, CENTER_STREAM),
                    )?;
                    let model = fit_epkr(&train, &centers, &FitOptions::default())?;
                    cell(&model, &train, &test, !centers.verified())
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = sizes.iter().map(|&m| m as f64).collect();
    Ok(aggregate("EPKR", "m", &values, |i| Some(degrees[i]), &cells))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("slope needs two or more paired points"));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(invalid("log-log slope needs positive values"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = mean(lx.iter().copied());
    let my = mean(ly.iter().copied());
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("spearman needs two or more paired points"));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(rx.iter().copied()), mean(ry.iter().copied()));
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyComparison {
    pub s: u32,
    pub rows: Vec<SweepRow>,
    /// RMS difference of training predictions from two independent uniform center sets.
    pub span_gap: f64,
}

/// EPKR at degree `s` under each center strategy, plus the span-invariance gap.
pub fn compare_centers(s: u32, cfg: &ToyConfig) -> Result<StrategyComparison> {
    let mut rows = Vec::new();
    for method in MethodSpec::center_strategies() {
        let mut r = degree_sweep(&method, &[s], cfg)?;
        rows.append(&mut r);
    }
    let (train, _) = cfg.replicate(0)?;
    let opts = CenterOptions::default();
    let a = crate::centers::build_fundamental_system(s, 1, &opts, None, derive_seed(cfg.seed, &[CENTER_STREAM, 1]))?;
    let b = crate::centers::build_fundamental_system(s, 1, &opts, None, derive_seed(cfg.seed, &[CENTER_STREAM, 2]))?;
    let pa = fit_epkr(&train, &a, &FitOptions::default())?.predict_many(train.inputs(), false)?;
    let pb = fit_epkr(&train, &b, &FitOptions::default())?.predict_many(train.inputs(), false)?;
    Ok(StrategyComparison {
        s,
        rows,
        span_gap: rmse(&pa, &pb)?,
    })
}
