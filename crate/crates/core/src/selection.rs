//! Parameter grids, the degree and regularization rules, k-fold
//! cross-validation and hold-out selection.

use std::cmp::Ordering;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::centers::{build_fundamental_system, build_or_draw, poly_dim, CenterOptions, CenterSet};
use crate::data::{rmse, split_indices, Dataset};
use crate::error::{invalid, Error, Result};
use crate::estimators::{
    design_matrix, fit_cbr_epkr, fit_epkr, fit_gkr, fit_pkr, least_squares, FitOptions, Model, Variant,
};
use crate::kernel::{clip, kernel_matrix, GaussKernel, Kernel, PolyKernel};
use crate::linalg::{norm2, RidgePath, RIDGE_RESIDUAL_TOL};
use crate::rng::{derive_seed, rng_from_seed};

const CENTER_STREAM: u64 = 0xC3;
const FOLD_STREAM: u64 = 0xF0;
const FINAL_SPLIT: u64 = u64::MAX;
const TIE_TOL: f64 = 1e-10;

fn rms(v: &[f64]) -> f64 {
    norm2(v) / (v.len().max(1) as f64).sqrt()
}

/// Smallest `k ≥ 1` with `k^e ≥ m`.
fn ceil_root(m: u64, e: u32) -> u32 {
    if m <= 1 || e == 0 {
        return 1;
    }
    let reaches = |k: u64| k.checked_pow(e).is_none_or(|p| p >= m);
    let mut k = ((m as f64).powf(1.0 / e as f64).ceil() as u64).max(1);
    while k > 1 && reaches(k - 1) {
        k -= 1;
    }
    while !reaches(k) {
        k += 1;
    }
    k as u32
}

/// `⌈m^{1/(d+2r)}⌉`, read as a ceiling.
pub fn theoretical_degree(m: usize, d: usize, r: u32) -> Result<u32> {
    if m == 0 || d == 0 {
        return Err(invalid("m and d must be >= 1"));
    }
    Ok(ceil_root(m as u64, d as u32 + 2 * r))
}

/// `m^{−2r/(2r+d)} · (4d)^{−1/(d+2r)}`.
pub fn lambda_upper_bound(m: usize, d: usize, r: u32) -> Result<f64> {
    if m == 0 || d == 0 || r == 0 {
        return Err(invalid("m, d and r must be >= 1"));
    }
    let e = (2 * r) as f64 + d as f64;
    Ok((m as f64).powf(-(2.0 * r as f64) / e) * (4.0 * d as f64).powf(-1.0 / e))
}

/// Degree grid `{1, …, min(⌈m^{1/d}⌉, cap)}` with the degrees that would need
/// more than `m` centers moved to `filtered`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeGrid {
    pub values: Vec<u32>,
    pub filtered: Vec<u32>,
}

pub const DEFAULT_S_CAP: u32 = 50;

pub fn default_s_grid(m: usize, d: usize, cap: Option<u32>) -> Result<DegreeGrid> {
    if m == 0 || d == 0 {
        return Err(invalid("m and d must be >= 1"));
    }
    let top = ceil_root(m as u64, d as u32).min(cap.unwrap_or(DEFAULT_S_CAP));
    let mut values = Vec::new();
    let mut filtered = Vec::new();
    for s in 1..=top {
        match poly_dim(s, d) {
            Ok(n) if n <= m => values.push(s),
            _ => filtered.push(s),
        }
    }
    if values.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok(DegreeGrid { values, filtered })
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo) || count == 0 {
        return Err(invalid(format!("bad log grid [{lo}, {hi}] x {count}")));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)
            }
        })
        .collect())
}

/// `count` equally spaced values from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(hi >= lo) || count == 0 || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid(format!("bad linear grid [{lo}, {hi}] x {count}")));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..count)
        .map(|i| if i + 1 == count { hi } else { lo + (hi - lo) * i as f64 / (count - 1) as f64 })
        .collect())
}

/// 50 log-spaced values in [1e-5, 1].
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-5, 1.0, 50).expect("static grid")
}

/// The arithmetic grid `{1e-5, 1e-5 + 1e-2, …}` with 50 entries.
pub fn arithmetic_lambda_grid() -> Vec<f64> {
    (0..50).map(|k| 1e-5 + 1e-2 * k as f64).collect()
}

/// Gaussian widths `0.01 + 0.025k`, `k < 40`.
pub fn default_delta_grid() -> Vec<f64> {
    (0..40).map(|k| 0.01 + 0.025 * k as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectionGrid {
    pub s_values: Vec<u32>,
    pub lambda_values: Vec<f64>,
    pub delta_values: Vec<f64>,
}

impl SelectionGrid {
    /// Default grids for `m` samples in dimension `d`.
    pub fn defaults(variant: Variant, m: usize, d: usize) -> Result<Self> {
        let s_values = match variant {
            Variant::Gkr => Vec::new(),
            _ => default_s_grid(m, d, None)?.values,
        };
        Ok(Self {
            s_values,
            lambda_values: match variant {
                Variant::Epkr => Vec::new(),
                _ => default_lambda_grid(),
            },
            delta_values: match variant {
                Variant::Gkr => default_delta_grid(),
                _ => Vec::new(),
            },
        })
    }

    fn candidates(&self, variant: Variant) -> Result<Vec<Params>> {
        fn check<T: PartialOrd + Copy>(v: &[T], name: &str) -> Result<()> {
            if v.is_empty() {
                return Err(Error::EmptyGrid);
            }
            if v.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less)) {
                return Err(invalid(format!("{name} grid must be strictly increasing")));
            }
            Ok(())
        }
        let lambdas_ok = |v: &[f64]| -> Result<()> {
            check(v, "lambda")?;
            if v.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
                return Err(invalid("lambda values must be finite and >= 0"));
            }
            Ok(())
        };
        let mut out = Vec::new();
        match variant {
            Variant::Epkr => {
                check(&self.s_values, "s")?;
                out.extend(self.s_values.iter().map(|&s| Params::poly(s, 0.0)));
            }
            Variant::Pkr | Variant::CbrEpkr => {
                check(&self.s_values, "s")?;
                lambdas_ok(&self.lambda_values)?;
                for &s in &self.s_values {
                    out.extend(self.lambda_values.iter().map(|&l| Params::poly(s, l)));
                }
            }
            Variant::Gkr => {
                check(&self.delta_values, "delta")?;
                if self.delta_values[0] <= 0.0 {
                    return Err(invalid("delta values must be positive"));
                }
                lambdas_ok(&self.lambda_values)?;
                for &d in &self.delta_values {
                    out.extend(self.lambda_values.iter().map(|&l| Params::gauss(d, l)));
                }
            }
        }
        if out.iter().any(|p| p.s == Some(0)) {
            return Err(invalid("degree s must be >= 1"));
        }
        Ok(out)
    }
}

/// One point of a parameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub s: Option<u32>,
    pub lambda: f64,
    pub delta: Option<f64>,
}

impl Params {
    pub fn poly(s: u32, lambda: f64) -> Self {
        Self {
            s: Some(s),
            lambda,
            delta: None,
        }
    }

    pub fn gauss(delta: f64, lambda: f64) -> Self {
        Self {
            s: None,
            lambda,
            delta: Some(delta),
        }
    }

    /// Tie-break order: smaller s, then smaller λ, then smaller δ.
    fn order(&self, other: &Self) -> Ordering {
        self.s
            .cmp(&other.s)
            .then(self.lambda.total_cmp(&other.lambda))
            .then(self.delta.unwrap_or(0.0).total_cmp(&other.delta.unwrap_or(0.0)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub params: Params,
    /// Mean validation RMSE; `None` when the candidate failed on some split.
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    pub variant: Variant,
    pub centers: CenterOptions,
    pub fit: FitOptions,
    /// Hold-out only: refit the winner on both parts instead of the training part.
    pub refit_on_all: bool,
}

impl SelectionConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            centers: CenterOptions::default(),
            fit: FitOptions::default(),
            refit_on_all: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub params: Params,
    pub score: f64,
    pub scores: Vec<CandidateScore>,
    pub model: Model,
    pub centers: Option<CenterSet>,
    pub seed: u64,
}

/// Deterministic assignment of `m` samples to `k` near-equal folds.
pub fn fold_assignment(m: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(invalid("k must be >= 2"));
    }
    if m < k {
        return Err(invalid(format!("need at least k = {k} samples, got {m}")));
    }
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(&mut rng_from_seed(derive_seed(seed, &[FOLD_STREAM])));
    let mut folds = vec![0; m];
    for (p, &i) in perm.iter().enumerate() {
        folds[i] = p % k;
    }
    Ok(folds)
}

struct Split {
    train: Dataset,
    val: Dataset,
}

/// k-fold cross-validation with a seeded fold assignment; the winner is refit on all data.
pub fn kfold_cv(data: &Dataset, grid: &SelectionGrid, cfg: &SelectionConfig, k: usize, seed: u64) -> Result<SelectionResult> {
    let folds = fold_assignment(data.len(), k, seed)?;
    kfold_cv_with_folds(data, grid, cfg, &folds, seed)
}

/// Cross-validation over an explicit fold label per sample.
pub fn kfold_cv_with_folds(
    data: &Dataset,
    grid: &SelectionGrid,
    cfg: &SelectionConfig,
    folds: &[usize],
    seed: u64,
) -> Result<SelectionResult> {
    if folds.len() != data.len() {
        return Err(Error::DimensionMismatch {
            context: "fold labels",
            expected: data.len(),
            found: folds.len(),
        });
    }
    let k = folds.iter().max().map_or(0, |&f| f + 1);
    if k < 2 {
        return Err(invalid("need at least two folds"));
    }
    let mut splits = Vec::with_capacity(k);
    for f in 0..k {
        let (val_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| folds[i] == f);
        if val_idx.is_empty() {
            return Err(invalid(format!("fold {f} is empty")));
        }
        splits.push(Split {
            train: data.subset(&train_idx)?,
            val: data.subset(&val_idx)?,
        });
    }
    select(data, grid, cfg, &splits, seed)
}

/// Fit candidates on the first part, score on the second; the winner is refit
/// on the first part (or on all data when `refit_on_all`).
pub fn holdout_select(
    data: &Dataset,
    grid: &SelectionGrid,
    cfg: &SelectionConfig,
    split_fraction: f64,
    seed: u64,
) -> Result<SelectionResult> {
    let (a, b) = split_indices(data.len(), split_fraction, derive_seed(seed, &[FOLD_STREAM]))?;
    let split = Split {
        train: data.subset(&a)?,
        val: data.subset(&b)?,
    };
    let final_data = if cfg.refit_on_all { data.clone() } else { split.train.clone() };
    select(&final_data, grid, cfg, std::slice::from_ref(&split), seed)
}

pub const DEFAULT_HOLDOUT_FRACTION: f64 = 2.0 / 3.0;

fn center_seed(seed: u64, split: u64, s: u32) -> u64 {
    derive_seed(seed, &[CENTER_STREAM, split, s as u64])
}

/// Centers for degree `s` drawn for the given training set.
pub fn centers_for(train: &Dataset, s: u32, cfg: &SelectionConfig, seed: u64) -> Result<CenterSet> {
    if cfg.fit.force {
        build_or_draw(s, train.dim(), &cfg.centers, Some(train.inputs()), seed)
    } else {
        build_fundamental_system(s, train.dim(), &cfg.centers, Some(train.inputs()), seed)
    }
}

/// Fits one candidate on `data`; centers come from `center_seed`.
pub fn fit_candidate(data: &Dataset, p: &Params, cfg: &SelectionConfig, seed: u64) -> Result<(Model, Option<CenterSet>)> {
    match cfg.variant {
        Variant::Epkr | Variant::CbrEpkr => {
            let s = p.s.ok_or_else(|| invalid("missing degree"))?;
            let n = poly_dim(s, data.dim())?;
            if n > data.len() && !cfg.fit.force {
                return Err(Error::Underdetermined {
                    centers: n,
                    samples: data.len(),
                });
            }
            let c = centers_for(data, s, cfg, seed)?;
            let m = if cfg.variant == Variant::Epkr {
                fit_epkr(data, &c, &cfg.fit)?
            } else {
                fit_cbr_epkr(data, &c, p.lambda, &cfg.fit)?
            };
            Ok((m, Some(c)))
        }
        Variant::Pkr => Ok((fit_pkr(data, p.s.ok_or_else(|| invalid("missing degree"))?, p.lambda, &cfg.fit)?, None)),
        Variant::Gkr => Ok((fit_gkr(data, p.delta.ok_or_else(|| invalid("missing width"))?, p.lambda, &cfg.fit)?, None)),
    }
}

type Scores = Vec<std::result::Result<f64, String>>;

fn bound_for(train: &Dataset, cfg: &SelectionConfig) -> f64 {
    cfg.fit.clip_bound.unwrap_or_else(|| train.max_abs_target())
}

fn score(pred: &[f64], val: &Dataset, bound: f64) -> Result<f64> {
    let clipped: Vec<f64> = pred.iter().map(|&v| clip(v, bound)).collect();
    rmse(&clipped, val.targets())
}

/// Validation scores of every λ for one kernel on one split.
fn ridge_scores(kernel: &Kernel, split: &Split, lambdas: &[f64], bound: f64) -> Scores {
    let run = || -> Result<Scores> {
        let tr = split.train.inputs();
        let y = split.train.targets();
        let k = kernel_matrix(kernel, tr, tr)?;
        let kv = kernel_matrix(kernel, split.val.inputs(), tr)?;
        let path = RidgePath::from_psd(&k)?;
        let m = y.len() as f64;
        let ynorm = norm2(y);
        Ok(lambdas
            .iter()
            .map(|&lambda| -> Result<f64> {
                let c = if lambda > 0.0 {
                    let mu = m * lambda;
                    let c = path.solve(mu, y)?;
                    let kc = k.mul_vec(&c)?;
                    let r: Vec<f64> = kc.iter().zip(&c).zip(y).map(|((a, ci), yi)| a + mu * ci - yi).collect();
                    let residual = norm2(&r);
                    let bound = RIDGE_RESIDUAL_TOL * ynorm;
                    if residual > bound {
                        return Err(Error::ResidualTooLarge { residual, bound });
                    }
                    c
                } else {
                    least_squares(&k, y)?
                };
                score(&kv.mul_vec(&c)?, &split.val, bound)
            })
            .map(|r| r.map_err(|e| e.to_string()))
            .collect())
    };
    run().unwrap_or_else(|e| vec![Err(e.to_string()); lambdas.len()])
}

/// Validation scores of every λ for one degree on one split (EPKR family).
fn center_scores(
    s: u32,
    split: &Split,
    split_id: u64,
    lambdas: &[f64],
    cfg: &SelectionConfig,
    seed: u64,
) -> (Scores, bool) {
    let bound = bound_for(&split.train, cfg);
    let run = || -> Result<Scores> {
        let c = centers_for(&split.train, s, cfg, center_seed(seed, split_id, s))?;
        if c.len() > split.train.len() && !cfg.fit.force {
            return Err(Error::Underdetermined {
                centers: c.len(),
                samples: split.train.len(),
            });
        }
        let a = design_matrix(&split.train, &c)?;
        let av = design_matrix(&split.val, &c)?;
        Ok(lambdas
            .iter()
            .map(|&lambda| -> Result<f64> {
                let shifted = if lambda > 0.0 { a.add_diagonal(lambda) } else { a.clone() };
                let coef = least_squares(&shifted, split.train.targets())?;
                score(&av.mul_vec(&coef)?, &split.val, bound)
            })
            .map(|r| r.map_err(|e| e.to_string()))
            .collect())
    };
    match run() {
        Ok(sc) => (sc, false),
        Err(e) => (vec![Err(e.to_string()); lambdas.len()], matches!(e, Error::RankDeficient { .. })),
    }
}

fn select(final_data: &Dataset, grid: &SelectionGrid, cfg: &SelectionConfig, splits: &[Split], seed: u64) -> Result<SelectionResult> {
    let candidates = grid.candidates(cfg.variant)?;
    let lambdas: Vec<f64> = match cfg.variant {
        Variant::Epkr => vec![0.0],
        _ => grid.lambda_values.clone(),
    };
    let params_outer: Vec<Params> = match cfg.variant {
        Variant::Gkr => grid.delta_values.iter().map(|&d| Params::gauss(d, 0.0)).collect(),
        _ => grid.s_values.iter().map(|&s| Params::poly(s, 0.0)).collect(),
    };

    // table[outer][split][lambda]
    let table: Vec<Vec<Scores>> = match cfg.variant {
        Variant::Epkr | Variant::CbrEpkr => splits
            .par_iter()
            .enumerate()
            .map(|(j, sp)| {
                // Verification only gets harder as s grows, so the first degree whose
                // centers cannot be verified ends the scan on this split.
                let mut failed_at: Option<(u32, String)> = None;
                params_outer
                    .iter()
                    .map(|p| {
                        let s = p.s.expect("degree");
                        if let Some((s0, msg)) = &failed_at {
                            return vec![Err(format!("skipped: centers for s = {s0} already failed ({msg})")); lambdas.len()];
                        }
                        let (sc, rank_failed) = center_scores(s, sp, j as u64, &lambdas, cfg, seed);
                        if rank_failed {
                            if let Some(Err(msg)) = sc.first() {
                                failed_at = Some((s, msg.clone()));
                            }
                        }
                        sc
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(vec![Vec::new(); params_outer.len()], |mut acc, per_split| {
                for (o, sc) in per_split.into_iter().enumerate() {
                    acc[o].push(sc);
                }
                acc
            }),
        Variant::Pkr | Variant::Gkr => {
            let jobs: Vec<(usize, usize)> = (0..params_outer.len())
                .flat_map(|o| (0..splits.len()).map(move |j| (o, j)))
                .collect();
            let results: Vec<Scores> = jobs
                .par_iter()
                .map(|&(o, j)| {
                    let p = &params_outer[o];
                    let kernel = match (p.s, p.delta) {
                        (Some(s), _) => PolyKernel::new(s).map(Kernel::Poly),
                        (None, Some(d)) => GaussKernel::new(d).map(Kernel::Gauss),
                        _ => Err(invalid("malformed candidate")),
                    };
                    match kernel {
                        Ok(kernel) => ridge_scores(&kernel, &splits[j], &lambdas, bound_for(&splits[j].train, cfg)),
                        Err(e) => vec![Err(e.to_string()); lambdas.len()],
                    }
                })
                .collect();
            let mut table = vec![Vec::new(); params_outer.len()];
            for ((o, _), sc) in jobs.into_iter().zip(results) {
                table[o].push(sc);
            }
            table
        }
    };

    let mut scores = Vec::with_capacity(candidates.len());
    for (o, per_split) in table.iter().enumerate() {
        for (l, &lambda) in lambdas.iter().enumerate() {
            let mut params = params_outer[o];
            params.lambda = lambda;
            let mut total = 0.0;
            let mut error = None;
            for sc in per_split {
                match &sc[l] {
                    Ok(v) => total += v,
                    Err(e) => {
                        error = Some(e.clone());
                        break;
                    }
                }
            }
            scores.push(CandidateScore {
                params,
                score: if error.is_none() { Some(total / per_split.len() as f64) } else { None },
                error,
            });
        }
    }
    debug_assert_eq!(scores.len(), candidates.len());

    let mut ranked: Vec<&CandidateScore> = scores.iter().filter(|c| c.score.is_some()).collect();
    ranked.sort_by(|a, b| {
        a.score
            .unwrap()
            .total_cmp(&b.score.unwrap())
            .then_with(|| a.params.order(&b.params))
    });
    // Scores that agree to rounding level count as ties and go to the simplest candidate.
    if let Some(best) = ranked.first().and_then(|c| c.score) {
        let tol = TIE_TOL * (best + rms(final_data.targets()));
        let ties = ranked.iter().take_while(|c| c.score.unwrap() <= best + tol).count();
        ranked[..ties].sort_by(|a, b| a.params.order(&b.params));
    }
    let mut refit_errors = Vec::new();
    for cand in ranked {
        match fit_candidate(final_data, &cand.params, cfg, center_seed(seed, FINAL_SPLIT, cand.params.s.unwrap_or(0))) {
            Ok((model, centers)) => {
                return Ok(SelectionResult {
                    params: cand.params,
                    score: cand.score.unwrap(),
                    scores: scores.clone(),
                    model,
                    centers,
                    seed,
                })
            }
            Err(e) => refit_errors.push(format!("{:?}: refit failed: {e}", cand.params)),
        }
    }
    let mut all: Vec<String> = scores
        .iter()
        .filter_map(|c| c.error.as_ref().map(|e| format!("{:?}: {e}", c.params)))
        .collect();
    all.extend(refit_errors);
    Err(Error::AllCandidatesFailed(all))
}

/// Elapsed-time wrapper used by reports.
pub fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t = Instant::now();
    let v = f()?;
    Ok((v, t.elapsed().as_secs_f64()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;
    use crate::kernel::Points;
    use proptest::prelude::*;

    #[test]
    fn degree_rule() {
        assert_eq!(theoretical_degree(1, 3, 2).unwrap(), 1);
        assert_eq!(theoretical_degree(1000, 1, 2).unwrap(), 4);
        assert_eq!(theoretical_degree(1000, 1, 4).unwrap(), 3);
        assert_eq!(theoretical_degree(1000, 1, 1).unwrap(), 10);
        assert_eq!(theoretical_degree(1000, 3, 0).unwrap(), 10);
        assert_eq!(theoretical_degree(1001, 3, 0).unwrap(), 11);
    }

    #[test]
    fn lambda_bound_values() {
        assert!((lambda_upper_bound(1, 1, 1).unwrap() - 4f64.powf(-1.0 / 3.0)).abs() < 1e-15);
        let b = lambda_upper_bound(1000, 1, 2).unwrap();
        assert!((b - 1000f64.powf(-0.8) * 4f64.powf(-0.2)).abs() < 1e-15);
        assert!((b - 3.0170882e-3).abs() < 1e-9);
        assert!(lambda_upper_bound(2000, 1, 2).unwrap() < b);
    }

    #[test]
    fn s_grid_examples() {
        assert_eq!(default_s_grid(1000, 8, None).unwrap().values, vec![1, 2, 3]);
        assert_eq!(default_s_grid(1000, 1, None).unwrap().values, (1..=50).collect::<Vec<_>>());
        let g = default_s_grid(2, 1, None).unwrap();
        assert_eq!(g.values, vec![1]);
        assert_eq!(g.filtered, vec![2]);
        assert_eq!(default_s_grid(1, 1, None).unwrap_err().to_string(), Error::EmptyGrid.to_string());
    }

    #[test]
    fn grids() {
        let g = default_lambda_grid();
        assert_eq!(g.len(), 50);
        assert_eq!((g[0], g[49]), (1e-5, 1.0));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let a = arithmetic_lambda_grid();
        assert_eq!(a.len(), 50);
        assert!((a[1] - 0.01001).abs() < 1e-15);
        let l = linear_grid(1e-5, 1.0, 50).unwrap();
        assert_eq!((l[0], l[49]), (1e-5, 1.0));
        assert_eq!(default_delta_grid().len(), 40);
    }

    proptest! {
        #[test]
        fn s_grid_is_monotone_in_m(m in 1usize..5000, extra in 0usize..5000, d in 1usize..5) {
            let cap = Some(u32::MAX);
            if let Ok(small) = default_s_grid(m, d, cap) {
                let big = default_s_grid(m + extra, d, cap).unwrap();
                prop_assert!(small.values.iter().all(|s| big.values.contains(s)));
            }
        }

        #[test]
        fn degree_rule_in_range(m in 1usize..100_000, d in 1usize..6, r in 0u32..6) {
            let s = theoretical_degree(m, d, r).unwrap();
            prop_assert!(s >= 1 && s <= ceil_root(m as u64, d as u32));
        }

        #[test]
        fn folds_are_balanced(m in 2usize..300, k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(m >= k);
            let f = fold_assignment(m, k, seed).unwrap();
            let mut counts = vec![0usize; k];
            f.iter().for_each(|&i| counts[i] += 1);
            prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        }
    }

    fn poly_data(m: usize, f: impl Fn(f64) -> f64) -> Dataset {
        let xs: Vec<f64> = (0..m).map(|i| -0.9 + 1.8 * i as f64 / (m - 1) as f64).collect();
        Dataset::new(
            Points::from_scalars(&xs).unwrap(),
            xs.iter().map(|&x| f(x)).collect(),
            Provenance::Synthetic { seed: 0 },
        )
        .unwrap()
    }

    #[test]
    fn single_candidate_loo() {
        let data = poly_data(6, |x| x * x + 0.1 * x);
        let grid = SelectionGrid {
            s_values: vec![1],
            ..Default::default()
        };
        let r = kfold_cv(&data, &grid, &SelectionConfig::new(Variant::Epkr), 6, 3).unwrap();
        assert_eq!(r.params.s, Some(1));
        assert_eq!(r.scores.len(), 1);
        assert!(r.score > 0.0);
    }

    #[test]
    fn cv_prefers_exact_degree() {
        let data = poly_data(30, |x| 1.0 - 2.0 * x + 3.0 * x * x);
        let grid = SelectionGrid {
            s_values: vec![1, 2, 3],
            ..Default::default()
        };
        let r = kfold_cv(&data, &grid, &SelectionConfig::new(Variant::Epkr), 3, 1).unwrap();
        assert_eq!(r.params.s, Some(2));
    }

    #[test]
    fn holdout_prefers_exact_degree() {
        let data = poly_data(40, |x| x * x * x - x);
        let grid = SelectionGrid {
            s_values: vec![1, 2, 3, 4, 5],
            ..Default::default()
        };
        let cfg = SelectionConfig::new(Variant::Epkr);
        let r = holdout_select(&data, &grid, &cfg, DEFAULT_HOLDOUT_FRACTION, 8).unwrap();
        assert_eq!(r.params.s, Some(3));
        assert_eq!(r.model.sparsity(), 4);
        let again = holdout_select(&data, &grid, &cfg, DEFAULT_HOLDOUT_FRACTION, 8).unwrap();
        assert_eq!(again.model, r.model);
        assert_eq!(again.scores, r.scores);
    }

    #[test]
    fn ridge_selection_runs() {
        let data = poly_data(40, |x| (2.0 * x).sin());
        let grid = SelectionGrid {
            s_values: vec![2, 4],
            lambda_values: vec![1e-6, 1e-3, 1.0],
            delta_values: vec![0.3, 1.0],
        };
        for v in [Variant::Pkr, Variant::Gkr, Variant::CbrEpkr] {
            let r = kfold_cv(&data, &grid, &SelectionConfig::new(v), 3, 2).unwrap();
            assert_eq!(r.model.variant, v);
            assert!(r.score < 0.2, "{v}: {}", r.score);
        }
    }

    #[test]
    fn empty_grid_fails() {
        let data = poly_data(10, |x| x);
        let r = kfold_cv(&data, &SelectionGrid::default(), &SelectionConfig::new(Variant::Epkr), 2, 0);
        assert!(matches!(r, Err(Error::EmptyGrid)));
    }

    #[test]
    fn all_failing_candidates_are_listed() {
        let data = poly_data(6, |x| x);
        let grid = SelectionGrid {
            s_values: vec![5, 6],
            ..Default::default()
        };
        match kfold_cv(&data, &grid, &SelectionConfig::new(Variant::Epkr), 2, 0) {
            Err(Error::AllCandidatesFailed(list)) => assert_eq!(list.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
