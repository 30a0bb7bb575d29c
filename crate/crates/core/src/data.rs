//! Datasets: the toy regression problem, CSV ingestion, normalization into
//! the unit ball, random splits and the RMSE metric.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::Points;
use crate::linalg::dot;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum Provenance {
    Toy { seed: u64, sigma_sq: f64, m: usize },
    File {
        path: PathBuf,
        normalization: Option<NormalizationRecord>,
    },
    Synthetic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Points,
    targets: Vec<f64>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(inputs: Points, targets: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                context: "Dataset::new (targets)",
                expected: inputs.len(),
                found: targets.len(),
            });
        }
        if targets.is_empty() {
            return Err(Error::Empty("Dataset::new"));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Dataset::new"));
        }
        Ok(Self {
            inputs,
            targets,
            provenance,
        })
    }

    pub fn inputs(&self) -> &Points {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn dim(&self) -> usize {
        self.inputs.dim()
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Largest absolute target.
    pub fn max_abs_target(&self) -> f64 {
        self.targets.iter().fold(0.0, |m, y| m.max(y.abs()))
    }

    /// Samples at the given indices, keeping the provenance.
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.inputs.select(idx),
            idx.iter().map(|&i| self.targets[i]).collect(),
            self.provenance.clone(),
        )
    }
}

/// `f(t) = (1 − 2t)_+^5 (32t² + 10t + 1)`.
pub fn toy_target(t: f64) -> f64 {
    let base = (1.0 - 2.0 * t).max(0.0);
    base.powi(5) * (32.0 * t * t + 10.0 * t + 1.0)
}

/// `m` inputs uniform on [0,1] with targets `toy_target(x) + N(0, sigma_sq)`.
pub fn gen_toy(m: usize, sigma_sq: f64, seed: u64) -> Result<Dataset> {
    if m == 0 {
        return Err(invalid("sample size must be >= 1"));
    }
    if !(sigma_sq >= 0.0) || !sigma_sq.is_finite() {
        return Err(invalid(format!("noise variance must be >= 0, got {sigma_sq}")));
    }
    let sigma = sigma_sq.sqrt();
    let mut rng = rng_from_seed(seed);
    let mut xs = Vec::with_capacity(m);
    let mut ys = Vec::with_capacity(m);
    for _ in 0..m {
        let x: f64 = rng.random();
        let e: f64 = StandardNormal.sample(&mut rng);
        xs.push(x);
        ys.push(if sigma > 0.0 { toy_target(x) + sigma * e } else { toy_target(x) });
    }
    Dataset::new(Points::from_scalars(&xs)?, ys, Provenance::Toy { seed, sigma_sq, m })
}

/// Noiseless toy test set.
pub fn gen_toy_test(m: usize, seed: u64) -> Result<Dataset> {
    gen_toy(m, 0.0, seed)
}

/// Reads comma-separated decimals; the last column is the target.
pub fn load_csv(path: &Path, has_header: bool) -> Result<Dataset> {
    let (w, cells) = read_table(path, has_header)?;
    if w < 2 {
        return Err(Error::TooFewColumns { found: w });
    }
    let mut coords = Vec::with_capacity(cells.len());
    let mut targets = Vec::with_capacity(cells.len() / w);
    for row in cells.chunks(w) {
        coords.extend_from_slice(&row[..w - 1]);
        targets.push(row[w - 1]);
    }
    Dataset::new(
        Points::new(w - 1, coords)?,
        targets,
        Provenance::File {
            path: path.to_path_buf(),
            normalization: None,
        },
    )
}

/// Reads inputs of dimension `dim`, with an optional trailing target column.
pub fn load_features(path: &Path, has_header: bool, dim: usize) -> Result<(Points, Option<Vec<f64>>)> {
    let (w, cells) = read_table(path, has_header)?;
    if w == dim {
        Ok((Points::new(dim, cells)?, None))
    } else if w == dim + 1 {
        let mut coords = Vec::with_capacity(cells.len());
        let mut targets = Vec::with_capacity(cells.len() / w);
        for row in cells.chunks(w) {
            coords.extend_from_slice(&row[..dim]);
            targets.push(row[dim]);
        }
        Ok((Points::new(dim, coords)?, Some(targets)))
    } else {
        Err(Error::DimensionMismatch {
            context: "input columns",
            expected: dim,
            found: w,
        })
    }
}

/// Row-major numeric cells and the common row width.
fn read_table(path: &Path, has_header: bool) -> Result<(usize, Vec<f64>)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut width = None;
    let mut cells = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if has_header && i == 0 {
            continue;
        }
        if record.len() == 1 && record.get(0).is_some_and(str::is_empty) {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::RaggedRow {
                row,
                expected: w,
                found: record.len(),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => cells.push(v),
                _ => {
                    return Err(Error::NonNumeric {
                        row,
                        column: j + 1,
                        value: cell.to_string(),
                    })
                }
            }
        }
    }
    match width {
        Some(w) => Ok((w, cells)),
        None => Err(Error::EmptyFile(path.to_path_buf())),
    }
}

/// Per-coordinate affine map onto [−1, 1] followed by a global radial rescale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    /// Coordinate midpoints.
    pub shift: Vec<f64>,
    /// Coordinate half-ranges; zero for constant coordinates.
    pub scale: Vec<f64>,
    /// Divisor applied after the affine step (≥ 1).
    pub radial: f64,
    /// False when some coordinate was constant and cannot be recovered.
    pub invertible: bool,
}

impl NormalizationRecord {
    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(x.iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(v, (c, s))| if *s > 0.0 { (v - c) / s / self.radial } else { 0.0 })
            .collect())
    }

    /// Raw coordinates of a normalized point; constant coordinates return their value.
    pub fn invert(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(z)?;
        Ok(z.iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(v, (c, s))| v * self.radial * s + c)
            .collect())
    }

    pub fn apply_points(&self, pts: &Points) -> Result<Points> {
        let mut coords = Vec::with_capacity(pts.coords().len());
        for p in pts.iter() {
            coords.extend(self.apply(p)?);
        }
        Points::new(pts.dim(), coords)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "normalization record",
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

/// Maps inputs into the closed unit ball; targets are left unchanged.
pub fn normalize_ball(data: &Dataset) -> Result<(Dataset, NormalizationRecord)> {
    let d = data.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in data.inputs().iter() {
        for j in 0..d {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }
    let shift: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let scale: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (b - a)).collect();
    let mut rec = NormalizationRecord {
        invertible: scale.iter().all(|&s| s > 0.0),
        shift,
        scale,
        radial: 1.0,
    };
    let stage1 = rec.apply_points(data.inputs())?;
    rec.radial = stage1.iter().map(|p| dot(p, p).sqrt()).fold(1.0, f64::max);
    let inputs = rec.apply_points(data.inputs())?;
    let provenance = match data.provenance() {
        Provenance::File { path, .. } => Provenance::File {
            path: path.clone(),
            normalization: Some(rec.clone()),
        },
        other => other.clone(),
    };
    Ok((Dataset::new(inputs, data.targets().to_vec(), provenance)?, rec))
}

fn split_sizes(m: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(invalid(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let first = (fraction * m as f64).round() as usize;
    if first == 0 || first >= m {
        return Err(invalid(format!("split of {m} samples at {fraction} leaves an empty part")));
    }
    Ok(first)
}

/// Index partition behind [`split`].
pub fn split_indices(m: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let first = split_sizes(m, fraction)?;
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let rest = idx.split_off(first);
    Ok((idx, rest))
}

/// Random partition into parts of sizes `round(fraction·m)` and the remainder.
pub fn split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (a, b) = split_indices(data.len(), fraction, seed)?;
    Ok((data.subset(&a)?, data.subset(&b)?))
}

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            context: "rmse",
            expected: targets.len(),
            found: predictions.len(),
        });
    }
    if targets.is_empty() {
        return Err(Error::Empty("rmse"));
    }
    let ss: f64 = predictions.iter().zip(targets).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok((ss / targets.len() as f64).sqrt())
}
