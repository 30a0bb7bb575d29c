//! Center sets for the polynomial kernel: sampling in the ball and on the
//! sphere, and construction of verified fundamental systems.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::{kernel_matrix, Kernel, Points, PolyKernel};
use crate::linalg::{dot, pivoted_cholesky, svd};
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// Default number of redraws before giving up on a fundamental system.
pub const DEFAULT_MAX_RETRIES: usize = 100;

/// `dim P_s^d = C(s + d, d)`.
pub fn poly_dim(s: u32, d: usize) -> Result<usize> {
    if d == 0 {
        return Err(invalid("dimension must be >= 1"));
    }
    let s = s as u128;
    let d = d as u128;
    let k = s.min(d);
    let n = s + d;
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc
            .checked_mul(n - k + i)
            .ok_or_else(|| Error::Overflow(format!("C({n}, {k})")))?
            / i;
    }
    usize::try_from(acc).map_err(|_| Error::Overflow(format!("C({n}, {k}) = {acc}")))
}

fn gaussian_direction(rng: &mut Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let r = dot(&v, &v).sqrt();
        if r > 0.0 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

fn draw_ball(rng: &mut Rng, d: usize) -> Vec<f64> {
    let dir = gaussian_direction(rng, d);
    let u: f64 = rng.random();
    let radius = u.powf(1.0 / d as f64);
    dir.into_iter().map(|x| x * radius).collect()
}

/// `count` i.i.d. points uniform in the closed unit ball of R^d.
pub fn sample_uniform_ball(d: usize, count: usize, seed: u64) -> Result<Points> {
    if d == 0 {
        return Err(invalid("dimension must be >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    let coords = (0..count).flat_map(|_| draw_ball(&mut rng, d)).collect();
    Points::new(d, coords)
}

/// `count` i.i.d. points uniform on the sphere S^{d-1}.
pub fn sample_sphere(d: usize, count: usize, seed: u64) -> Result<Points> {
    if d < 2 {
        return Err(invalid("sphere sampling needs d >= 2"));
    }
    let mut rng = rng_from_seed(seed);
    let coords = (0..count).flat_map(|_| gaussian_direction(&mut rng, d)).collect();
    Points::new(d, coords)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterStrategy {
    #[serde(rename = "uniform-ball")]
    Uniform,
    FirstSamples,
    #[serde(rename = "equispaced-1d")]
    Equispaced,
    Gaussian,
}

impl CenterStrategy {
    pub const ALL: [CenterStrategy; 4] = [
        CenterStrategy::Uniform,
        CenterStrategy::FirstSamples,
        CenterStrategy::Equispaced,
        CenterStrategy::Gaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CenterStrategy::Uniform => "uniform-ball",
            CenterStrategy::FirstSamples => "first-samples",
            CenterStrategy::Equispaced => "equispaced-1d",
            CenterStrategy::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for CenterStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CenterStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform-ball" => Ok(CenterStrategy::Uniform),
            "first" | "first-samples" => Ok(CenterStrategy::FirstSamples),
            "equispaced" | "equispaced-1d" => Ok(CenterStrategy::Equispaced),
            "gaussian" => Ok(CenterStrategy::Gaussian),
            other => Err(invalid(format!("unknown center strategy {other:?}"))),
        }
    }
}

/// Region random centers are drawn from before verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterDomain {
    /// Uniform in the unit ball (the normalized data domain).
    #[default]
    Ball,
    /// Uniform in the raw cube [0,1]^d, then projected into the ball.
    Cube,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterOptions {
    pub strategy: CenterStrategy,
    pub domain: CenterDomain,
    pub max_retries: usize,
}

impl Default for CenterOptions {
    fn default() -> Self {
        Self {
            strategy: CenterStrategy::Uniform,
            domain: CenterDomain::Ball,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }
}

impl CenterOptions {
    pub fn with_strategy(strategy: CenterStrategy) -> Self {
        Self {
            strategy,
            ..Self::default()
        }
    }
}

/// `n = C(s+d, d)` centers in the unit ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterSet {
    degree: u32,
    points: Points,
    verified: bool,
    strategy: CenterStrategy,
    rank: usize,
    /// `σ_min / σ_max` of the center Gram matrix.
    conditioning: f64,
    attempts: usize,
}

impl CenterSet {
    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn verified(&self) -> bool {
        self.verified
    }

    pub fn strategy(&self) -> CenterStrategy {
        self.strategy
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn conditioning(&self) -> f64 {
        self.conditioning
    }

    /// Draws used, counting the first one.
    pub fn attempts(&self) -> usize {
        self.attempts
    }
}

fn project_into_ball(p: &mut [f64]) {
    let r = dot(p, p).sqrt();
    if r > 1.0 {
        p.iter_mut().for_each(|x| *x /= r);
    }
}

fn draw_in_domain(rng: &mut Rng, d: usize, domain: CenterDomain) -> Vec<f64> {
    match domain {
        CenterDomain::Ball => draw_ball(rng, d),
        CenterDomain::Cube => {
            let mut p: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            project_into_ball(&mut p);
            p
        }
    }
}

fn draw_gaussian(rng: &mut Rng, d: usize) -> Vec<f64> {
    let normal = Normal::new(0.5, 1.0).expect("unit variance");
    let mut p: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
    project_into_ball(&mut p);
    p
}

struct Verification {
    rank: usize,
    conditioning: f64,
}

fn verify(points: &Points, s: u32) -> Result<Verification> {
    let kernel = Kernel::Poly(PolyKernel::new(s)?);
    let gram = kernel_matrix(&kernel, points, points)?;
    let f = svd(&gram)?;
    let rank = f.rank_above(f.default_cutoff());
    let smax = f.sigma_max();
    let smin = f.singulars.last().copied().unwrap_or(0.0);
    Ok(Verification {
        rank,
        conditioning: if smax > 0.0 { smin / smax } else { 0.0 },
    })
}

/// Gram-matrix pivot order: the first `rank` indices are kept, the rest replaced.
fn offending_points(points: &Points, s: u32) -> Result<Vec<usize>> {
    let kernel = Kernel::Poly(PolyKernel::new(s)?);
    let gram = kernel_matrix(&kernel, points, points)?;
    let n = gram.rows();
    let pc = pivoted_cholesky(&gram, n as f64 * f64::EPSILON)?;
    let kept = pc.factor.cols();
    let mut bad: Vec<usize> = pc.pivots[kept..].to_vec();
    if bad.is_empty() {
        bad.push(pc.pivots[n - 1]);
    }
    Ok(bad)
}

fn initial_points(
    d: usize,
    n: usize,
    opts: &CenterOptions,
    source: Option<&Points>,
    rng: &mut Rng,
) -> Result<Points> {
    match opts.strategy {
        CenterStrategy::Uniform => {
            let coords = (0..n).flat_map(|_| draw_in_domain(rng, d, opts.domain)).collect();
            Points::new(d, coords)
        }
        CenterStrategy::Gaussian => {
            let coords = (0..n).flat_map(|_| draw_gaussian(rng, d)).collect();
            Points::new(d, coords)
        }
        CenterStrategy::Equispaced => {
            if d != 1 {
                return Err(invalid("equispaced centers are defined for d = 1 only"));
            }
            let step = if n > 1 { 1.0 / (n - 1) as f64 } else { 0.0 };
            let coords = (0..n).map(|j| if n > 1 { j as f64 * step } else { 0.5 }).collect();
            Points::new(1, coords)
        }
        CenterStrategy::FirstSamples => {
            let src = source.ok_or_else(|| invalid("first-samples centers need a source point list"))?;
            if src.dim() != d {
                return Err(Error::DimensionMismatch {
                    context: "first-samples centers",
                    expected: d,
                    found: src.dim(),
                });
            }
            if src.len() < n {
                return Err(Error::Underdetermined {
                    centers: n,
                    samples: src.len(),
                });
            }
            let idx: Vec<usize> = (0..n).collect();
            let mut pts = src.select(&idx);
            pts.coords_mut().chunks_exact_mut(d).for_each(project_into_ball);
            Ok(pts)
        }
    }
}

fn validate_request(s: u32, d: usize) -> Result<usize> {
    if s == 0 {
        return Err(invalid("degree s must be >= 1"));
    }
    poly_dim(s, d)
}

/// Draws centers and verifies that their Gram matrix has full rank `n`,
/// redrawing (or, for first-samples, replacing the offending points) up to
/// `max_retries` times.
pub fn build_fundamental_system(
    s: u32,
    d: usize,
    opts: &CenterOptions,
    source: Option<&Points>,
    seed: u64,
) -> Result<CenterSet> {
    let n = validate_request(s, d)?;
    let mut rng = rng_from_seed(seed);
    let mut points = initial_points(d, n, opts, source, &mut rng)?;
    let mut best_rank = 0;
    for attempt in 0..=opts.max_retries {
        let v = verify(&points, s)?;
        if v.rank == n {
            return Ok(CenterSet {
                degree: s,
                points,
                verified: true,
                strategy: opts.strategy,
                rank: v.rank,
                conditioning: v.conditioning,
                attempts: attempt + 1,
            });
        }
        best_rank = best_rank.max(v.rank);
        if attempt == opts.max_retries {
            break;
        }
        points = match opts.strategy {
            CenterStrategy::Uniform | CenterStrategy::Gaussian => {
                let mut redraw = rng_from_seed(derive_seed(seed, &[attempt as u64 + 1]));
                initial_points(d, n, opts, source, &mut redraw)?
            }
            CenterStrategy::FirstSamples => {
                let bad = offending_points(&points, s)?;
                let mut coords = points.coords().to_vec();
                for i in bad {
                    let p = draw_in_domain(&mut rng, d, opts.domain);
                    coords[i * d..(i + 1) * d].copy_from_slice(&p);
                }
                Points::new(d, coords)?
            }
            CenterStrategy::Equispaced => break,
        };
    }
    Err(Error::RankDeficient {
        achieved: best_rank,
        required: n,
        attempts: opts.max_retries + 1,
    })
}

/// One draw with no rank requirement; the result carries `verified = false`
/// unless the draw happens to pass. Used for exploratory sweeps where
/// verification is known to fail at finite precision.
pub fn draw_centers(s: u32, d: usize, opts: &CenterOptions, source: Option<&Points>, seed: u64) -> Result<CenterSet> {
    let n = validate_request(s, d)?;
    let mut rng = rng_from_seed(seed);
    let points = initial_points(d, n, opts, source, &mut rng)?;
    let v = verify(&points, s)?;
    Ok(CenterSet {
        degree: s,
        points,
        verified: v.rank == n,
        strategy: opts.strategy,
        rank: v.rank,
        conditioning: v.conditioning,
        attempts: 1,
    })
}

/// Verified system when possible, otherwise a single unverified draw.
pub fn build_or_draw(s: u32, d: usize, opts: &CenterOptions, source: Option<&Points>, seed: u64) -> Result<CenterSet> {
    match build_fundamental_system(s, d, opts, source, seed) {
        Err(Error::RankDeficient { .. }) => draw_centers(s, d, opts, source, seed),
        other => other,
    }
}
