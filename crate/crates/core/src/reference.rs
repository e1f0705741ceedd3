//! Reference samples: named shape families, tabulated CDFs and resized
//! empirical samples.
//!
//! All randomness comes from a ChaCha8 stream seeded with a `u64`, so a given
//! `(spec, n, d, seed)` produces the same sample on every platform.
//!
//! Geometric families are 2-D (the helix also supports 3-D); the rectangle,
//! Gaussian and mixture families work in any dimension.
//!
//! | name | parameters | default |
//! |------|------------|---------|
//! | `uniform-rect` (`uniform`) | `lo,hi` or `lo_1,hi_1,...,lo_d,hi_d` | `0,1` |
//! | `gaussian` | `mean,std` or `mean_1..mean_d,std_1..std_d` | `0,1` |
//! | `gmm` | `std,c_11..c_1d,c_21..c_2d,...` (equal weights) | `0.5` and centres `(+-2, 0, ...)` |
//! | `ring` | `r_in,r_out` | `0.8,1` |
//! | `filled-circle` (`circle`) | `radius` | `1` |
//! | `s-shape` | `thickness,half_width,half_height` | `0.2,1.5,1.5` |
//! | `helix` | `turns,thickness` | `2,0.05` |
//! | `triangle` | `half_size` | `1` |
//! | `diamond` | `radius` | `1` |
//! | `thick-square` | `half_side,thickness` | `1,0.3` |
//!
//! The S-shape is our own construction: two half-ellipse arcs, the upper one
//! bulging left and the lower one bulging right, meeting at the origin, with
//! uniform radial jitter of the given thickness. It is centred at zero and
//! spans `[-half_width, half_width] x [-half_height, half_height]`. The 2-D
//! helix is a spiral of the given number of turns in the unit disc; the 3-D
//! helix winds around the unit cylinder with height in `[-1, 1]`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{QqeError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    UniformRect,
    Gaussian,
    Gmm,
    Ring,
    FilledCircle,
    SShape,
    Helix,
    Triangle,
    Diamond,
    ThickSquare,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 10] = [
        Self::UniformRect,
        Self::Gaussian,
        Self::Gmm,
        Self::Ring,
        Self::FilledCircle,
        Self::SShape,
        Self::Helix,
        Self::Triangle,
        Self::Diamond,
        Self::ThickSquare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::UniformRect => "uniform-rect",
            Self::Gaussian => "gaussian",
            Self::Gmm => "gmm",
            Self::Ring => "ring",
            Self::FilledCircle => "filled-circle",
            Self::SShape => "s-shape",
            Self::Helix => "helix",
            Self::Triangle => "triangle",
            Self::Diamond => "diamond",
            Self::ThickSquare => "thick-square",
        }
    }
}

impl FromStr for ShapeKind {
    type Err = QqeError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let kind = match lower.as_str() {
            "uniform" | "uniform-rect" => Self::UniformRect,
            "circle" | "filled-circle" => Self::FilledCircle,
            other => Self::ALL
                .into_iter()
                .find(|k| k.name() == other)
                .ok_or_else(|| QqeError::UnknownShape(s.to_string()))?,
        };
        Ok(kind)
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A named family with its numeric parameters, written `name[:p1,p2,...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardFamily {
    pub shape: ShapeKind,
    pub params: Vec<f64>,
}

impl FromStr for StandardFamily {
    type Err = QqeError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = match s.split_once(':') {
            Some((name, rest)) => (name, Some(rest)),
            None => (s, None),
        };
        let shape = name.parse()?;
        let params = match rest {
            None => Vec::new(),
            Some(rest) if rest.trim().is_empty() => Vec::new(),
            Some(rest) => rest
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| QqeError::Parse(format!("bad parameter `{p}` in `{s}`")))
                })
                .collect::<Result<_>>()?,
        };
        Ok(Self { shape, params })
    }
}

impl fmt::Display for StandardFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.shape)?;
        if !self.params.is_empty() {
            let ps: Vec<String> = self.params.iter().map(|p| p.to_string()).collect();
            write!(f, ":{}", ps.join(","))?;
        }
        Ok(())
    }
}

/// Piecewise-linear CDF of one dimension: knots `(value, probability)`.
///
/// Values strictly increase, probabilities are non-decreasing in `[0, 1]` and
/// end at 1. The CDF is 0 below the first knot, so a first probability above
/// 0 places an atom at the first value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfTable {
    values: Vec<f64>,
    probabilities: Vec<f64>,
}

impl CdfTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(QqeError::InvalidTable("table has no rows".into()));
        }
        let (values, probabilities): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
        if values.iter().chain(&probabilities).any(|v| !v.is_finite()) {
            return Err(QqeError::InvalidTable("non-finite entry".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(QqeError::InvalidTable("values must be strictly increasing".into()));
        }
        if probabilities.windows(2).any(|w| w[0] > w[1]) {
            return Err(QqeError::InvalidTable("probabilities must be non-decreasing".into()));
        }
        if probabilities[0] < 0.0 {
            return Err(QqeError::InvalidTable("probabilities must be non-negative".into()));
        }
        let last = *probabilities.last().expect("non-empty");
        if (last - 1.0).abs() > 1e-9 {
            return Err(QqeError::InvalidTable(format!("last probability is {last}, expected 1")));
        }
        Ok(Self { values, probabilities })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Linear interpolation of the inverse CDF at `u`.
    pub fn inverse(&self, u: f64) -> f64 {
        let k = self.probabilities.partition_point(|&p| p < u);
        if k == 0 {
            return self.values[0];
        }
        if k >= self.values.len() {
            return *self.values.last().expect("non-empty");
        }
        let (p0, p1) = (self.probabilities[k - 1], self.probabilities[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        if p1 <= p0 {
            return v1;
        }
        v0 + (u - p0) / (p1 - p0) * (v1 - v0)
    }
}

/// `n` draws from the tabulated distribution by inverse-transform sampling.
pub fn sample_inverse_cdf(table: &CdfTable, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    draw_inverse_cdf(table, n, &mut rng)
}

fn draw_inverse_cdf(table: &CdfTable, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| table.inverse(rng.gen::<f64>())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceKind<T> {
    StandardFamily(StandardFamily),
    EmpiricalSample(Matrix<T>),
    /// One table per dimension, sampled independently.
    CdfTable(Vec<CdfTable>),
}

/// Declarative description of the desired distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSpec<T> {
    pub kind: ReferenceKind<T>,
    pub seed: u64,
}

impl<T: Scalar> ReferenceSpec<T> {
    pub fn new(kind: ReferenceKind<T>, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn sample(&self, n: usize, d: usize) -> Result<Matrix<T>> {
        sample_reference(&self.kind, n, d, self.seed)
    }
}

/// Materialises an `n x d` reference sample.
pub fn sample_reference<T: Scalar>(kind: &ReferenceKind<T>, n: usize, d: usize, seed: u64) -> Result<Matrix<T>> {
    match kind {
        ReferenceKind::StandardFamily(family) => shape_sampler(family, n, d, seed),
        ReferenceKind::EmpiricalSample(sample) => {
            if sample.cols() != d {
                return Err(QqeError::DimensionMismatch { expected: d, actual: sample.cols() });
            }
            resize_reference(sample, n, seed)
        }
        ReferenceKind::CdfTable(tables) => {
            if tables.len() != d {
                return Err(QqeError::DimensionMismatch { expected: d, actual: tables.len() });
            }
            let mut rng = rng_from_seed(seed);
            let columns: Vec<Vec<f64>> = tables.iter().map(|t| draw_inverse_cdf(t, n, &mut rng)).collect();
            Ok(Matrix::from_fn(n, d, |i, j| T::lit(columns[j][i])))
        }
    }
}

/// Brings an `m x d` sample to `n` rows: subsampling without replacement
/// when `m > n`, keeping every row and appending bootstrap draws when `m < n`.
pub fn resize_reference<T: Scalar>(sample: &Matrix<T>, n: usize, seed: u64) -> Result<Matrix<T>> {
    let m = sample.rows();
    if m == 0 {
        return Err(QqeError::EmptySample);
    }
    if m == n {
        return Ok(sample.clone());
    }
    let mut rng = rng_from_seed(seed);
    let rows: Vec<usize> = if m > n {
        let mut picked = index::sample(&mut rng, m, n).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..m).chain((0..n - m).map(|_| rng.gen_range(0..m))).collect()
    };
    Ok(sample.select_rows(&rows))
}

fn bad_params(shape: ShapeKind, reason: impl Into<String>) -> QqeError {
    QqeError::InvalidShapeParams { shape: shape.name().to_string(), reason: reason.into() }
}

fn params_or<const N: usize>(family: &StandardFamily, defaults: [f64; N]) -> Result<[f64; N]> {
    match family.params.len() {
        0 => Ok(defaults),
        len if len == N => Ok(std::array::from_fn(|i| family.params[i])),
        len => Err(bad_params(family.shape, format!("expected {N} parameters, got {len}"))),
    }
}

fn require_dim(shape: ShapeKind, d: usize, allowed: &[usize]) -> Result<()> {
    if allowed.contains(&d) {
        Ok(())
    } else {
        log::debug!("{} supports dimensions {allowed:?}", shape.name());
        Err(QqeError::DimensionMismatch { expected: allowed[0], actual: d })
    }
}

/// Draws `n` points of the named family in `d` dimensions.
pub fn shape_sampler<T: Scalar>(family: &StandardFamily, n: usize, d: usize, seed: u64) -> Result<Matrix<T>> {
    if d == 0 {
        return Err(QqeError::DimensionMismatch { expected: 1, actual: 0 });
    }
    if family.params.iter().any(|p| !p.is_finite()) {
        return Err(bad_params(family.shape, "parameters must be finite"));
    }
    let mut rng = rng_from_seed(seed);
    let shape = family.shape;
    let rows: Vec<Vec<f64>> = match shape {
        ShapeKind::UniformRect => {
            let bounds: Vec<(f64, f64)> = match family.params.len() {
                0 => vec![(0.0, 1.0); d],
                2 => vec![(family.params[0], family.params[1]); d],
                len if len == 2 * d => family.params.chunks(2).map(|c| (c[0], c[1])).collect(),
                len => return Err(bad_params(shape, format!("expected 0, 2 or {} parameters, got {len}", 2 * d))),
            };
            if bounds.iter().any(|(lo, hi)| lo >= hi) {
                return Err(bad_params(shape, "each lower bound must be below its upper bound"));
            }
            (0..n).map(|_| bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect()).collect()
        }
        ShapeKind::Gaussian => {
            let (means, stds) = match family.params.len() {
                0 => (vec![0.0; d], vec![1.0; d]),
                2 => (vec![family.params[0]; d], vec![family.params[1]; d]),
                len if len == 2 * d => (family.params[..d].to_vec(), family.params[d..].to_vec()),
                len => return Err(bad_params(shape, format!("expected 0, 2 or {} parameters, got {len}", 2 * d))),
            };
            let normals = means
                .iter()
                .zip(&stds)
                .map(|(&m, &s)| Normal::new(m, s).map_err(|_| bad_params(shape, "std must be positive")))
                .collect::<Result<Vec<_>>>()?;
            if stds.iter().any(|&s| s <= 0.0) {
                return Err(bad_params(shape, "std must be positive"));
            }
            (0..n).map(|_| normals.iter().map(|nd| nd.sample(&mut rng)).collect()).collect()
        }
        ShapeKind::Gmm => {
            let (std, centres) = if family.params.is_empty() {
                let mut a = vec![0.0; d];
                let mut b = vec![0.0; d];
                a[0] = -2.0;
                b[0] = 2.0;
                (0.5, vec![a, b])
            } else {
                let rest = &family.params[1..];
                if rest.is_empty() || !rest.len().is_multiple_of(d) {
                    return Err(bad_params(shape, format!("expected std followed by centres of dimension {d}")));
                }
                (family.params[0], rest.chunks(d).map(<[f64]>::to_vec).collect())
            };
            if std <= 0.0 {
                return Err(bad_params(shape, "std must be positive"));
            }
            (0..n)
                .map(|_| {
                    let c = &centres[rng.gen_range(0..centres.len())];
                    c.iter()
                        .map(|&m| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            m + std * z
                        })
                        .collect()
                })
                .collect()
        }
        ShapeKind::Ring => {
            require_dim(shape, d, &[2])?;
            let [r_in, r_out] = params_or(family, [0.8, 1.0])?;
            if !(0.0 <= r_in && r_in < r_out) {
                return Err(bad_params(shape, "need 0 <= r_in < r_out"));
            }
            (0..n)
                .map(|_| {
                    // inverse transform on r^2 keeps the annulus uniform
                    let r = rng.gen_range(r_in * r_in..=r_out * r_out).sqrt();
                    let t = rng.gen_range(0.0..2.0 * PI);
                    vec![r * t.cos(), r * t.sin()]
                })
                .collect()
        }
        ShapeKind::FilledCircle => {
            require_dim(shape, d, &[2])?;
            let [r] = params_or(family, [1.0])?;
            if r <= 0.0 {
                return Err(bad_params(shape, "radius must be positive"));
            }
            rejection(&mut rng, n, r, |x, y| x * x + y * y <= r * r)
        }
        ShapeKind::Triangle => {
            require_dim(shape, d, &[2])?;
            let [s] = params_or(family, [1.0])?;
            if s <= 0.0 {
                return Err(bad_params(shape, "size must be positive"));
            }
            rejection(&mut rng, n, s, |x, y| 2.0 * x.abs() <= s - y)
        }
        ShapeKind::Diamond => {
            require_dim(shape, d, &[2])?;
            let [r] = params_or(family, [1.0])?;
            if r <= 0.0 {
                return Err(bad_params(shape, "radius must be positive"));
            }
            rejection(&mut rng, n, r, |x, y| x.abs() + y.abs() <= r)
        }
        ShapeKind::ThickSquare => {
            require_dim(shape, d, &[2])?;
            let [h, t] = params_or(family, [1.0, 0.3])?;
            if !(h > 0.0 && t > 0.0 && t <= h) {
                return Err(bad_params(shape, "need 0 < thickness <= half_side"));
            }
            // four strips: top and bottom span the full width
            let band = 2.0 * h * t;
            let side = t * 2.0 * (h - t);
            let total = 2.0 * band + 2.0 * side;
            (0..n)
                .map(|_| {
                    let pick = rng.gen_range(0.0..total);
                    let across = rng.gen_range(-h..h);
                    let inner = if h > t { rng.gen_range(-(h - t)..(h - t)) } else { 0.0 };
                    let depth = rng.gen_range(h - t..=h);
                    if pick < band {
                        vec![across, depth]
                    } else if pick < 2.0 * band {
                        vec![across, -depth]
                    } else if pick < 2.0 * band + side {
                        vec![depth, inner]
                    } else {
                        vec![-depth, inner]
                    }
                })
                .collect()
        }
        ShapeKind::SShape => {
            require_dim(shape, d, &[2])?;
            let [t, half_w, half_h] = params_or(family, [0.2, 1.5, 1.5])?;
            if !(t >= 0.0 && half_w > t / 2.0 && half_h > t / 2.0) {
                return Err(bad_params(shape, "need thickness >= 0 below the half extents"));
            }
            let rx = half_w - t / 2.0;
            let ry = (half_h - t / 2.0) / 2.0;
            (0..n)
                .map(|_| {
                    let upper = rng.gen_bool(0.5);
                    let u = rng.gen_range(0.0..=1.0);
                    let jitter = if t > 0.0 { rng.gen_range(-t / 2.0..=t / 2.0) } else { 0.0 };
                    let (theta, cy) = if upper { (PI / 2.0 + PI * u, ry) } else { (-PI / 2.0 + PI * u, -ry) };
                    vec![(rx + jitter) * theta.cos(), cy + (ry + jitter) * theta.sin()]
                })
                .collect()
        }
        ShapeKind::Helix => {
            require_dim(shape, d, &[2, 3])?;
            let [turns, t] = params_or(family, [2.0, 0.05])?;
            if !(turns > 0.0 && t >= 0.0) {
                return Err(bad_params(shape, "need turns > 0 and thickness >= 0"));
            }
            let span = 2.0 * PI * turns;
            (0..n)
                .map(|_| {
                    let s = rng.gen_range(0.0..=span);
                    let jitter = if t > 0.0 { rng.gen_range(-t / 2.0..=t / 2.0) } else { 0.0 };
                    if d == 2 {
                        let r = s / span + jitter;
                        vec![r * s.cos(), r * s.sin()]
                    } else {
                        let r = 1.0 + jitter;
                        vec![r * s.cos(), r * s.sin(), 2.0 * s / span - 1.0]
                    }
                })
                .collect()
        }
    };
    Ok(Matrix::from_fn(n, d, |i, j| T::lit(rows[i][j])))
}

/// Uniform draws from `[-half, half]^2` kept when `inside` accepts them.
/// Callers use regions covering at least half of the box.
fn rejection(rng: &mut ChaCha8Rng, n: usize, half: f64, inside: impl Fn(f64, f64) -> bool) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = rng.gen_range(-half..=half);
        let y = rng.gen_range(-half..=half);
        if inside(x, y) {
            out.push(vec![x, y]);
        }
    }
    out
}
