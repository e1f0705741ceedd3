//! Distribution-difference measures: KL divergence between kernel density
//! estimates, MMD², HSIC, Recall@k and per-dimension qq-line diagnostics.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{QqeError, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::scalar::Scalar;
use crate::transform::simple_regression;

const FLOOR: f64 = 1e-12;
/// Pooled samples larger than this estimate the median heuristic from an
/// evenly spaced subset of the rows in lexicographic order.
const MEDIAN_POOL_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise distance of the pooled sample.
    MedianHeuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    /// `k(x, y) = exp(-||x - y||^2 / (2 h^2))`.
    Rbf(Bandwidth),
    /// `k(x, y) = <x, y>`.
    Linear,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::Rbf(Bandwidth::MedianHeuristic)
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Rbf(Bandwidth::Fixed(h)) if !(h.is_finite() && *h > 0.0) => {
                Err(QqeError::InvalidConfig(format!("kernel bandwidth must be positive, got {h}")))
            }
            _ => Ok(()),
        }
    }
}

fn check_same_shape<T: Scalar>(x: &Matrix<T>, y: &Matrix<T>) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(QqeError::ShapeMismatch(format!(
            "samples must have equal shapes, got {}x{} and {}x{}",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        )));
    }
    if x.rows() == 0 {
        return Err(QqeError::EmptySample);
    }
    Ok(())
}

/// Gaussian product-kernel density estimate with Scott's bandwidths
/// `h_l = s_l * n^(-1/(d+4))`, `s_l` the sample standard deviation.
#[derive(Debug, Clone)]
pub struct Kde<'a, T> {
    sample: &'a Matrix<T>,
    bandwidths: Vec<T>,
    norm: T,
}

impl<'a, T: Scalar> Kde<'a, T> {
    pub fn fit(sample: &'a Matrix<T>) -> Result<Self> {
        let (n, d) = sample.shape();
        if n < 2 {
            return Err(QqeError::TooFewPoints { n, required: 2 });
        }
        let factor = T::from_count(n).powf(-T::one() / T::from_count(d + 4));
        let means = sample.column_means();
        let bandwidths: Vec<T> = (0..d)
            .map(|l| {
                let var = sample.iter_rows().map(|r| (r[l] - means[l]).powi(2)).sum::<T>() / T::from_count(n - 1);
                (var.sqrt() * factor).max(T::lit(FLOOR))
            })
            .collect();
        let h_prod = bandwidths.iter().fold(T::one(), |p, &h| p * h);
        let norm = T::one() / (T::from_count(n) * h_prod * T::lit(2.0 * PI).powi(d as i32).sqrt());
        Ok(Self { sample, bandwidths, norm })
    }

    pub fn bandwidths(&self) -> &[T] {
        &self.bandwidths
    }

    pub fn density(&self, query: &[T]) -> T {
        let half = T::lit(0.5);
        let total: T = self
            .sample
            .iter_rows()
            .map(|row| {
                let z2: T = row
                    .iter()
                    .zip(query)
                    .zip(&self.bandwidths)
                    .map(|((&s, &q), &h)| ((q - s) / h).powi(2))
                    .sum();
                (-half * z2).exp()
            })
            .sum();
        (total * self.norm).max(T::min_positive_value())
    }
}

pub fn kde_density<T: Scalar>(sample: &Matrix<T>, query: &[T]) -> Result<T> {
    if query.len() != sample.cols() {
        return Err(QqeError::DimensionMismatch { expected: sample.cols(), actual: query.len() });
    }
    Ok(Kde::fit(sample)?.density(query))
}

/// Where the second density is evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlPairing {
    /// `P(x_i)` against `Q(y_i)`: each estimate at its own sample, paired by row.
    #[default]
    IndexPaired,
    /// `P(x_i)` against `Q(x_i)`: both estimates at the points of `X`.
    SharedPoints,
}

fn normalised<T: Scalar>(values: Vec<T>) -> Vec<T> {
    let total: T = values.iter().copied().sum();
    values.into_iter().map(|v| v / total).collect()
}

/// `sum_i p_i log(p_i / q_i)` with index-paired KDE values, each set
/// renormalised to sum to one.
pub fn kl_divergence<T: Scalar>(x: &Matrix<T>, y: &Matrix<T>) -> Result<T> {
    kl_divergence_with(x, y, KlPairing::IndexPaired)
}

pub fn kl_divergence_with<T: Scalar>(x: &Matrix<T>, y: &Matrix<T>, pairing: KlPairing) -> Result<T> {
    check_same_shape(x, y)?;
    let p_kde = Kde::fit(x)?;
    let q_kde = Kde::fit(y)?;
    let p = normalised(x.iter_rows().map(|r| p_kde.density(r)).collect());
    let q = match pairing {
        KlPairing::IndexPaired => y.iter_rows().map(|r| q_kde.density(r)).collect(),
        KlPairing::SharedPoints => x.iter_rows().map(|r| q_kde.density(r)).collect(),
    };
    let q = normalised(q);
    let floor = T::lit(FLOOR);
    Ok(p.iter().zip(&q).map(|(&pi, &qi)| pi * (pi.max(floor) / qi.max(floor)).ln()).sum())
}

/// Rows sorted lexicographically, so the result does not depend on the
/// storage order.
fn canonical_rows<T: Scalar>(rows: Vec<&[T]>) -> Vec<&[T]> {
    let mut rows = rows;
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(p, q)| p.partial_cmp(q).expect("finite"))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    rows
}

/// Median of the pairwise Euclidean distances of the pooled rows, floored at
/// a tiny positive value.
pub fn median_heuristic<T: Scalar>(samples: &[&Matrix<T>]) -> T {
    let mut rows: Vec<&[T]> = samples.iter().flat_map(|m| m.iter_rows()).collect();
    if rows.len() > MEDIAN_POOL_LIMIT {
        let sorted = canonical_rows(rows);
        let stride = sorted.len() as f64 / MEDIAN_POOL_LIMIT as f64;
        rows = (0..MEDIAN_POOL_LIMIT).map(|k| sorted[(k as f64 * stride) as usize]).collect();
    }
    let m = rows.len();
    let mut dists = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            dists.push(squared_distance(rows[i], rows[j]).sqrt());
        }
    }
    if dists.is_empty() {
        return T::lit(FLOOR);
    }
    let mid = dists.len() / 2;
    let cmp = |a: &T, b: &T| a.partial_cmp(b).expect("finite");
    let (_, &mut upper, _) = dists.select_nth_unstable_by(mid, cmp);
    let median = if dists.len() % 2 == 1 {
        upper
    } else {
        let lower = dists[..mid].iter().copied().fold(T::neg_infinity(), T::max);
        (lower + upper) / T::lit(2.0)
    };
    median.max(T::lit(FLOOR))
}

/// Kernel with its bandwidth resolved against a pooled sample.
#[derive(Debug, Clone, Copy)]
enum ResolvedKernel<T> {
    Rbf { inv_two_h2: T },
    Linear,
}

impl<T: Scalar> ResolvedKernel<T> {
    fn resolve(spec: KernelSpec, pool: &[&Matrix<T>]) -> Result<Self> {
        spec.validate()?;
        Ok(match spec {
            KernelSpec::Linear => Self::Linear,
            KernelSpec::Rbf(bw) => {
                let h = match bw {
                    Bandwidth::Fixed(h) => T::lit(h),
                    Bandwidth::MedianHeuristic => median_heuristic(pool),
                };
                Self::Rbf { inv_two_h2: T::one() / (T::lit(2.0) * h * h) }
            }
        })
    }

    fn eval(&self, a: &[T], b: &[T]) -> T {
        match *self {
            Self::Rbf { inv_two_h2 } => (-squared_distance(a, b) * inv_two_h2).exp(),
            Self::Linear => a.iter().zip(b).map(|(&p, &q)| p * q).sum(),
        }
    }

    fn mean_cross(&self, a: &Matrix<T>, b: &Matrix<T>) -> T {
        let total: T = a.iter_rows().map(|r| b.iter_rows().map(|s| self.eval(r, s)).sum::<T>()).sum();
        total / (T::from_count(a.rows()) * T::from_count(b.rows()))
    }

    fn gram(&self, a: &Matrix<T>) -> Matrix<T> {
        let n = a.rows();
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.eval(a.row(i), a.row(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

/// Biased (V-statistic) estimate of the squared maximum mean discrepancy,
/// clamped at zero.
pub fn mmd_squared<T: Scalar>(x: &Matrix<T>, y: &Matrix<T>, kernel: KernelSpec) -> Result<T> {
    check_same_shape(x, y)?;
    let k = ResolvedKernel::resolve(kernel, &[x, y])?;
    let value = k.mean_cross(x, x) + k.mean_cross(y, y) - T::lit(2.0) * k.mean_cross(x, y);
    Ok(value.max(T::zero()))
}

/// `tr(K_x H K_y H) / (n - 1)^2` with `H` the centring matrix, clamped at zero.
pub fn hsic<T: Scalar>(x: &Matrix<T>, y: &Matrix<T>, kernel: KernelSpec) -> Result<T> {
    check_same_shape(x, y)?;
    let n = x.rows();
    if n < 2 {
        return Err(QqeError::TooFewPoints { n, required: 2 });
    }
    let k = ResolvedKernel::resolve(kernel, &[x, y])?;
    let kx = k.gram(x);
    let ky = k.gram(y);
    let nf = T::from_count(n);
    let row_means: Vec<T> = kx.iter_rows().map(|r| r.iter().copied().sum::<T>() / nf).collect();
    let grand = row_means.iter().copied().sum::<T>() / nf;
    // K_x is symmetric, so its column means equal its row means
    let mut total = T::zero();
    for i in 0..n {
        for j in 0..n {
            total += (kx[(i, j)] - row_means[i] - row_means[j] + grand) * ky[(i, j)];
        }
    }
    let denom = T::from_count(n - 1);
    Ok((total / (denom * denom)).max(T::zero()))
}

/// Percentage of points with a same-label point among their `k` nearest
/// neighbours (the point itself excluded, ties broken by index), per `k`.
pub fn recall_at_k<T: Scalar, L: PartialEq>(points: &Matrix<T>, labels: &[L], ks: &[usize]) -> Result<Vec<f64>> {
    let n = points.rows();
    if labels.len() != n {
        return Err(QqeError::LabelLengthMismatch { points: n, labels: labels.len() });
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k >= n) {
        return Err(QqeError::KTooLarge { k, n });
    }
    let k_max = ks.iter().copied().max().unwrap_or(0);
    if k_max == 0 {
        return Ok(Vec::new());
    }
    // first_hit[i] = rank (1-based) of the nearest same-label neighbour, if within k_max
    let mut hits = vec![0usize; k_max + 1];
    let mut candidates: Vec<(T, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        candidates.clear();
        candidates.extend((0..n).filter(|&j| j != i).map(|j| (squared_distance(points.row(i), points.row(j)), j)));
        let by_distance = |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1));
        if k_max < candidates.len() {
            candidates.select_nth_unstable_by(k_max - 1, by_distance);
        }
        candidates[..k_max].sort_unstable_by(by_distance);
        if let Some(rank) = candidates[..k_max].iter().position(|&(_, j)| labels[j] == labels[i]) {
            hits[rank + 1] += 1;
        }
    }
    Ok(ks
        .iter()
        .map(|&k| 100.0 * hits[..=k].iter().sum::<usize>() as f64 / n as f64)
        .collect())
}

/// Least-squares line of one dimension of the qq scatter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineDiagnostic {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Regresses each column of `x` on the matched reference column and reports
/// slope, intercept and coefficient of determination.
pub fn qq_line_diagnostics<T: Scalar>(x: &Matrix<T>, y_sigma: &Matrix<T>) -> Result<Vec<LineDiagnostic>> {
    check_same_shape(x, y_sigma)?;
    (0..x.cols())
        .map(|l| {
            let fit = simple_regression(&x.column(l), &y_sigma.column(l)).ok_or(QqeError::DegenerateReference { dim: l })?;
            let r_squared = if fit.ss_tot > T::zero() {
                T::one() - fit.ss_res / fit.ss_tot
            } else if fit.ss_res == T::zero() {
                T::one()
            } else {
                T::zero()
            };
            Ok(LineDiagnostic {
                slope: fit.slope.to_f64_lossy(),
                intercept: fit.intercept.to_f64_lossy(),
                r_squared: r_squared.to_f64_lossy(),
            })
        })
        .collect()
}

/// Before/after comparison of a run against its matched reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub kl_before: f64,
    pub kl_after: f64,
    pub mmd2_before: f64,
    pub mmd2_after: f64,
    pub hsic_before: f64,
    pub hsic_after: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub recall_before: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub recall_at: BTreeMap<usize, f64>,
}

/// Compares `before` and `after` with the matched reference `y_sigma`; with
/// labels, also reports Recall@k of both point sets.
pub fn metrics_report<T: Scalar, L: PartialEq>(
    before: &Matrix<T>,
    after: &Matrix<T>,
    y_sigma: &Matrix<T>,
    kernel: KernelSpec,
    labels: Option<(&[L], &[usize])>,
) -> Result<MetricsReport> {
    let f = |v: T| v.to_f64_lossy();
    let mut report = MetricsReport {
        kl_before: f(kl_divergence(before, y_sigma)?),
        kl_after: f(kl_divergence(after, y_sigma)?),
        mmd2_before: f(mmd_squared(before, y_sigma, kernel)?),
        mmd2_after: f(mmd_squared(after, y_sigma, kernel)?),
        hsic_before: f(hsic(before, y_sigma, kernel)?),
        hsic_after: f(hsic(after, y_sigma, kernel)?),
        recall_before: BTreeMap::new(),
        recall_at: BTreeMap::new(),
    };
    if let Some((labels, ks)) = labels {
        report.recall_before = ks.iter().copied().zip(recall_at_k(before, labels, ks)?).collect();
        report.recall_at = ks.iter().copied().zip(recall_at_k(after, labels, ks)?).collect();
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn kde_two_point_closed_form() {
        let s = Matrix::<f64>::from_rows(&[[-1.0], [1.0]]).unwrap();
        // sample std sqrt(2), h = sqrt(2) * 2^(-1/5)
        let h = 2f64.sqrt() * 2f64.powf(-0.2);
        let expected = (-0.5 / (h * h)).exp() / (h * (2.0 * PI).sqrt());
        let got = kde_density(&s, &[0.0]).unwrap();
        assert!((got - expected).abs() < 1e-15);
    }

    #[test]
    fn kde_mode_dominates_tails() {
        let x = gaussian(200, 1, 1);
        let kde = Kde::fit(&x).unwrap();
        let centre = kde.density(&[0.0]);
        assert!(centre > kde.density(&[10.0]));
        assert!(kde.density(&[10.0]) > 0.0);
    }

    #[test]
    fn kl_identities_and_ordering() {
        let x = gaussian(300, 2, 2);
        assert_eq!(kl_divergence(&x, &x).unwrap(), 0.0);
        assert_eq!(kl_divergence_with(&x, &x, KlPairing::SharedPoints).unwrap(), 0.0);
        let near = x.map(|v| v + 0.1);
        let far = x.map(|v| v + 5.0);
        let kl_near = kl_divergence_with(&x, &near, KlPairing::SharedPoints).unwrap();
        let kl_far = kl_divergence_with(&x, &far, KlPairing::SharedPoints).unwrap();
        assert!(kl_far > kl_near, "{kl_far} vs {kl_near}");
    }

    #[test]
    fn mmd_linear_hand_example() {
        let x = Matrix::<f64>::from_rows(&[[0.0], [2.0]]).unwrap();
        let y = Matrix::from_rows(&[[0.0], [0.0]]).unwrap();
        assert!((mmd_squared(&x, &y, KernelSpec::Linear).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mmd_identities() {
        let x = gaussian(100, 2, 3);
        let y = gaussian(100, 2, 4);
        let k = KernelSpec::default();
        assert!(mmd_squared(&x, &x, k).unwrap() <= 1e-12);
        let (a, b) = (mmd_squared(&x, &y, k).unwrap(), mmd_squared(&y, &x, k).unwrap());
        assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn mmd_far_clouds_approach_point_mass_limit() {
        let x = gaussian(400, 1, 5).map(|v| 0.01 * v);
        let y = gaussian(400, 1, 6).map(|v| 0.01 * v + 3.0);
        let h = 2.0;
        let limit = 2.0 * (1.0 - (-9.0f64 / (2.0 * h * h)).exp());
        let got = mmd_squared(&x, &y, KernelSpec::Rbf(Bandwidth::Fixed(h))).unwrap();
        assert!((got - limit).abs() <= 0.05 * limit);
    }

    #[test]
    fn hsic_constant_and_symmetry() {
        let x = gaussian(60, 2, 7);
        let constant = Matrix::from_fn(60, 2, |_, _| 3.0);
        assert_eq!(hsic(&constant, &x, KernelSpec::default()).unwrap(), 0.0);
        let y = gaussian(60, 2, 8);
        let (a, b) = (hsic(&x, &y, KernelSpec::default()).unwrap(), hsic(&y, &x, KernelSpec::default()).unwrap());
        assert!((a - b).abs() <= 1e-12);
        assert!(hsic(&x, &x, KernelSpec::default()).unwrap() > a);
    }

    #[test]
    fn median_heuristic_ignores_row_order() {
        let x = gaussian(50, 2, 9);
        let y = gaussian(50, 2, 10);
        let perm: Vec<usize> = (0..50).rev().collect();
        assert_eq!(median_heuristic(&[&x, &y]), median_heuristic(&[&x.select_rows(&perm), &y]));
        let big = gaussian(1500, 2, 11);
        let rev: Vec<usize> = (0..1500).rev().collect();
        assert_eq!(median_heuristic(&[&big, &big]), median_heuristic(&[&big.select_rows(&rev), &big]));
    }

    #[test]
    fn recall_examples() {
        let sep = Matrix::from_fn(20, 2, |i, j| if j == 0 { (i % 10) as f64 * 0.1 + 100.0 * (i / 10) as f64 } else { 0.0 });
        let labels: Vec<usize> = (0..20).map(|i| i / 10).collect();
        assert_eq!(recall_at_k(&sep, &labels, &[1, 4]).unwrap(), vec![100.0, 100.0]);
        assert_eq!(recall_at_k(&sep, &[0u8; 20], &[1, 19]).unwrap(), vec![100.0, 100.0]);
        let line = Matrix::<f64>::from_fn(10, 1, |i, _| i as f64);
        let alternating: Vec<usize> = (0..10).map(|i| i % 2).collect();
        assert_eq!(recall_at_k(&line, &alternating, &[1]).unwrap(), vec![0.0]);
        // only the two endpoints reach a same-label point within two neighbours
        assert_eq!(recall_at_k(&line, &alternating, &[2]).unwrap(), vec![20.0]);
        assert_eq!(recall_at_k(&line, &alternating, &[3]).unwrap(), vec![100.0]);
        assert!(matches!(recall_at_k(&line, &alternating, &[10]), Err(QqeError::KTooLarge { .. })));
    }

    #[test]
    fn line_diagnostics_examples() {
        let y = gaussian(30, 2, 12);
        let same = qq_line_diagnostics(&y, &y).unwrap();
        assert!(same.iter().all(|l| (l.slope - 1.0).abs() < 1e-12 && l.intercept.abs() < 1e-12 && (l.r_squared - 1.0).abs() < 1e-12));
        let affine = qq_line_diagnostics(&y.map(|v| 2.0 * v + 3.0), &y).unwrap();
        assert!(affine.iter().all(|l| (l.slope - 2.0).abs() < 1e-12 && (l.intercept - 3.0).abs() < 1e-12));
        let flat = Matrix::from_fn(30, 1, |_, _| 1.0);
        assert!(matches!(
            qq_line_diagnostics(&Matrix::from_fn(30, 1, |i, _| i as f64), &flat),
            Err(QqeError::DegenerateReference { dim: 0 })
        ));
    }
}
