//! Low-dimensional starting points for manifold embedding.

use std::path::PathBuf;

use crate::error::{QqeError, Result};
use crate::matrix::{symmetric_eigen, Matrix};
use crate::scalar::Scalar;

pub use crate::io::load_external_embedding;

/// How the initial embedding is obtained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbeddingInit {
    Pca(usize),
    /// Coordinates computed elsewhere, one row per data point.
    External(PathBuf),
}

impl std::str::FromStr for EmbeddingInit {
    type Err = QqeError;

    /// `pca:P` or `external:PATH`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("pca", p)) => p
                .trim()
                .parse()
                .map(Self::Pca)
                .map_err(|_| QqeError::Parse(format!("`{p}` is not a target dimension"))),
            Some(("external", path)) if !path.is_empty() => Ok(Self::External(PathBuf::from(path))),
            _ => Err(QqeError::Parse(format!("expected pca:P or external:PATH, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca<T> {
    /// Centred data projected on the components, `n x p`.
    pub embedding: Matrix<T>,
    /// Unit principal directions as columns, `d x p`.
    pub components: Matrix<T>,
    /// Covariance eigenvalues of the kept components, descending.
    pub variances: Vec<T>,
    /// Set when fewer than `p` components carry variance; the remaining
    /// columns of `embedding` are zero.
    pub rank_deficient: bool,
}

impl<T: Scalar> Pca<T> {
    /// Principal components of the sample covariance (divisor `n - 1`).
    /// Each direction is signed so that its largest-magnitude loading is
    /// positive.
    pub fn fit(x: &Matrix<T>, p: usize) -> Result<Self> {
        let (n, d) = x.shape();
        let max = d.min(n.saturating_sub(1));
        if p == 0 || p > max {
            return Err(QqeError::InvalidTargetDim { p, max });
        }
        if let Some((row, col)) = x.first_non_finite() {
            return Err(QqeError::NonFinite { row, col });
        }
        let means = x.column_means();
        let centred = Matrix::from_fn(n, d, |i, j| x[(i, j)] - means[j]);
        let denom = T::from_count(n - 1);
        let mut cov = Matrix::zeros(d, d);
        for row in centred.iter_rows() {
            for a in 0..d {
                for b in a..d {
                    cov[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = cov[(a, b)] / denom;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        let (values, vectors) = symmetric_eigen(&cov);
        let top = values.first().copied().unwrap_or(T::zero()).max(T::zero());
        let tol = T::epsilon() * T::from_count(d.max(n)) * top;

        let mut components = Matrix::zeros(d, p);
        let mut variances = Vec::with_capacity(p);
        let mut rank_deficient = false;
        for c in 0..p {
            if values[c] <= tol {
                rank_deficient = true;
                variances.push(T::zero());
                continue;
            }
            let column = vectors.column(c);
            let pivot = column
                .iter()
                .enumerate()
                .fold((0, T::zero()), |best, (i, &v)| if v.abs() > best.1.abs() { (i, v) } else { best });
            let sign = if pivot.1 < T::zero() { -T::one() } else { T::one() };
            for (r, &v) in column.iter().enumerate() {
                components[(r, c)] = sign * v;
            }
            variances.push(values[c]);
        }
        if rank_deficient {
            log::warn!("data has fewer than {p} directions with variance; padding with zero columns");
        }
        let embedding = centred.matmul(&components)?;
        Ok(Self { embedding, components, variances, rank_deficient })
    }
}

/// PCA projection of `x` onto its top `p` principal directions.
pub fn pca_init<T: Scalar>(x: &Matrix<T>, p: usize) -> Result<Matrix<T>> {
    Ok(Pca::fit(x, p)?.embedding)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::distance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
    }

    fn pairwise(m: &Matrix<f64>) -> Vec<f64> {
        let n = m.rows();
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| distance(m.row(i), m.row(j))).collect()
    }

    #[test]
    fn parses_init_spec() {
        assert_eq!("pca:2".parse::<EmbeddingInit>().unwrap(), EmbeddingInit::Pca(2));
        assert_eq!(
            "external:emb.csv".parse::<EmbeddingInit>().unwrap(),
            EmbeddingInit::External("emb.csv".into())
        );
        assert!("tsne:2".parse::<EmbeddingInit>().is_err());
        assert!("pca:x".parse::<EmbeddingInit>().is_err());
    }

    #[test]
    fn line_data_keeps_distances_in_one_component() {
        let x = Matrix::from_fn(12, 2, |i, _| i as f64 * 0.5 - 1.0);
        let e = pca_init(&x, 1).unwrap();
        for (a, b) in pairwise(&x).iter().zip(pairwise(&e)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn full_dimension_is_a_rotation() {
        let x = gaussian(40, 3, 1);
        let e = pca_init(&x, 3).unwrap();
        for (a, b) in pairwise(&x).iter().zip(pairwise(&e)) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn components_are_orthonormal_and_signed() {
        let x = gaussian(100, 5, 2);
        let pca = Pca::fit(&x, 3).unwrap();
        let gram = pca.components.transpose().matmul(&pca.components).unwrap();
        assert!(gram.max_abs_diff(&Matrix::identity(3)) < 1e-10);
        for c in 0..3 {
            let col = pca.components.column(c);
            let big = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(big > 0.0);
        }
        assert!(pca.variances.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn invalid_target_dimension() {
        let x = gaussian(10, 3, 3);
        assert!(matches!(pca_init(&x, 0), Err(QqeError::InvalidTargetDim { p: 0, max: 3 })));
        assert!(matches!(pca_init(&x, 4), Err(QqeError::InvalidTargetDim { .. })));
        let few = gaussian(3, 5, 3);
        assert!(matches!(pca_init(&few, 3), Err(QqeError::InvalidTargetDim { p: 3, max: 2 })));
    }

    #[test]
    fn rank_deficient_data_pads_with_zeros() {
        let x = Matrix::from_fn(10, 3, |i, j| if j == 0 { i as f64 } else { 2.0 * i as f64 });
        let pca = Pca::fit(&x, 2).unwrap();
        assert!(pca.rank_deficient);
        assert!(pca.embedding.column(1).iter().all(|&v| v == 0.0));
    }
}
