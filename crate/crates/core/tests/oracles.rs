//! Cross-checks against independent linear algebra from nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};
use qqe::matching::fit_affine;
use qqe::metrics::{hsic, median_heuristic, Bandwidth, KernelSpec};
use qqe::transform::fit_qq_lines;
use qqe::{Matrix, Pca, Permutation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(n: usize, d: usize, seed: u64) -> Matrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
}

fn to_na(m: &Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

#[test]
fn affine_fit_agrees_with_qr_least_squares() {
    let y = gaussian(60, 3, 1);
    let noise = gaussian(60, 3, 2);
    let a = Matrix::from_rows(&[[1.5, -0.2, 0.3], [0.4, 0.9, -1.1], [0.0, 0.7, 2.0]]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut perm: Vec<usize> = (0..60).collect();
    for i in (1..60).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    let sigma = Permutation::try_from(perm).unwrap();
    let x = Matrix::from_fn(60, 3, |i, r| {
        let yr = y.row(sigma[i]);
        (0..3).map(|c| a[(r, c)] * yr[c]).sum::<f64>() + [1.0, -2.0, 0.5][r] + 0.1 * noise[(i, r)]
    });
    let fit = fit_affine(&x, &y, &sigma).unwrap();

    let design = DMatrix::from_fn(60, 4, |i, c| if c < 3 { y[(sigma[i], c)] } else { 1.0 });
    let qr = design.qr();
    let beta = qr.r().try_inverse().unwrap() * qr.q().transpose() * to_na(&x);
    for r in 0..3 {
        for c in 0..3 {
            assert!((fit.a[(r, c)] - beta[(c, r)]).abs() < 1e-8);
        }
        assert!((fit.b[r] - beta[(3, r)]).abs() < 1e-8);
    }
}

#[test]
fn line_fits_agree_with_independent_solve() {
    let y = gaussian(100, 2, 4);
    let noise = gaussian(100, 2, 5);
    let x = Matrix::from_fn(100, 2, |i, l| [0.7, -1.3][l] * y[(i, l)] + [2.0, 0.1][l] + 0.2 * noise[(i, l)]);
    let fit = fit_qq_lines(&x, &y).unwrap();
    for l in 0..2 {
        let gamma = DMatrix::from_fn(100, 2, |i, c| if c == 0 { 1.0 } else { y[(i, l)] });
        let xl = DMatrix::from_fn(100, 1, |i, _| x[(i, l)]);
        let beta = (gamma.transpose() * &gamma).try_inverse().unwrap() * gamma.transpose() * xl;
        assert!((fit.coefficients[l].0 - beta[0]).abs() < 1e-8);
        assert!((fit.coefficients[l].1 - beta[1]).abs() < 1e-8);
        for i in 0..100 {
            assert!((fit.mu[(i, l)] - (beta[0] + beta[1] * y[(i, l)])).abs() < 1e-8);
        }
    }
}

fn rbf_gram(m: &Matrix<f64>, h: f64) -> DMatrix<f64> {
    let n = m.rows();
    DMatrix::from_fn(n, n, |i, j| {
        let d2: f64 = m.row(i).iter().zip(m.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
        (-d2 / (2.0 * h * h)).exp()
    })
}

#[test]
fn hsic_matches_explicit_trace() {
    let x = gaussian(50, 2, 6);
    for (y, label) in [(x.clone(), "self"), (gaussian(50, 2, 7), "independent")] {
        let h = median_heuristic(&[&x, &y]);
        let centring = DMatrix::<f64>::identity(50, 50) - DMatrix::from_element(50, 50, 1.0 / 50.0);
        let trace = (rbf_gram(&x, h) * &centring * rbf_gram(&y, h) * &centring).trace() / 49.0f64.powi(2);
        let ours = hsic(&x, &y, KernelSpec::Rbf(Bandwidth::MedianHeuristic)).unwrap();
        assert!((ours - trace).abs() < 1e-10, "{label}: {ours} vs {trace}");
    }
}

#[test]
fn hsic_of_dependent_pair_exceeds_independent_pair() {
    let x = gaussian(500, 2, 8);
    let y = gaussian(500, 2, 9);
    let k = KernelSpec::default();
    assert!(hsic(&x, &y, k).unwrap() < hsic(&x, &x, k).unwrap());
}

#[test]
fn pca_variance_matches_symmetric_eigen() {
    let z = gaussian(100, 5, 10);
    let x = Matrix::from_fn(100, 5, |i, j| z[(i, j)] * (j + 1) as f64 + z[(i, 0)] * 0.5);
    let pca = Pca::fit(&x, 2).unwrap();

    let centred = {
        let m = to_na(&x);
        let means = m.row_mean();
        DMatrix::from_fn(100, 5, |i, j| m[(i, j)] - means[j])
    };
    let cov = centred.transpose() * &centred / 99.0;
    let eig = SymmetricEigen::new(cov);
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let e = &pca.embedding;
    let projected_var: f64 = (0..2)
        .map(|c| {
            let col = e.column(c);
            let mean = col.iter().sum::<f64>() / 100.0;
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 99.0
        })
        .sum();
    assert!((projected_var - (values[0] + values[1])).abs() < 1e-8);
    for (got, want) in pca.variances.iter().zip(&values[..2]) {
        assert!((got - want).abs() < 1e-8);
    }
}

#[test]
fn pca_is_translation_invariant() {
    let x = gaussian(80, 4, 11);
    let shifted = x.map(|v| v + 123.25);
    let a = qqe::pca_init(&x, 2).unwrap();
    let b = qqe::pca_init(&shifted, 2).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-8);
}
