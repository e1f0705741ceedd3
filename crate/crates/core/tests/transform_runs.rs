//! End-to-end behaviour of the optimiser on small synthetic problems.

use qqe::metrics::{qq_line_diagnostics, recall_at_k};
use qqe::reference::shape_sampler;
use qqe::{transform, transform_supervised, validate_dataset, Matrix, Mode, StopReason, TransformConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn family(spec: &str, n: usize, seed: u64) -> Matrix<f64> {
    shape_sampler(&spec.parse().unwrap(), n, 2, seed).unwrap()
}

fn min_r2(x: &Matrix<f64>, y_sigma: &Matrix<f64>) -> f64 {
    qq_line_diagnostics(x, y_sigma).unwrap().iter().map(|l| l.r_squared).fold(f64::INFINITY, f64::min)
}

fn mean_shift(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    a.column_means().iter().zip(b.column_means()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

#[test]
fn shape_mode_keeps_location() {
    let s = family("s-shape", 300, 1);
    let u = family("uniform:0.5,1.5", 300, 2);
    let config = TransformConfig { mode: Mode::Shape, ..TransformConfig::default() };
    let out = transform(&s, &u, &config).unwrap();
    let fin = out.trajectory.final_points();
    assert!(min_r2(fin, &out.matched_reference) >= 0.99);
    assert!(mean_shift(fin, &s) < 0.15);
    assert!(out.trajectory.final_cost() < out.trajectory.initial_cost());
}

#[test]
fn exact_mode_moves_to_reference_mean() {
    let s = family("s-shape", 300, 1);
    let u = family("uniform:0.5,1.5", 300, 2);
    let out = transform(&s, &u, &TransformConfig::default()).unwrap();
    for m in out.trajectory.final_points().column_means() {
        assert!((m - 1.0).abs() < 0.1, "mean {m}");
    }
}

#[test]
fn shape_fit_quality_ignores_affine_changes_of_reference() {
    let s = family("s-shape", 200, 3);
    let u = family("uniform:0.5,1.5", 200, 4);
    // matching starts from the identity map, which absorbs shifts and a
    // common positive scale of the reference but not per-axis scales
    let moved = Matrix::from_fn(200, 2, |i, l| 3.0 * u[(i, l)] + [-4.0, 10.0][l]);
    let config = TransformConfig { mode: Mode::Shape, max_iters: 300, ..TransformConfig::default() };
    let a = transform(&s, &u, &config).unwrap();
    let b = transform(&s, &moved, &config).unwrap();
    let ra = qq_line_diagnostics(a.trajectory.final_points(), &a.matched_reference).unwrap();
    let rb = qq_line_diagnostics(b.trajectory.final_points(), &b.matched_reference).unwrap();
    assert_eq!(a.matching.sigma, b.matching.sigma);
    for (p, q) in ra.iter().zip(&rb) {
        assert!((p.r_squared - q.r_squared).abs() <= 0.01);
    }
}

#[test]
fn supervised_classes_separate_and_recall_rises() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Matrix::from_fn(200, 2, |_, _| StandardNormal.sample(&mut rng));
    let labels: Vec<i64> = (0..200).map(|i| (i % 2) as i64).collect();
    let data = validate_dataset(x, Some(labels.clone())).unwrap();
    let refs: Vec<Matrix<f64>> = [(-10.0, 6), (10.0, 7)]
        .iter()
        .map(|&(m, seed)| shape_sampler(&format!("gaussian:{m},0,1,1").parse().unwrap(), 100, 2, seed).unwrap())
        .collect();
    let config = TransformConfig { snapshot_every: 25, ..TransformConfig::default() };
    let out = transform_supervised(&data, &refs, &config).unwrap();
    assert_ne!(out.trajectory.stop_reason(), StopReason::Diverged);

    let recalls: Vec<f64> = out
        .trajectory
        .snapshots()
        .iter()
        .map(|s| recall_at_k(&s.points, &labels, &[1]).unwrap()[0])
        .collect();
    assert!(recalls[0] < 90.0);
    assert_eq!(*recalls.last().unwrap(), 100.0);
    assert!(recalls.windows(2).all(|w| w[1] >= w[0]), "{recalls:?}");

    let fin = out.trajectory.final_points();
    for (c, rows) in out.class_indices.iter().enumerate() {
        let means = fin.select_rows(rows).column_means();
        let target = [-10.0, 10.0][c];
        assert!((means[0] - target).abs() < 0.5 && means[1].abs() < 0.5, "{means:?}");
    }
}

#[test]
fn three_classes_take_their_own_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let centres = [(-3.0, 0.0), (3.0, 0.0), (0.0, 4.0)];
    let x = Matrix::from_fn(240, 2, |i, l| {
        let z: f64 = StandardNormal.sample(&mut rng);
        let c = centres[i / 80];
        [c.0, c.1][l] + z
    });
    let labels: Vec<i64> = (0..240).map(|i| (i / 80) as i64).collect();
    let data = validate_dataset(x, Some(labels)).unwrap();
    let refs: Vec<Matrix<f64>> = (0..3).map(|c| family("uniform", 80, 20 + c)).collect();
    let config = TransformConfig { mode: Mode::Shape, supervised: true, ..TransformConfig::default() };
    let out = transform_supervised(&data, &refs, &config).unwrap();
    for (rows, class) in out.class_indices.iter().zip(&out.classes) {
        let fin = out.trajectory.final_points().select_rows(rows);
        assert!(min_r2(&fin, &class.matched_reference) >= 0.99);
    }
}
