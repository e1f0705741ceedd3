//! The QQE optimiser: matching, neighbour graph, and diagonal quasi-Newton
//! descent towards the matched reference (exact mode) or towards the fitted
//! qq lines (shape mode).

mod graph;
mod lines;
mod objective;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use graph::build_knn_graph;
pub(crate) use lines::simple_regression;
pub use lines::{fit_qq_lines, LineFit};
pub use objective::{qqe_cost, qqe_gradient, qqe_hessian_diag, quasi_newton_step};

use crate::error::{QqeError, Result};
use crate::matching::fuzzy_match;
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::types::{Dataset, MatchResult, Mode, NeighborGraph, Snapshot, StopReason, TransformConfig, Trajectory};

/// Wall-clock seconds spent in each phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub matching_secs: f64,
    pub optimization_secs: f64,
}

impl Timings {
    fn absorb(&mut self, other: Timings) {
        self.matching_secs += other.matching_secs;
        self.optimization_secs += other.optimization_secs;
    }
}

#[derive(Debug, Clone)]
pub struct TransformOutput<T> {
    pub trajectory: Trajectory<T>,
    /// The last matching that was used (the initial one unless re-matching
    /// is enabled).
    pub matching: MatchResult<T>,
    pub graph: NeighborGraph<T>,
    /// Row `i` is the reference point matched to point `i`.
    pub matched_reference: Matrix<T>,
    /// Cost after every iteration, starting with the initial cost.
    pub cost_trace: Vec<T>,
    /// Line fit at the final points (shape mode only).
    pub line_fit: Option<LineFit<T>>,
    pub rematches: usize,
    pub timings: Timings,
}

fn targets_for<T: Scalar>(mode: Mode, x: &Matrix<T>, y_sigma: &Matrix<T>) -> Result<(Matrix<T>, Option<LineFit<T>>)> {
    match mode {
        Mode::Exact => Ok((y_sigma.clone(), None)),
        Mode::Shape => {
            let fit = fit_qq_lines(x, y_sigma)?;
            Ok((fit.mu.clone(), Some(fit)))
        }
    }
}

fn check_reference<T: Scalar>(x0: &Matrix<T>, reference: &Matrix<T>) -> Result<()> {
    if reference.cols() != x0.cols() {
        return Err(QqeError::DimensionMismatch { expected: x0.cols(), actual: reference.cols() });
    }
    if reference.rows() != x0.rows() {
        return Err(QqeError::RowCountMismatch { expected: x0.rows(), actual: reference.rows() });
    }
    if let Some((row, col)) = x0.first_non_finite() {
        return Err(QqeError::NonFinite { row, col });
    }
    if let Some((row, col)) = reference.first_non_finite() {
        return Err(QqeError::NonFinite { row, col });
    }
    Ok(())
}

/// Transforms `x0` so its distribution follows `reference`, which must
/// already have the same shape as `x0`.
///
/// A run that blows up is not an error: it ends with
/// [`StopReason::Diverged`] and the last state reached.
pub fn transform<T: Scalar>(x0: &Matrix<T>, reference: &Matrix<T>, config: &TransformConfig) -> Result<TransformOutput<T>> {
    check_reference(x0, reference)?;
    config.validate(x0.rows())?;
    let eps = T::lit(config.epsilon_dist);
    let lambda = T::lit(config.lambda);
    let eta = T::lit(config.eta);
    let mut timings = Timings::default();

    let started = Instant::now();
    let mut matching = fuzzy_match(x0, reference, config.match_max_rounds)?;
    let mut y_sigma = reference.select_rows(matching.sigma.as_slice());
    timings.matching_secs += started.elapsed().as_secs_f64();

    let started = Instant::now();
    let graph = build_knn_graph(x0, config.k, eps)?;
    let mut x = x0.clone();
    let (mut targets, mut line_fit) = targets_for(config.mode, &x, &y_sigma)?;
    let initial = qqe_cost(&x, &targets, &graph, lambda);
    let blowup = T::lit(1e6) * initial.max(eps);
    let mut snapshots = vec![Snapshot { iteration: 0, points: x.clone(), cost: initial }];
    let mut cost_trace = vec![initial];
    let mut previous = initial;
    let mut rematches = 0;
    let mut stop = StopReason::MaxIters;

    for t in 1..=config.max_iters {
        let grad = qqe_gradient(&x, &targets, &graph, lambda, eps, config.gradient);
        let hess = qqe_hessian_diag(&x, &targets, &graph, lambda, eps, config.gradient);
        x = quasi_newton_step(&x, &grad, &hess, eta, eps);

        if config.rematch_every.is_some_and(|every| t % every == 0) && x.first_non_finite().is_none() {
            let started = Instant::now();
            matching = fuzzy_match(&x, reference, config.match_max_rounds)?;
            y_sigma = reference.select_rows(matching.sigma.as_slice());
            rematches += 1;
            timings.matching_secs += started.elapsed().as_secs_f64();
        }

        let cost = if x.first_non_finite().is_some() {
            T::nan()
        } else {
            (targets, line_fit) = targets_for(config.mode, &x, &y_sigma)?;
            qqe_cost(&x, &targets, &graph, lambda)
        };
        cost_trace.push(cost);

        let finished = if !cost.is_finite() || cost > blowup {
            log::warn!("cost {cost} at iteration {t} exceeds the divergence bound");
            stop = StopReason::Diverged;
            true
        } else if (cost - previous).abs() / previous.max(eps) < T::lit(config.rel_cost_tol) {
            stop = StopReason::CostConverged;
            true
        } else {
            t == config.max_iters
        };
        if finished || t % config.snapshot_every == 0 {
            snapshots.push(Snapshot { iteration: t, points: x.clone(), cost });
        }
        if finished {
            break;
        }
        previous = cost;
    }
    timings.optimization_secs += started.elapsed().as_secs_f64();
    log::info!("transform stopped after {} iterations: {stop:?}", cost_trace.len() - 1);

    Ok(TransformOutput {
        trajectory: Trajectory::new(snapshots, stop),
        matching,
        graph,
        matched_reference: y_sigma,
        cost_trace,
        line_fit,
        rematches,
        timings,
    })
}

/// Per-class runs of a supervised transform and their merged trajectory.
#[derive(Debug, Clone)]
pub struct SupervisedOutput<T> {
    /// Snapshots over all points in dataset order.
    pub trajectory: Trajectory<T>,
    /// Row `i` is the reference point matched to point `i`.
    pub matched_reference: Matrix<T>,
    /// Row indices of every class, in dense class order.
    pub class_indices: Vec<Vec<usize>>,
    pub classes: Vec<TransformOutput<T>>,
    pub timings: Timings,
}

/// Transforms every class of `data` towards its own reference sample
/// (`references[c]` for dense class id `c`, with as many rows as the class).
///
/// Classes run concurrently and never see each other's points. An unlabelled
/// dataset is treated as one class.
pub fn transform_supervised<T: Scalar>(
    data: &Dataset<T>,
    references: &[Matrix<T>],
    config: &TransformConfig,
) -> Result<SupervisedOutput<T>> {
    let class_indices = data.class_indices();
    if references.len() < class_indices.len() {
        return Err(QqeError::MissingClassReference { class: references.len() });
    }
    for (c, rows) in class_indices.iter().enumerate() {
        if rows.len() < config.k + 1 {
            return Err(QqeError::ClassTooSmall {
                class: data.original_label(c).unwrap_or(c as i64),
                size: rows.len(),
                required: config.k + 1,
            });
        }
    }

    let parts: Vec<Matrix<T>> = class_indices.iter().map(|rows| data.points().select_rows(rows)).collect();
    let results: Vec<Result<TransformOutput<T>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = parts
            .iter()
            .zip(references)
            .map(|(x0, reference)| scope.spawn(move || transform(x0, reference, config)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("class worker panicked")).collect()
    });
    let classes = results.into_iter().collect::<Result<Vec<_>>>()?;

    let (n, d) = (data.n(), data.dim());
    let mut matched_reference = Matrix::zeros(n, d);
    let mut timings = Timings::default();
    for (rows, out) in class_indices.iter().zip(&classes) {
        scatter_rows(&mut matched_reference, rows, &out.matched_reference);
        timings.absorb(out.timings);
    }
    let trajectory = merge_trajectories(n, d, &class_indices, &classes);
    Ok(SupervisedOutput { trajectory, matched_reference, class_indices, classes, timings })
}

fn scatter_rows<T: Scalar>(dst: &mut Matrix<T>, rows: &[usize], src: &Matrix<T>) {
    for (k, &r) in rows.iter().enumerate() {
        dst.row_mut(r).copy_from_slice(src.row(k));
    }
}

/// Keeps the iterations at which every class that is still running has a
/// snapshot; finished classes contribute their final state.
fn merge_trajectories<T: Scalar>(
    n: usize,
    d: usize,
    class_indices: &[Vec<usize>],
    classes: &[TransformOutput<T>],
) -> Trajectory<T> {
    let mut iterations: Vec<usize> = classes
        .iter()
        .flat_map(|c| c.trajectory.snapshots().iter().map(|s| s.iteration))
        .collect();
    iterations.sort_unstable();
    iterations.dedup();

    let mut snapshots = Vec::new();
    'outer: for &it in &iterations {
        let mut points = Matrix::zeros(n, d);
        let mut cost = T::zero();
        for (rows, class) in class_indices.iter().zip(classes) {
            let traj = &class.trajectory;
            let snap = if it >= traj.iterations() {
                traj.final_snapshot()
            } else {
                match traj.snapshots().iter().find(|s| s.iteration == it) {
                    Some(s) => s,
                    None => continue 'outer,
                }
            };
            scatter_rows(&mut points, rows, &snap.points);
            cost += snap.cost;
        }
        snapshots.push(Snapshot { iteration: it, points, cost });
    }

    let reasons: Vec<StopReason> = classes.iter().map(|c| c.trajectory.stop_reason()).collect();
    let stop = if reasons.contains(&StopReason::Diverged) {
        StopReason::Diverged
    } else if reasons.contains(&StopReason::MaxIters) {
        StopReason::MaxIters
    } else {
        StopReason::CostConverged
    };
    Trajectory::new(snapshots, stop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::validate_dataset;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize, d: usize, lo: f64, hi: f64, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, d, |_, _| rng.gen_range(lo..hi))
    }

    fn quick(mode: Mode) -> TransformConfig {
        TransformConfig { mode, k: 5, max_iters: 60, snapshot_every: 20, ..TransformConfig::default() }
    }

    #[test]
    fn lambda_zero_is_geometric_relaxation() {
        let x0 = uniform(30, 2, -1.0, 1.0, 1);
        let y = uniform(30, 2, 2.0, 3.0, 2);
        let config = TransformConfig {
            lambda: 0.0,
            eta: 0.05,
            max_iters: 10,
            snapshot_every: 1,
            rel_cost_tol: 1e-300,
            ..quick(Mode::Exact)
        };
        let out = transform(&x0, &y, &config).unwrap();
        let target = &out.matched_reference;
        assert_eq!(out.trajectory.snapshots().len(), 11);
        for snap in out.trajectory.snapshots() {
            let factor = (1.0f64 - 0.05).powi(snap.iteration as i32);
            for e in 0..60 {
                let expected = target.as_slice()[e] + factor * (x0.as_slice()[e] - target.as_slice()[e]);
                assert!((snap.points.as_slice()[e] - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn self_transform_stays_put() {
        let x0 = uniform(40, 2, 0.0, 1.0, 3);
        let out = transform(&x0, &x0, &quick(Mode::Exact)).unwrap();
        assert_eq!(out.trajectory.stop_reason(), StopReason::CostConverged);
        assert!(out.trajectory.final_cost() <= 1e-8);
        assert!(out.trajectory.final_points().max_abs_diff(&x0) <= 1e-4);
    }

    #[test]
    fn snapshots_follow_cadence_and_end_with_final_state() {
        let x0 = uniform(30, 2, 0.0, 1.0, 4);
        let y = uniform(30, 2, 0.0, 1.0, 5).map(|v| v * v);
        let out = transform(&x0, &y, &TransformConfig { rel_cost_tol: 1e-300, ..quick(Mode::Exact) }).unwrap();
        let its: Vec<usize> = out.trajectory.snapshots().iter().map(|s| s.iteration).collect();
        assert_eq!(its, vec![0, 20, 40, 60]);
        assert_eq!(out.trajectory.stop_reason(), StopReason::MaxIters);
        assert_eq!(out.cost_trace.len(), 61);
        assert!(out.trajectory.final_cost() < out.trajectory.initial_cost());
    }

    #[test]
    fn shape_mode_reports_line_fit() {
        let x0 = uniform(40, 2, 0.0, 1.0, 6).map(|v| v * v * v);
        let y = uniform(40, 2, 5.0, 6.0, 7);
        let out = transform(&x0, &y, &quick(Mode::Shape)).unwrap();
        assert!(out.line_fit.is_some());
        assert!(out.trajectory.final_cost() < out.trajectory.initial_cost());
    }

    #[test]
    fn row_permutation_is_equivariant() {
        let x0 = uniform(25, 2, 0.0, 1.0, 8);
        let y = uniform(25, 2, 1.0, 2.0, 9);
        let perm: Vec<usize> = (0..25).map(|i| (i * 7) % 25).collect();
        let config = quick(Mode::Exact);
        let a = transform(&x0, &y, &config).unwrap();
        let b = transform(&x0.select_rows(&perm), &y, &config).unwrap();
        let expected = a.trajectory.final_points().select_rows(&perm);
        assert!(b.trajectory.final_points().max_abs_diff(&expected) < 1e-9);
    }

    #[test]
    fn shape_mismatch_and_bad_k_are_errors() {
        let x0 = uniform(10, 2, 0.0, 1.0, 1);
        assert!(matches!(
            transform(&x0, &uniform(9, 2, 0.0, 1.0, 1), &quick(Mode::Exact)),
            Err(QqeError::RowCountMismatch { .. })
        ));
        let config = TransformConfig { k: 10, ..quick(Mode::Exact) };
        assert!(matches!(transform(&x0, &x0, &config), Err(QqeError::KTooLarge { .. })));
    }

    #[test]
    fn huge_step_diverges_without_error() {
        let x0 = uniform(20, 1, 0.0, 1.0, 10);
        let y = uniform(20, 1, 0.0, 1.0, 11);
        let config = TransformConfig { eta: 1e4, lambda: 0.0, ..quick(Mode::Exact) };
        let out = transform(&x0, &y, &config).unwrap();
        assert_eq!(out.trajectory.stop_reason(), StopReason::Diverged);
    }

    #[test]
    fn single_class_supervision_equals_plain_run() {
        let x0 = uniform(30, 2, 0.0, 1.0, 12);
        let y = uniform(30, 2, 3.0, 4.0, 13);
        let config = quick(Mode::Exact);
        let plain = transform(&x0, &y, &config).unwrap();
        let data = validate_dataset(x0, Some(vec![7; 30])).unwrap();
        let sup = transform_supervised(&data, &[y], &config).unwrap();
        assert_eq!(sup.trajectory, plain.trajectory);
    }

    #[test]
    fn supervised_merges_classes_in_dataset_order() {
        let x0 = uniform(40, 2, 0.0, 1.0, 14);
        let labels: Vec<i64> = (0..40).map(|i| if i % 2 == 0 { -1 } else { 4 }).collect();
        let data = validate_dataset(x0.clone(), Some(labels)).unwrap();
        let refs = vec![uniform(20, 2, 5.0, 6.0, 15), uniform(20, 2, -6.0, -5.0, 16)];
        let config = TransformConfig { lambda: 0.0, eta: 0.5, ..quick(Mode::Exact) };
        let out = transform_supervised(&data, &refs, &config).unwrap();
        let fin = out.trajectory.final_points();
        for i in 0..40 {
            if i % 2 == 0 {
                assert!(fin[(i, 0)] > 4.0);
            } else {
                assert!(fin[(i, 0)] < -4.0);
            }
        }
        let first = &out.trajectory.snapshots()[0];
        assert_eq!(first.points, x0);
        let total: f64 = out.classes.iter().map(|c| c.trajectory.initial_cost()).sum();
        assert_eq!(first.cost, total);
    }

    #[test]
    fn supervised_errors() {
        let x0 = uniform(12, 2, 0.0, 1.0, 17);
        let labels: Vec<i64> = (0..12).map(|i| i64::from(i >= 9)).collect();
        let data = validate_dataset(x0, Some(labels)).unwrap();
        let refs = vec![uniform(9, 2, 0.0, 1.0, 1), uniform(3, 2, 0.0, 1.0, 1)];
        let config = TransformConfig { k: 3, ..quick(Mode::Exact) };
        assert!(matches!(
            transform_supervised(&data, &refs, &config),
            Err(QqeError::ClassTooSmall { class: 1, size: 3, required: 4 })
        ));
        let config = TransformConfig { k: 2, ..quick(Mode::Exact) };
        assert!(matches!(
            transform_supervised(&data, &refs[..1], &config),
            Err(QqeError::MissingClassReference { class: 1 })
        ));
    }
}
