//! Shared data model: datasets, configuration, matching results, neighbour
//! graphs and optimisation trajectories.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{QqeError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Observed sample with optional class labels.
///
/// Labels are remapped on ingest to dense ids `0..C` in ascending order of
/// the original integer values; [`Dataset::original_label`] maps back.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    points: Matrix<T>,
    labels: Option<Vec<usize>>,
    class_values: Vec<i64>,
}

/// Checks a raw point matrix (and optional labels) and builds a [`Dataset`].
pub fn validate_dataset<T: Scalar>(points: Matrix<T>, labels: Option<Vec<i64>>) -> Result<Dataset<T>> {
    if let Some((row, col)) = points.first_non_finite() {
        return Err(QqeError::NonFinite { row, col });
    }
    if points.rows() < 2 {
        return Err(QqeError::TooFewPoints { n: points.rows(), required: 2 });
    }
    if points.cols() < 1 {
        return Err(QqeError::ShapeMismatch("points must have at least one column".into()));
    }
    let Some(raw) = labels else {
        return Ok(Dataset { points, labels: None, class_values: Vec::new() });
    };
    if raw.len() != points.rows() {
        return Err(QqeError::LabelLengthMismatch { points: points.rows(), labels: raw.len() });
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &l in &raw {
        *counts.entry(l).or_default() += 1;
    }
    if let Some((&class, &size)) = counts.iter().find(|(_, &c)| c < 2) {
        return Err(QqeError::ClassTooSmall { class, size, required: 2 });
    }
    let class_values: Vec<i64> = counts.keys().copied().collect();
    let dense = raw
        .iter()
        .map(|l| class_values.binary_search(l).expect("label was counted"))
        .collect();
    Ok(Dataset { points, labels: Some(dense), class_values })
}

impl<T: Scalar> Dataset<T> {
    pub fn points(&self) -> &Matrix<T> {
        &self.points
    }

    pub fn n(&self) -> usize {
        self.points.rows()
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    /// Dense class ids, one per point.
    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn class_count(&self) -> usize {
        self.class_values.len()
    }

    pub fn original_label(&self, class: usize) -> Option<i64> {
        self.class_values.get(class).copied()
    }

    pub fn class_values(&self) -> &[i64] {
        &self.class_values
    }

    /// Row indices of each class, in ascending row order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        match &self.labels {
            None => vec![(0..self.n()).collect()],
            Some(labels) => partition_by_label(labels, self.class_count()),
        }
    }

    pub fn with_points(&self, points: Matrix<T>) -> Result<Self> {
        if points.rows() != self.n() {
            return Err(QqeError::RowCountMismatch { expected: self.n(), actual: points.rows() });
        }
        Ok(Self { points, labels: self.labels.clone(), class_values: self.class_values.clone() })
    }
}

pub(crate) fn partition_by_label(labels: &[usize], classes: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Targets are the matched reference points (identity qq line).
    Exact,
    /// Targets lie on the best-fit qq line of any slope and intercept.
    Shape,
}

/// Which neighbour sums the regulariser's derivatives run over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientForm {
    /// Every edge incident to the point, in either direction: the exact
    /// derivatives of the joint cost.
    Full,
    /// Only edges `i -> j` with `j` among the neighbours of `i`.
    OneSided,
}

/// Hyperparameters and stopping rules of a transform run.
///
/// Field names double as the JSON configuration schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformConfig {
    pub lambda: f64,
    pub eta: f64,
    pub k: usize,
    pub mode: Mode,
    pub supervised: bool,
    pub max_iters: usize,
    pub rel_cost_tol: f64,
    pub rematch_every: Option<usize>,
    pub snapshot_every: usize,
    pub epsilon_dist: f64,
    pub match_max_rounds: usize,
    pub gradient: GradientForm,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            eta: 0.01,
            k: 10,
            mode: Mode::Exact,
            supervised: false,
            max_iters: 500,
            rel_cost_tol: 1e-6,
            rematch_every: None,
            snapshot_every: 50,
            epsilon_dist: 1e-12,
            match_max_rounds: 50,
            gradient: GradientForm::Full,
        }
    }
}

impl TransformConfig {
    /// Defaults with the larger learning rate suited to embeddings.
    pub fn embedding_preset() -> Self {
        Self { eta: 0.1, ..Self::default() }
    }

    /// Checks positivity constraints and `k < n` for a sample of size `n`.
    /// `lambda = 0` is allowed and switches the distance term off.
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(QqeError::InvalidConfig(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        let positive = [
            ("eta", self.eta),
            ("rel_cost_tol", self.rel_cost_tol),
            ("epsilon_dist", self.epsilon_dist),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(QqeError::InvalidConfig(format!("{name} must be positive, got {value}")));
            }
        }
        for (name, value) in [
            ("max_iters", self.max_iters),
            ("snapshot_every", self.snapshot_every),
            ("match_max_rounds", self.match_max_rounds),
        ] {
            if value == 0 {
                return Err(QqeError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.rematch_every == Some(0) {
            return Err(QqeError::InvalidConfig("rematch_every must be positive".into()));
        }
        if self.k == 0 || self.k >= n {
            return Err(QqeError::KTooLarge { k: self.k, n });
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A bijection on `0..n`, stored as `sigma[i]` = partner of `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &s) in self.0.iter().enumerate() {
            inv[s] = i;
        }
        Self(inv)
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = QqeError;

    fn try_from(values: Vec<usize>) -> Result<Self> {
        let n = values.len();
        let mut seen = vec![false; n];
        for &v in &values {
            if v >= n || std::mem::replace(&mut seen[v], true) {
                return Err(QqeError::InvalidPermutation(format!("entry {v} out of range or repeated")));
            }
        }
        Ok(Self(values))
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

impl std::ops::Index<usize> for Permutation {
    type Output = usize;

    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

/// Outcome of fuzzy qq-plot matching: observed point `i` is paired with
/// reference point `sigma[i]`, and `x_i ~ A y_sigma(i) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult<T> {
    pub sigma: Permutation,
    pub a: Matrix<T>,
    pub b: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Matching objective after every assignment solve and every regression,
    /// in the order they ran.
    pub objective_trace: Vec<T>,
    /// Whether any affine fit needed the ridge fallback.
    pub rank_deficient: bool,
}

/// k-nearest-neighbour graph over the initial points, with the initial
/// distances and weights of the distance-preservation term.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph<T> {
    pub(crate) k: usize,
    pub(crate) neighbors: Vec<usize>,
    pub(crate) initial_distances: Vec<T>,
    pub(crate) weights: Vec<T>,
    pub(crate) normalization: T,
}

impl<T: Scalar> NeighborGraph<T> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.neighbors.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn neighbors_of(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    /// Clamped initial distances `d0(i, j)` for `j` in `neighbors_of(i)`.
    pub fn initial_distances_of(&self, i: usize) -> &[T] {
        &self.initial_distances[i * self.k..(i + 1) * self.k]
    }

    pub fn weights_of(&self, i: usize) -> &[T] {
        &self.weights[i * self.k..(i + 1) * self.k]
    }

    /// Sum of all initial neighbour distances.
    pub fn normalization(&self) -> T {
        self.normalization
    }

    /// Directed edges `(i, j, d0, w)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, T, T)> + '_ {
        (0..self.neighbors.len()).map(move |e| {
            (e / self.k, self.neighbors[e], self.initial_distances[e], self.weights[e])
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    CostConverged,
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    pub iteration: usize,
    pub points: Matrix<T>,
    pub cost: T,
}

/// Iteration snapshots of one optimisation run. The last snapshot always
/// holds the final points.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    snapshots: Vec<Snapshot<T>>,
    stop_reason: StopReason,
}

impl<T: Scalar> Trajectory<T> {
    pub(crate) fn new(snapshots: Vec<Snapshot<T>>, stop_reason: StopReason) -> Self {
        assert!(!snapshots.is_empty(), "a trajectory holds at least the initial snapshot");
        debug_assert!(snapshots.windows(2).all(|w| w[0].iteration < w[1].iteration));
        Self { snapshots, stop_reason }
    }

    pub fn snapshots(&self) -> &[Snapshot<T>] {
        &self.snapshots
    }

    pub fn stop_reason(&self) -> StopReason {
        self.stop_reason
    }

    pub fn final_snapshot(&self) -> &Snapshot<T> {
        self.snapshots.last().expect("non-empty")
    }

    pub fn final_points(&self) -> &Matrix<T> {
        &self.final_snapshot().points
    }

    pub fn initial_cost(&self) -> T {
        self.snapshots[0].cost
    }

    pub fn final_cost(&self) -> T {
        self.final_snapshot().cost
    }

    /// Number of descent steps taken.
    pub fn iterations(&self) -> usize {
        self.final_snapshot().iteration
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_small_finite_matrix() {
        let m = Matrix::from_rows(&[[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]]).unwrap();
        let ds = validate_dataset(m, None).unwrap();
        assert_eq!((ds.n(), ds.dim()), (3, 2));
        assert!(ds.labels().is_none());
    }

    #[test]
    fn rejects_nan() {
        let m = Matrix::from_rows(&[[0.0, 1.0], [f64::NAN, 3.0]]).unwrap();
        assert!(matches!(validate_dataset(m, None), Err(QqeError::NonFinite { row: 1, col: 0 })));
    }

    #[test]
    fn two_classes_of_two() {
        let m = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [5.0, 5.0], [6.0, 5.0]]).unwrap();
        let ds = validate_dataset(m, Some(vec![0, 0, 1, 1])).unwrap();
        assert_eq!(ds.class_count(), 2);
        assert_eq!(ds.class_indices(), vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn labels_are_remapped_densely() {
        let m = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let ds = validate_dataset(m, Some(vec![7, -3, 7, -3])).unwrap();
        assert_eq!(ds.labels().unwrap(), &[1, 0, 1, 0]);
        assert_eq!(ds.original_label(1), Some(7));
    }

    #[test]
    fn validation_errors() {
        let one = Matrix::from_rows(&[[0.0]]).unwrap();
        assert!(matches!(validate_dataset(one, None), Err(QqeError::TooFewPoints { .. })));
        let m = Matrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        assert!(matches!(
            validate_dataset(m.clone(), Some(vec![0, 0, 1])),
            Err(QqeError::ClassTooSmall { class: 1, .. })
        ));
        assert!(matches!(
            validate_dataset(m, Some(vec![0, 0])),
            Err(QqeError::LabelLengthMismatch { .. })
        ));
    }

    #[test]
    fn permutation_rejects_repeats() {
        assert!(Permutation::try_from(vec![0, 0, 1]).is_err());
        assert!(Permutation::try_from(vec![0, 3, 1]).is_err());
        let p = Permutation::try_from(vec![2, 0, 1]).unwrap();
        assert_eq!(p.inverse().as_slice(), &[1, 2, 0]);
    }

    #[test]
    fn config_json_uses_field_names() {
        let c = TransformConfig::from_json(r#"{"lambda": 0.5, "mode": "shape", "k": 4}"#).unwrap();
        assert_eq!(c.lambda, 0.5);
        assert_eq!(c.mode, Mode::Shape);
        assert_eq!(c.eta, 0.01);
        assert!(TransformConfig::from_json(r#"{"lamda": 0.5}"#).is_err());
        assert!(matches!(c.validate(4), Err(QqeError::KTooLarge { k: 4, n: 4 })));
        assert!(c.validate(5).is_ok());
    }
}
