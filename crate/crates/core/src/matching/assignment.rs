//! Dense linear assignment by shortest augmenting paths with dual potentials
//! (the O(n^3) Hungarian / Jonker-Volgenant family).
//!
//! Among all optimal assignments the lexicographically smallest one is
//! returned: after the solve, every optimal assignment uses only edges whose
//! reduced cost `C(i,j) - u_i - v_j` is zero, so the optimum set is exactly
//! the set of perfect matchings of that equality subgraph. Rows are then
//! fixed one at a time to the smallest column that still admits a perfect
//! matching, re-routing along alternating paths.

use std::collections::VecDeque;

use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::types::Permutation;

use super::CostMatrix;

/// Permutation `sigma` minimising `sum_i C(i, sigma(i))`, with the
/// lexicographically smallest `sigma` among optima.
pub fn solve_assignment<T: Scalar>(costs: &CostMatrix<T>) -> Permutation {
    let c = costs.entries();
    let n = c.rows();
    if n == 0 {
        return Permutation::identity(0);
    }
    let (row_to_col, u, v) = hungarian(c);
    let scale = c.as_slice().iter().fold(T::one(), |m, &x| m.max(x.abs()));
    let tol = T::lit(1e-10) * scale;
    let lexmin = lexicographic_optimum(c, &u, &v, row_to_col, tol);
    Permutation::try_from(lexmin).expect("assignment is a bijection")
}

/// Total cost of `sigma` under `costs`.
pub fn assignment_cost<T: Scalar>(costs: &CostMatrix<T>, sigma: &Permutation) -> T {
    (0..sigma.len()).map(|i| costs.entries()[(i, sigma[i])]).sum()
}

/// Returns (row -> column, row potentials, column potentials).
fn hungarian<T: Scalar>(c: &Matrix<T>) -> (Vec<usize>, Vec<T>, Vec<T>) {
    let n = c.rows();
    let inf = T::infinity();
    // 1-based with index 0 as the virtual source
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = inf);
        used.iter_mut().for_each(|f| *f = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[owner[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

fn lexicographic_optimum<T: Scalar>(
    c: &Matrix<T>,
    u: &[T],
    v: &[T],
    mut row_to_col: Vec<usize>,
    tol: T,
) -> Vec<usize> {
    let n = c.rows();
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| c[(i, j)] - u[i] - v[j] <= tol).collect())
        .collect();
    let mut col_to_row = vec![0usize; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }

    for i in 0..n {
        let current = row_to_col[i];
        for &j in &tight[i] {
            if j >= current {
                break;
            }
            let displaced = col_to_row[j];
            if displaced < i {
                continue;
            }
            if let Some(path) = alternating_path(&tight, &col_to_row, i, displaced, current) {
                // path: rows r_0 = displaced, ..., r_m and the columns they move to
                row_to_col[i] = j;
                col_to_row[j] = i;
                for (row, col) in path {
                    row_to_col[row] = col;
                    col_to_row[col] = row;
                }
                break;
            }
        }
    }
    row_to_col
}

/// BFS over rows `> fixed` for a way to hand column `target` to a chain of
/// rows starting at `start`, using tight edges only. Returns the reassignment.
fn alternating_path(
    tight: &[Vec<usize>],
    col_to_row: &[usize],
    fixed: usize,
    start: usize,
    target: usize,
) -> Option<Vec<(usize, usize)>> {
    let n = col_to_row.len();
    // parent[row] = (previous row, column the previous row takes) for BFS tree
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut visited = vec![false; n];
    visited[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(row) = queue.pop_front() {
        for &col in &tight[row] {
            if col == target {
                let mut moves = vec![(row, col)];
                let mut r = row;
                while let Some((prev, prev_col)) = parent[r] {
                    moves.push((prev, prev_col));
                    r = prev;
                }
                return Some(moves);
            }
            let next = col_to_row[col];
            if next <= fixed || visited[next] {
                continue;
            }
            visited[next] = true;
            parent[next] = Some((row, col));
            queue.push_back(next);
        }
    }
    None
}
