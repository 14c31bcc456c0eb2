//! Shared oracles for the acceptance suite, independent of the library's
//! implementation paths.

use poseact_core::assignment::{CostMatrix, FORBIDDEN};

/// Exhaustive minimum-cost matching: prefers the largest sentinel-free
/// matching, then the cheapest, by trying every combination.
pub fn brute_force_min_cost(matrix: &CostMatrix) -> f64 {
    fn recurse(
        matrix: &CostMatrix,
        row: usize,
        used_cols: &mut Vec<bool>,
        picked: usize,
        target: usize,
        acc: f64,
        best: &mut Option<f64>,
    ) {
        let rows = matrix.rows();
        if picked == target {
            if best.map_or(true, |b| acc < b) {
                *best = Some(acc);
            }
            return;
        }
        if row == rows {
            return;
        }
        if rows - row > target - picked {
            recurse(matrix, row + 1, used_cols, picked, target, acc, best);
        }
        for col in 0..matrix.cols() {
            if !used_cols[col] && matrix.get(row, col) != FORBIDDEN {
                used_cols[col] = true;
                recurse(
                    matrix,
                    row + 1,
                    used_cols,
                    picked + 1,
                    target,
                    acc + matrix.get(row, col),
                    best,
                );
                used_cols[col] = false;
            }
        }
    }

    let max_size = matrix.rows().min(matrix.cols());
    for size in (1..=max_size).rev() {
        let mut best = None;
        let mut used = vec![false; matrix.cols()];
        recurse(matrix, 0, &mut used, 0, size, 0.0, &mut best);
        if let Some(cost) = best {
            return cost;
        }
    }
    0.0
}
