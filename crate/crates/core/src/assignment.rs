//! Exact minimum-cost bipartite matching.
//!
//! The solver is the O(n^3) potential/augmenting-path form of the Hungarian
//! algorithm over a square matrix. Rectangular inputs are padded, and
//! forbidden pairs (the `+inf` sentinel) are replaced by a finite cost large
//! enough that the solver first maximizes the number of allowed pairs and
//! only then minimizes real cost. Ties between equally optimal matchings are
//! broken by lexicographic (row, col) preference in a refinement pass, so
//! output never depends on internal iteration order.

use thiserror::Error;

/// Sentinel cost that forbids a pair.
pub const FORBIDDEN: f64 = f64::INFINITY;

#[derive(Debug, Error, PartialEq)]
pub enum AssignmentError {
    #[error("cost at ({row}, {col}) is {value}; entries must be finite or +inf")]
    InvalidEntry { row: usize, col: usize, value: f64 },
}

/// Rectangular cost matrix; `+inf` entries mark forbidden pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, fill: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![fill; rows * cols],
        }
    }

    /// Build from row slices; panics if rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        assert!(
            rows.iter().all(|r| r.len() == m),
            "all rows must have equal length"
        );
        Self {
            rows: n,
            cols: m,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn map_finite(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|&v| if v == FORBIDDEN { v } else { f(v) })
                .collect(),
        }
    }
}

/// Result of [`solve_assignment`]: matched pairs plus the rows and columns
/// left unmatched because the matrix was rectangular or a sentinel made a
/// complete matching infeasible.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// Matched `(row, col)` pairs, sorted by row.
    pub pairs: Vec<(usize, usize)>,
    /// Sum of the matched pairs' costs.
    pub total_cost: f64,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

/// Square solver state: solves over a padded square matrix where `big`
/// stands for both padding and forbidden entries.
struct Square {
    n: usize,
    costs: Vec<f64>,
    /// true where the entry is padding or a replaced sentinel
    big_mask: Vec<bool>,
}

impl Square {
    fn cost(&self, r: usize, c: usize) -> f64 {
        self.costs[r * self.n + c]
    }

    fn is_big(&self, r: usize, c: usize) -> bool {
        self.big_mask[r * self.n + c]
    }

    /// Shortest-augmenting-path Hungarian over rows/cols listed in
    /// `rows`/`cols` (equal length). Returns pairs as indices into the
    /// original square matrix.
    fn solve_subset(&self, rows: &[usize], cols: &[usize]) -> Vec<(usize, usize)> {
        let n = rows.len();
        debug_assert_eq!(n, cols.len());
        if n == 0 {
            return Vec::new();
        }
        let at = |i: usize, j: usize| self.cost(rows[i], cols[j]);

        const NONE: usize = usize::MAX;
        let mut u = vec![0.0f64; n];
        let mut v = vec![0.0f64; n + 1];
        // matched[j] = local row occupying local column j; slot n is virtual
        let mut matched = vec![NONE; n + 1];
        let mut way = vec![0usize; n + 1];

        for i in 0..n {
            matched[n] = i;
            let mut j0 = n;
            let mut minv = vec![f64::INFINITY; n + 1];
            let mut used = vec![false; n + 1];
            loop {
                used[j0] = true;
                let i0 = matched[j0];
                let mut delta = f64::INFINITY;
                let mut j1 = n;
                for j in 0..n {
                    if !used[j] {
                        let cur = at(i0, j) - u[i0] - v[j];
                        if cur < minv[j] {
                            minv[j] = cur;
                            way[j] = j0;
                        }
                        if minv[j] < delta {
                            delta = minv[j];
                            j1 = j;
                        }
                    }
                }
                for j in 0..=n {
                    if used[j] {
                        u[matched[j]] += delta;
                        v[j] -= delta;
                    } else {
                        minv[j] -= delta;
                    }
                }
                j0 = j1;
                if matched[j0] == NONE {
                    break;
                }
            }
            // augment backwards along the alternating path
            loop {
                let j1 = way[j0];
                matched[j0] = matched[j1];
                j0 = j1;
                if j0 == n {
                    break;
                }
            }
        }

        (0..n).map(|j| (rows[matched[j]], cols[j])).collect()
    }

    /// (number of big entries used, sum of non-big costs) for a pair set.
    fn score(&self, pairs: &[(usize, usize)]) -> (usize, f64) {
        let mut bigs = 0usize;
        let mut real = 0.0f64;
        for &(r, c) in pairs {
            if self.is_big(r, c) {
                bigs += 1;
            } else {
                real += self.cost(r, c);
            }
        }
        (bigs, real)
    }
}

/// Minimum-cost complete matching of size `min(rows, cols)`.
///
/// Pairs whose cost is the `+inf` sentinel are never returned; when no
/// complete sentinel-free matching exists, the solver returns the largest
/// sentinel-free matching of minimum cost and reports the leftover rows and
/// columns as unmatched.
pub fn solve_assignment(matrix: &CostMatrix) -> Result<Matching, AssignmentError> {
    let (n, m) = (matrix.rows(), matrix.cols());
    for r in 0..n {
        for c in 0..m {
            let v = matrix.get(r, c);
            if v.is_nan() || v == f64::NEG_INFINITY {
                return Err(AssignmentError::InvalidEntry {
                    row: r,
                    col: c,
                    value: v,
                });
            }
        }
    }
    if n == 0 || m == 0 {
        return Ok(Matching {
            pairs: Vec::new(),
            total_cost: 0.0,
            unmatched_rows: (0..n).collect(),
            unmatched_cols: (0..m).collect(),
        });
    }

    let side = n.max(m);
    let max_abs = matrix
        .data
        .iter()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    // Exceeds side * max|entry| + 1, so one extra big entry always costs more
    // than any achievable swing in real cost.
    let big = 2.0 * side as f64 * max_abs.max(1.0) + 1.0;

    let mut costs = vec![big; side * side];
    let mut big_mask = vec![true; side * side];
    for r in 0..n {
        for c in 0..m {
            let v = matrix.get(r, c);
            if v.is_finite() {
                costs[r * side + c] = v;
                big_mask[r * side + c] = false;
            }
        }
    }
    let square = Square {
        n: side,
        costs,
        big_mask,
    };

    let all: Vec<usize> = (0..side).collect();
    let base = square.solve_subset(&all, &all);
    let (opt_bigs, opt_real) = square.score(&base);
    let real_tol = 1e-9 * opt_real.abs().max(1.0);

    // Lexicographic refinement: fix (row, col) pairs greedily in ascending
    // order, keeping only choices that preserve the optimum.
    let mut fixed: Vec<(usize, usize)> = Vec::new();
    let mut free_rows: Vec<usize> = (0..side).collect();
    let mut free_cols: Vec<usize> = (0..side).collect();
    for r in 0..n {
        let mut chosen: Option<usize> = None;
        for &c in free_cols.iter().filter(|&&c| c < m) {
            if square.is_big(r, c) {
                continue; // sentinel pairs are never fixed
            }
            let sub_rows: Vec<usize> = free_rows.iter().copied().filter(|&x| x != r).collect();
            let sub_cols: Vec<usize> = free_cols.iter().copied().filter(|&x| x != c).collect();
            let completion = square.solve_subset(&sub_rows, &sub_cols);
            let (mut bigs, mut real) = square.score(&completion);
            let (fixed_bigs, fixed_real) = square.score(&fixed);
            bigs += fixed_bigs;
            real += fixed_real + square.cost(r, c);
            if bigs == opt_bigs && (real - opt_real).abs() <= real_tol {
                chosen = Some(c);
                break;
            }
        }
        if let Some(c) = chosen {
            fixed.push((r, c));
            free_rows.retain(|&x| x != r);
            free_cols.retain(|&x| x != c);
        }
    }

    let total_cost = fixed.iter().map(|&(r, c)| matrix.get(r, c)).sum();
    let matched_rows: Vec<usize> = fixed.iter().map(|p| p.0).collect();
    let matched_cols: Vec<usize> = fixed.iter().map(|p| p.1).collect();
    Ok(Matching {
        pairs: fixed,
        total_cost,
        unmatched_rows: (0..n).filter(|r| !matched_rows.contains(r)).collect(),
        unmatched_cols: (0..m).filter(|c| !matched_cols.contains(c)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: enumerate every complete matching.
    fn brute_force(matrix: &CostMatrix) -> Option<f64> {
        let (n, m) = (matrix.rows(), matrix.cols());
        let k = n.min(m);
        let mut best: Option<f64> = None;
        // choose which rows/cols participate, then permute
        fn rec(
            matrix: &CostMatrix,
            row: usize,
            used_cols: &mut Vec<bool>,
            picked: usize,
            k: usize,
            acc: f64,
            best: &mut Option<f64>,
        ) {
            let n = matrix.rows();
            if picked == k {
                if best.map_or(true, |b| acc < b) {
                    *best = Some(acc);
                }
                return;
            }
            if row == n {
                return;
            }
            let remaining_rows = n - row;
            let needed = k - picked;
            if remaining_rows > needed {
                // this row may stay unmatched
                rec(matrix, row + 1, used_cols, picked, k, acc, best);
            }
            for c in 0..matrix.cols() {
                if !used_cols[c] && matrix.get(row, c) != FORBIDDEN {
                    used_cols[c] = true;
                    rec(
                        matrix,
                        row + 1,
                        used_cols,
                        picked + 1,
                        k,
                        acc + matrix.get(row, c),
                        best,
                    );
                    used_cols[c] = false;
                }
            }
        }
        // try matchings of size k, then k-1, ... down to the largest feasible
        for size in (0..=k).rev() {
            let mut used = vec![false; m];
            rec(matrix, 0, &mut used, 0, size, 0.0, &mut best);
            if best.is_some() {
                return best;
            }
        }
        Some(0.0)
    }

    #[test]
    fn zero_diagonal() {
        let m = CostMatrix::from_rows(&[vec![0.0, 9.0], vec![9.0, 0.0]]);
        let sol = solve_assignment(&m).unwrap();
        assert_eq!(sol.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(sol.total_cost, 0.0);
    }

    #[test]
    fn prefers_cross_match() {
        // enumerating both permutations: 1 + 4 = 5 vs 2 + 2 = 4
        let m = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        let sol = solve_assignment(&m).unwrap();
        assert_eq!(sol.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(sol.total_cost, 4.0);
    }

    #[test]
    fn tie_broken_lexicographically() {
        let m = CostMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let sol = solve_assignment(&m).unwrap();
        assert_eq!(sol.pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn rectangular_rows_exceed_cols() {
        let m = CostMatrix::from_rows(&[vec![5.0], vec![1.0], vec![3.0]]);
        let sol = solve_assignment(&m).unwrap();
        assert_eq!(sol.pairs, vec![(1, 0)]);
        assert_eq!(sol.unmatched_rows, vec![0, 2]);
        assert!(sol.unmatched_cols.is_empty());
    }

    #[test]
    fn rectangular_cols_exceed_rows() {
        let m = CostMatrix::from_rows(&[vec![5.0, 1.0, 3.0]]);
        let sol = solve_assignment(&m).unwrap();
        assert_eq!(sol.pairs, vec![(0, 1)]);
        assert_eq!(sol.unmatched_cols, vec![0, 2]);
    }

    #[test]
    fn sentinel_pair_avoided() {
        let m = CostMatrix::from_rows(&[vec![FORBIDDEN, 2.0], vec![3.0, 100.0]]);
        let sol = solve_assignment(&m).unwrap();
        assert_eq!(sol.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(sol.total_cost, 5.0);
    }

    #[test]
    fn unavoidable_sentinel_leaves_row_unmatched() {
        let m = CostMatrix::from_rows(&[vec![FORBIDDEN, FORBIDDEN], vec![3.0, 1.0]]);
        let sol = solve_assignment(&m).unwrap();
        assert_eq!(sol.pairs, vec![(1, 1)]);
        assert_eq!(sol.unmatched_rows, vec![0]);
        assert_eq!(sol.unmatched_cols, vec![0]);
    }

    #[test]
    fn all_forbidden_matches_nothing() {
        let m = CostMatrix::new(2, 2, FORBIDDEN);
        let sol = solve_assignment(&m).unwrap();
        assert!(sol.pairs.is_empty());
        assert_eq!(sol.unmatched_rows, vec![0, 1]);
        assert_eq!(sol.unmatched_cols, vec![0, 1]);
    }

    #[test]
    fn nan_rejected() {
        let m = CostMatrix::from_rows(&[vec![0.0, f64::NAN]]);
        assert!(matches!(
            solve_assignment(&m),
            Err(AssignmentError::InvalidEntry { row: 0, col: 1, .. })
        ));
    }

    #[test]
    fn empty_matrix() {
        let m = CostMatrix::new(0, 3, 0.0);
        let sol = solve_assignment(&m).unwrap();
        assert!(sol.pairs.is_empty());
        assert_eq!(sol.unmatched_cols, vec![0, 1, 2]);
    }

    #[test]
    fn matches_brute_force_on_seeded_matrices() {
        use rand::Rng;
        let mut rng = crate::rng::stage_rng(7, "assignment-unit");
        for case in 0..200 {
            let n = rng.gen_range(1..=5);
            let m = rng.gen_range(1..=5);
            let mut matrix = CostMatrix::new(n, m, 0.0);
            for r in 0..n {
                for c in 0..m {
                    let v: f64 = rng.gen_range(-5.0..5.0);
                    matrix.set(r, c, if rng.gen_bool(0.15) { FORBIDDEN } else { v });
                }
            }
            let sol = solve_assignment(&matrix).unwrap();
            let best = brute_force(&matrix).unwrap();
            assert!(
                (sol.total_cost - best).abs() <= 1e-9,
                "case {}: solver {} vs brute force {}",
                case,
                sol.total_cost,
                best
            );
        }
    }

    #[test]
    fn scale_invariance_of_argmin() {
        use rand::Rng;
        let mut rng = crate::rng::stage_rng(11, "assignment-scale");
        for _ in 0..50 {
            let n = rng.gen_range(1..=5);
            let mut matrix = CostMatrix::new(n, n, 0.0);
            for r in 0..n {
                for c in 0..n {
                    matrix.set(r, c, rng.gen_range(0.0..10.0));
                }
            }
            let lambda: f64 = rng.gen_range(0.1..10.0);
            let base = solve_assignment(&matrix).unwrap();
            let scaled = solve_assignment(&matrix.map_finite(|v| v * lambda)).unwrap();
            assert!((scaled.total_cost / lambda - base.total_cost).abs() <= 1e-6);
            // random real matrices have a unique optimum almost surely
            assert_eq!(scaled.pairs, base.pairs);
        }
    }

    #[test]
    fn row_shift_invariance() {
        use rand::Rng;
        let mut rng = crate::rng::stage_rng(13, "assignment-shift");
        for _ in 0..50 {
            let n = rng.gen_range(2..=5);
            let mut matrix = CostMatrix::new(n, n, 0.0);
            for r in 0..n {
                for c in 0..n {
                    matrix.set(r, c, rng.gen_range(0.0..10.0));
                }
            }
            let base = solve_assignment(&matrix).unwrap();
            let row = rng.gen_range(0..n);
            let shift: f64 = rng.gen_range(-3.0..3.0);
            let mut shifted = matrix.clone();
            for c in 0..n {
                shifted.set(row, c, matrix.get(row, c) + shift);
            }
            let sol = solve_assignment(&shifted).unwrap();
            assert_eq!(sol.pairs, base.pairs);
        }
    }
}
