//! Minimum-cost bipartite assignment.
//!
//! Shortest-augmenting-path implementation with dual potentials, `O(n^3)` in
//! the larger dimension. Rectangular inputs are supported; every row is
//! matched when `rows <= cols`, otherwise every column (the matrix is solved
//! transposed and the pairing flipped back). Results are deterministic: rows
//! are augmented in index order, and cost ties resolve toward the lowest
//! scanned column index.

use std::fmt;

/// Errors from [`min_cost_assignment`].
#[derive(Debug, Clone, PartialEq)]
pub enum AssignmentError {
    /// `costs.len()` is not `rows * cols`.
    ShapeMismatch { rows: usize, cols: usize, len: usize },
    /// A cost entry is NaN or infinite.
    NonFiniteCost { row: usize, col: usize },
}

impl fmt::Display for AssignmentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssignmentError::ShapeMismatch { rows, cols, len } => {
                write!(f, "cost matrix {rows}x{cols} needs {} entries, got {len}", rows * cols)
            }
            AssignmentError::NonFiniteCost { row, col } => {
                write!(f, "non-finite cost at ({row}, {col})")
            }
        }
    }
}

impl std::error::Error for AssignmentError {}

/// Solves `min sum costs[r][c]` over one-to-one pairings of rows to columns.
///
/// `costs` is row-major with `rows * cols` entries. Returns `min(rows, cols)`
/// pairs `(row, col)` sorted by row index, alongside the total cost summed in
/// `f64`. An empty dimension yields an empty pairing at zero cost.
pub fn min_cost_assignment(
    costs: &[f64],
    rows: usize,
    cols: usize,
) -> Result<(Vec<(usize, usize)>, f64), AssignmentError> {
    if costs.len() != rows * cols {
        return Err(AssignmentError::ShapeMismatch { rows, cols, len: costs.len() });
    }
    for (i, c) in costs.iter().enumerate() {
        if !c.is_finite() {
            return Err(AssignmentError::NonFiniteCost { row: i / cols.max(1), col: i % cols.max(1) });
        }
    }
    if rows == 0 || cols == 0 {
        return Ok((Vec::new(), 0.0));
    }
    if rows > cols {
        // Solve the transpose so the augmenting loop always runs over the
        // smaller dimension, then flip the pairs back.
        let mut t = vec![0.0f64; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = costs[r * cols + c];
            }
        }
        let (pairs, total) = solve_rows_le_cols(&t, cols, rows);
        let mut flipped: Vec<(usize, usize)> = pairs.into_iter().map(|(r, c)| (c, r)).collect();
        flipped.sort_unstable();
        return Ok((flipped, total));
    }
    Ok(solve_rows_le_cols(costs, rows, cols))
}

/// Core solver; requires `rows <= cols` and finite costs.
fn solve_rows_le_cols(costs: &[f64], rows: usize, cols: usize) -> (Vec<(usize, usize)>, f64) {
    // Potentials for rows (u) and columns (v); way[c] remembers the previous
    // column on the shortest alternating path. Column 0 of the internal
    // arrays is a virtual slot holding the row currently being inserted.
    let mut u = vec![0.0f64; rows + 1];
    let mut v = vec![0.0f64; cols + 1];
    let mut matched_row = vec![0usize; cols + 1]; // 0 = free, else row index + 1
    let mut way = vec![0usize; cols + 1];

    for r in 1..=rows {
        matched_row[0] = r;
        let mut j0 = 0usize; // column whose match we are displacing
        let mut min_to = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = costs[(i0 - 1) * cols + (j - 1)] - u[i0] - v[j];
                if cur < min_to[j] {
                    min_to[j] = cur;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        // Unwind the alternating path, reassigning matches.
        while j0 != 0 {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
        }
    }

    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(rows);
    let mut total = 0.0f64;
    for j in 1..=cols {
        if matched_row[j] != 0 {
            let r = matched_row[j] - 1;
            pairs.push((r, j - 1));
            total += costs[r * cols + (j - 1)];
        }
    }
    pairs.sort_unstable();
    (pairs, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive minimum over all pairings; oracle for the solver.
    fn brute_force(costs: &[f64], rows: usize, cols: usize) -> f64 {
        fn recurse(costs: &[f64], cols: usize, row: usize, rows: usize, used: &mut Vec<bool>) -> f64 {
            if row == rows {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for c in 0..cols {
                if !used[c] {
                    used[c] = true;
                    let v = costs[row * cols + c] + recurse(costs, cols, row + 1, rows, used);
                    used[c] = false;
                    if v < best {
                        best = v;
                    }
                }
            }
            best
        }
        if rows <= cols {
            recurse(costs, cols, 0, rows, &mut vec![false; cols])
        } else {
            let mut t = vec![0.0; rows * cols];
            for r in 0..rows {
                for c in 0..cols {
                    t[c * rows + r] = costs[r * cols + c];
                }
            }
            recurse(&t, rows, 0, cols, &mut vec![false; rows])
        }
    }

    fn assert_valid_pairing(pairs: &[(usize, usize)], rows: usize, cols: usize) {
        assert_eq!(pairs.len(), rows.min(cols));
        let mut seen_r = vec![false; rows];
        let mut seen_c = vec![false; cols];
        for &(r, c) in pairs {
            assert!(!seen_r[r] && !seen_c[c], "duplicate row or column in pairing");
            seen_r[r] = true;
            seen_c[c] = true;
        }
    }

    #[test]
    fn hand_worked_three_by_three() {
        // Row 0 -> col 1 (1), row 1 -> col 0 (2), row 2 -> col 2 (2): total 5.
        let costs = vec![
            4.0, 1.0, 3.0, //
            2.0, 0.0, 5.0, //
            3.0, 2.0, 2.0,
        ];
        let (pairs, total) = min_cost_assignment(&costs, 3, 3).unwrap();
        assert_eq!(total, 5.0);
        assert_eq!(pairs, vec![(0, 1), (1, 0), (2, 2)]);
    }

    #[test]
    fn rectangular_shapes_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let rows = rng.random_range(1..=5);
            let cols = rng.random_range(1..=5);
            let costs: Vec<f64> =
                (0..rows * cols).map(|_| rng.random_range(-10.0..10.0)).collect();
            let (pairs, total) = min_cost_assignment(&costs, rows, cols).unwrap();
            assert_valid_pairing(&pairs, rows, cols);
            let expect = brute_force(&costs, rows, cols);
            assert!(
                (total - expect).abs() <= 1e-9 * (1.0 + expect.abs()),
                "{rows}x{cols}: solver {total} vs brute force {expect}"
            );
            let recomputed: f64 = pairs.iter().map(|&(r, c)| costs[r * cols + c]).sum();
            assert!((recomputed - total).abs() <= 1e-9, "reported total must match pairs");
        }
    }

    #[test]
    fn integer_costs_stay_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.random_range(1..=6);
            let costs: Vec<f64> = (0..n * n).map(|_| rng.random_range(0..50) as f64).collect();
            let (_, total) = min_cost_assignment(&costs, n, n).unwrap();
            assert_eq!(total, brute_force(&costs, n, n));
        }
    }

    #[test]
    fn empty_and_single_cases() {
        assert_eq!(min_cost_assignment(&[], 0, 4).unwrap(), (vec![], 0.0));
        assert_eq!(min_cost_assignment(&[], 3, 0).unwrap(), (vec![], 0.0));
        assert_eq!(min_cost_assignment(&[7.5], 1, 1).unwrap(), (vec![(0, 0)], 7.5));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(matches!(
            min_cost_assignment(&[1.0, 2.0], 2, 2),
            Err(AssignmentError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            min_cost_assignment(&[0.0, f64::NAN, 0.0, 0.0], 2, 2),
            Err(AssignmentError::NonFiniteCost { row: 0, col: 1 })
        ));
    }

    #[test]
    fn ties_resolve_deterministically() {
        // All costs equal: expect the identity pairing from index-ordered scans.
        let costs = vec![1.0; 9];
        let (pairs, total) = min_cost_assignment(&costs, 3, 3).unwrap();
        assert_eq!(pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(total, 3.0);
    }
}
