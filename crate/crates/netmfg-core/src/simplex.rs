//! Dense two-phase simplex for small equality-form linear programs:
//! minimize `c . x` subject to `A x = b`, `x >= 0`.
//!
//! Bland's rule keeps the iteration finite; the problems solved here have a
//! handful of rows (vertex envelopes, discrete transport), so a dense
//! tableau is appropriate.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::Result;

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
}

/// Solves `min c.x, A x = b, x >= 0` with `a` in row-major order.
pub fn solve_lp(rows: usize, cols: usize, a: &[f64], b: &[f64], c: &[f64]) -> Result<LpSolution> {
    assert_eq!(a.len(), rows * cols);
    assert_eq!(b.len(), rows);
    assert_eq!(c.len(), cols);
    let total = cols + rows; // structural + artificial columns
    let mut t = vec![0.0f64; (rows + 1) * (total + 1)];
    let width = total + 1;
    for i in 0..rows {
        let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..cols {
            t[i * width + j] = flip * a[i * cols + j];
        }
        t[i * width + cols + i] = 1.0;
        t[i * width + total] = flip * b[i];
    }
    let mut basis: Vec<usize> = (cols..total).collect();

    // Phase 1: minimize the sum of artificials.
    {
        let obj = rows * width;
        for j in 0..total {
            t[obj + j] = if j >= cols { 1.0 } else { 0.0 };
        }
        t[obj + total] = 0.0;
        for i in 0..rows {
            // Make the reduced costs of the basic artificials zero.
            for j in 0..=total {
                t[obj + j] -= t[i * width + j];
            }
        }
    }
    run_simplex(&mut t, rows, total, width, &mut basis, total)?;
    let infeas = -t[rows * width + total];
    if infeas > 1e-8 {
        return Err(CoreError::Infeasible(format!(
            "linear program infeasible (phase-1 objective {infeas:.3e})"
        )));
    }

    // Phase 2 over structural columns only; artificials may linger in the
    // basis at level zero on redundant rows.
    {
        let obj = rows * width;
        for j in 0..total {
            t[obj + j] = if j < cols { c[j] } else { 0.0 };
        }
        t[obj + total] = 0.0;
        for i in 0..rows {
            let bj = basis[i];
            let cost = if bj < cols { c[bj] } else { 0.0 };
            if cost != 0.0 {
                for j in 0..=total {
                    t[obj + j] -= cost * t[i * width + j];
                }
            }
        }
    }
    run_simplex(&mut t, rows, total, width, &mut basis, cols)?;

    let mut x = vec![0.0f64; cols];
    for i in 0..rows {
        if basis[i] < cols {
            x[basis[i]] = t[i * width + total];
        }
    }
    let objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    Ok(LpSolution { objective, x })
}

fn run_simplex(
    t: &mut [f64],
    rows: usize,
    total: usize,
    width: usize,
    basis: &mut [usize],
    enter_limit: usize,
) -> Result<()> {
    let obj = rows * width;
    let max_iter = 50 * (rows + total) + 1000;
    for _ in 0..max_iter {
        // Bland: smallest-index column with a negative reduced cost.
        let mut entering = usize::MAX;
        for j in 0..enter_limit {
            if t[obj + j] < -COST_TOL {
                entering = j;
                break;
            }
        }
        if entering == usize::MAX {
            return Ok(());
        }
        // Ratio test, ties by smallest basis index (Bland).
        let mut leave = usize::MAX;
        let mut best_ratio = f64::INFINITY;
        for i in 0..rows {
            let aij = t[i * width + entering];
            if aij > PIVOT_TOL {
                let ratio = t[i * width + total] / aij;
                if ratio < best_ratio - PIVOT_TOL
                    || (ratio < best_ratio + PIVOT_TOL
                        && (leave == usize::MAX || basis[i] < basis[leave]))
                {
                    best_ratio = ratio;
                    leave = i;
                }
            }
        }
        if leave == usize::MAX {
            return Err(CoreError::Infeasible(String::from(
                "linear program unbounded",
            )));
        }
        pivot(t, rows, width, total, leave, entering);
        basis[leave] = entering;
    }
    Err(CoreError::Infeasible(String::from(
        "simplex iteration limit exceeded",
    )))
}

fn pivot(t: &mut [f64], rows: usize, width: usize, total: usize, row: usize, col: usize) {
    let p = t[row * width + col];
    for j in 0..=total {
        t[row * width + j] /= p;
    }
    for i in 0..=rows {
        if i == row {
            continue;
        }
        let f = t[i * width + col];
        if f != 0.0 {
            for j in 0..=total {
                t[i * width + j] -= f * t[row * width + j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_equality_lp() {
        // min x + y  s.t.  x + 2y = 4, 3x + y = 6
        let sol = solve_lp(
            2,
            2,
            &[1.0, 2.0, 3.0, 1.0],
            &[4.0, 6.0],
            &[1.0, 1.0],
        )
        .unwrap();
        assert!((sol.x[0] - 1.6).abs() < 1e-9);
        assert!((sol.x[1] - 1.2).abs() < 1e-9);
        assert!((sol.objective - 2.8).abs() < 1e-9);
    }

    #[test]
    fn picks_cheapest_vertex() {
        // min x2  s.t. x1 + x2 + x3 = 1 (a weight simplex); degenerate optima
        // exist, objective must be 0.
        let sol = solve_lp(1, 3, &[1.0, 1.0, 1.0], &[1.0], &[0.5, 1.0, 0.25]).unwrap();
        assert!((sol.objective - 0.25).abs() < 1e-10);
        assert!((sol.x[2] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn infeasible_detected() {
        // x = 1 and x = 2 cannot both hold.
        let r = solve_lp(2, 1, &[1.0, 1.0], &[1.0, 2.0], &[1.0]);
        assert!(r.is_err());
    }

    #[test]
    fn redundant_row_is_tolerated() {
        // Second row duplicates the first.
        let sol = solve_lp(
            2,
            2,
            &[1.0, 1.0, 1.0, 1.0],
            &[1.0, 1.0],
            &[2.0, 1.0],
        )
        .unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-10);
    }

    #[test]
    fn transport_two_by_two() {
        // Supplies (0.5, 0.5), demands (0.5, 0.5), cost matrix [[0,1],[1,0]]:
        // optimum ships on the diagonal at zero cost. Drop the redundant
        // last demand row.
        let a = [
            1.0, 1.0, 0.0, 0.0, // supply 0
            0.0, 0.0, 1.0, 1.0, // supply 1
            1.0, 0.0, 1.0, 0.0, // demand 0
        ];
        let sol = solve_lp(
            3,
            4,
            &a,
            &[0.5, 0.5, 0.5],
            &[0.0, 1.0, 1.0, 0.0],
        )
        .unwrap();
        assert!(sol.objective.abs() < 1e-10);
    }
}
