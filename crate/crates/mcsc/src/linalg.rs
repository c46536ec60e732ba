//! Small dense linear-algebra helpers (LU solve with partial pivoting).
//!
//! State counts stay in the hundreds, so a textbook O(n^3) factorization is
//! all the stationary-distribution solves need.

use ndarray::{Array1, Array2};

use crate::error::{McscError, Result};

/// Solve `a x = b` by LU factorization with partial pivoting.
///
/// Returns `SingularSystem` when a pivot falls below a scale-relative
/// threshold.
pub(crate) fn lu_solve(a: &Array2<f64>, b: &Array1<f64>, context: &'static str) -> Result<Array1<f64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "lu_solve requires a square matrix");
    assert_eq!(b.len(), n, "lu_solve rhs length mismatch");

    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = lu.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let tiny = 1e-14 * scale;

    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        // Partial pivot: largest magnitude in the column at or below the diagonal.
        let mut pivot_row = col;
        let mut pivot_val = lu[[col, col]].abs();
        for row in (col + 1)..n {
            let v = lu[[row, col]].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = row;
            }
        }
        if pivot_val < tiny {
            return Err(McscError::SingularSystem(context));
        }
        if pivot_row != col {
            perm.swap(col, pivot_row);
            for j in 0..n {
                let tmp = lu[[col, j]];
                lu[[col, j]] = lu[[pivot_row, j]];
                lu[[pivot_row, j]] = tmp;
            }
            let tmp = x[col];
            x[col] = x[pivot_row];
            x[pivot_row] = tmp;
        }
        let inv_pivot = 1.0 / lu[[col, col]];
        for row in (col + 1)..n {
            let factor = lu[[row, col]] * inv_pivot;
            if factor != 0.0 {
                lu[[row, col]] = factor;
                for j in (col + 1)..n {
                    lu[[row, j]] -= factor * lu[[col, j]];
                }
                x[row] -= factor * x[col];
            }
        }
    }

    // Back substitution.
    for col in (0..n).rev() {
        x[col] /= lu[[col, col]];
        for row in 0..col {
            x[row] -= lu[[row, col]] * x[col];
        }
    }
    Ok(x)
}
