//! Dense linear algebra used by the power-flow solvers: a row-major matrix and
//! LU factorisation with partial pivoting. Dense is fine at the system sizes this
//! crate targets (a few thousand buses); a sparse backend is an extension point.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major dense matrix.
#[derive(Clone, Debug)]
pub struct DMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DMat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Solve `a x = b` in place via LU with partial pivoting.
///
/// Consumes `a`; returns `None` when a pivot falls below `tiny`, i.e. the
/// system is singular to working precision.
pub fn lu_solve(mut a: DMat, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = a.rows;
    debug_assert_eq!(a.cols, n);
    debug_assert_eq!(b.len(), n);
    const TINY: f64 = 1e-12;

    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        // pivot search
        let mut pivot_row = col;
        let mut pivot_val = a.at(col, col).abs();
        for r in (col + 1)..n {
            let v = a.at(r, col).abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val < TINY {
            return None;
        }
        if pivot_row != col {
            for c in 0..n {
                let tmp = a.at(col, c);
                *a.at_mut(col, c) = a.at(pivot_row, c);
                *a.at_mut(pivot_row, c) = tmp;
            }
            perm.swap(col, pivot_row);
            b.swap(col, pivot_row);
        }
        let inv_p = 1.0 / a.at(col, col);
        for r in (col + 1)..n {
            let factor = a.at(r, col) * inv_p;
            if factor == 0.0 {
                continue;
            }
            *a.at_mut(r, col) = factor;
            for c in (col + 1)..n {
                let v = a.at(col, c);
                *a.at_mut(r, c) -= factor * v;
            }
            b[r] -= factor * b[col];
        }
    }

    // back substitution
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in (r + 1)..n {
            acc -= a.at(r, c) * x[c];
        }
        x[r] = acc / a.at(r, r);
    }
    Some(x)
}
