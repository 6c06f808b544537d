//! Dense elimination helpers for rank and nullspace computations.

use nalgebra::DMatrix;

/// Reduced row echelon form with partial pivoting.
#[derive(Debug, Clone)]
pub struct Rref {
    pub rank: usize,
    pub pivot_cols: Vec<usize>,
    rows: Vec<Vec<f64>>,
    ncols: usize,
}

impl Rref {
    /// Row-reduce `a`; pivots with magnitude below `tol` (relative to the largest
    /// entry of `a`) are treated as zero.
    pub fn new(a: &DMatrix<f64>, tol: f64) -> Rref {
        let (nrows, ncols) = a.shape();
        let scale = a.amax().max(f64::MIN_POSITIVE);
        let mut rows: Vec<Vec<f64>> = (0..nrows).map(|r| a.row(r).iter().copied().collect()).collect();
        let mut pivot_cols = Vec::new();
        let mut r = 0;
        for c in 0..ncols {
            if r == nrows {
                break;
            }
            let (best, val) = (r..nrows)
                .map(|i| (i, rows[i][c].abs()))
                .fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if val <= tol * scale {
                continue;
            }
            rows.swap(r, best);
            let inv = 1.0 / rows[r][c];
            rows[r].iter_mut().skip(c).for_each(|x| *x *= inv);
            let pivot_row = std::mem::take(&mut rows[r]);
            for (i, row) in rows.iter_mut().enumerate() {
                if i == r {
                    continue;
                }
                let f = row[c];
                if f != 0.0 {
                    for (x, p) in row[c..].iter_mut().zip(&pivot_row[c..]) {
                        *x -= f * p;
                    }
                }
            }
            rows[r] = pivot_row;
            pivot_cols.push(c);
            r += 1;
        }
        rows.truncate(r);
        Rref { rank: r, pivot_cols, rows, ncols }
    }

    /// Basis of the nullspace, one column per free variable.
    pub fn nullspace(&self) -> DMatrix<f64> {
        let mut is_pivot = vec![false; self.ncols];
        self.pivot_cols.iter().for_each(|&c| is_pivot[c] = true);
        let free: Vec<usize> = (0..self.ncols).filter(|&c| !is_pivot[c]).collect();
        let mut out = DMatrix::zeros(self.ncols, free.len());
        for (k, &f) in free.iter().enumerate() {
            out[(f, k)] = 1.0;
            for (row, &pc) in self.rows.iter().zip(&self.pivot_cols) {
                out[(pc, k)] = -row[f];
            }
        }
        out
    }
}

/// Numerical rank of a symmetric positive semidefinite matrix from its spectrum.
pub fn psd_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.amax();
    eig.eigenvalues.iter().filter(|&&l| l > rel_tol * max).count()
}
