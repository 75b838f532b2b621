//! Small dense helpers shared across modules.

use nalgebra::{DMatrix, SymmetricEigen};

/// Assembles a block matrix from rows of blocks. Blocks in a row must share
/// their row count and blocks in a column their column count.
pub fn block(rows: &[Vec<&DMatrix<f64>>]) -> DMatrix<f64> {
    let heights: Vec<usize> = rows.iter().map(|r| r[0].nrows()).collect();
    let widths: Vec<usize> = rows[0].iter().map(|b| b.ncols()).collect();
    let mut out = DMatrix::zeros(heights.iter().sum(), widths.iter().sum());
    let mut r0 = 0;
    for (row, h) in rows.iter().zip(&heights) {
        let mut c0 = 0;
        for (b, w) in row.iter().zip(&widths) {
            assert_eq!(b.shape(), (*h, *w), "block shape mismatch");
            out.view_mut((r0, c0), (*h, *w)).copy_from(b);
            c0 += w;
        }
        r0 += h;
    }
    out
}

pub fn eye(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::zeros(r, c)
}

/// max(1, ‖m‖_F), the scale used by relative tolerances.
pub fn scale(m: &DMatrix<f64>) -> f64 {
    m.norm().max(1.0)
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * scale(m)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    *sym_eigenvalues(m).last().unwrap_or(&f64::NEG_INFINITY)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    *sym_eigenvalues(m).first().unwrap_or(&f64::INFINITY)
}

/// Rank with singular values below `rel * σ_max` treated as zero.
pub fn numerical_rank(m: &DMatrix<f64>, rel: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel * top).count()
}
