//! Small dense helpers on top of nalgebra.

use nalgebra::DMatrix;

use crate::exterior::C64;

pub(crate) fn complexify(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

pub(crate) fn max_abs_c(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.norm()))
}

/// Singular values in decreasing order together with the matching right
/// singular vectors (as columns).
pub(crate) fn svd_sorted(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = m.ncols();
    // Pad short-and-wide inputs so V is square.
    let padded;
    let a = if m.nrows() < n {
        padded = {
            let mut p = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
            p.rows_mut(0, m.nrows()).copy_from(m);
            p
        };
        &padded
    } else {
        m
    };
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = DMatrix::from_element(n, order.len(), C64::new(0.0, 0.0));
    for (col, &i) in order.iter().enumerate() {
        for r in 0..n {
            v[(r, col)] = vt[(i, r)].conj();
        }
    }
    (s, v)
}

/// Null space by singular-value thresholding relative to the largest value.
pub(crate) fn null_space(m: &DMatrix<C64>, rel_tol: f64) -> DMatrix<C64> {
    let (s, v) = svd_sorted(m);
    let thr = rel_tol * s.first().copied().unwrap_or(0.0);
    let rank = s.iter().filter(|&&x| x > thr).count();
    v.columns(rank, v.ncols() - rank).into_owned()
}

/// Numerical rank relative to the largest singular value.
pub(crate) fn rank(m: &DMatrix<C64>, rel_tol: f64) -> usize {
    let (s, _) = svd_sorted(m);
    let thr = rel_tol * s.first().copied().unwrap_or(0.0);
    s.iter().filter(|&&x| x > thr).count()
}
