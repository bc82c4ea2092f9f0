//! Small dense helpers shared by the data, reduction and solver modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{invalid, Result};

/// Singular values below this are treated as zero:
/// `max(rows, cols) · σ_max · ε_machine`.
pub fn rank_tolerance(singular_values: &[f64], rows: usize, cols: usize) -> f64 {
    let smax = singular_values.iter().copied().fold(0.0, f64::max);
    (rows.max(cols) as f64) * smax * f64::EPSILON
}

pub fn numerical_rank(mat: &DMatrix<f64>) -> usize {
    if mat.is_empty() {
        return 0;
    }
    let sv = SVD::new(mat.clone(), false, false).singular_values;
    let tol = rank_tolerance(sv.as_slice(), mat.nrows(), mat.ncols());
    sv.iter().filter(|s| **s > tol).count()
}

pub fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        debug_assert_eq!(b.ncols(), cols);
        out.rows_mut(at, b.nrows()).copy_from(*b);
        at += b.nrows();
    }
    out
}

/// Stacks equally sized vectors as the columns of a matrix.
pub fn columns_to_matrix(cols: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let Some(first) = cols.first() else {
        return Err(invalid!("sequence must hold at least one vector"));
    };
    let d = first.len();
    if let Some((i, c)) = cols.iter().enumerate().find(|(_, c)| c.len() != d) {
        return Err(invalid!(
            "vector {i} has dimension {} but vector 0 has {d}",
            c.len()
        ));
    }
    Ok(DMatrix::from_fn(d, cols.len(), |i, j| cols[j][i]))
}

/// Computes `(I_N ⊗ W) · M` where `M` has `N` block rows of height `W.nrows()`.
pub fn block_diag_mul(weight: &DMatrix<f64>, mat: &DMatrix<f64>) -> DMatrix<f64> {
    let b = weight.nrows();
    debug_assert_eq!(mat.nrows() % b, 0);
    let mut out = DMatrix::zeros(mat.nrows(), mat.ncols());
    for blk in 0..mat.nrows() / b {
        let prod = weight * mat.rows(blk * b, b);
        out.rows_mut(blk * b, b).copy_from(&prod);
    }
    out
}

pub fn block_diag_mul_vec(weight: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let b = weight.nrows();
    debug_assert_eq!(v.len() % b, 0);
    let mut out = DVector::zeros(v.len());
    for blk in 0..v.len() / b {
        let prod = weight * v.rows(blk * b, b);
        out.rows_mut(blk * b, b).copy_from(&prod);
    }
    out
}

/// Largest absolute asymmetry `|a_ij − a_ji|`.
pub fn asymmetry(mat: &DMatrix<f64>) -> f64 {
    let n = mat.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((mat[(i, j)] - mat[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(mat: &mut DMatrix<f64>) {
    let n = mat.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (mat[(i, j)] + mat[(j, i)]);
            mat[(i, j)] = avg;
            mat[(j, i)] = avg;
        }
    }
}

/// True if `mat` is square, symmetric within `tol` (relative to its scale)
/// and has no eigenvalue below `-tol · scale`.
pub fn is_symmetric_psd(mat: &DMatrix<f64>, tol: f64) -> bool {
    if !mat.is_square() {
        return false;
    }
    let scale = mat.amax().max(1.0);
    if asymmetry(mat) > tol * scale {
        return false;
    }
    let mut sym = mat.clone();
    symmetrize(&mut sym);
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .all(|&e| e >= -tol * scale)
}

pub fn concat(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

/// Kronecker-style repetition of a vector: `[v; v; …]` (`times` copies).
pub fn repeat(v: &DVector<f64>, times: usize) -> DVector<f64> {
    DVector::from_fn(v.len() * times, |i, _| v[i % v.len()])
}
