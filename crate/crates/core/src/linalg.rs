//! Small dense linear-algebra helpers shared by the estimator, barrier and
//! filter code. Everything works on `nalgebra` dynamic matrices because the
//! plant dimensions come from configuration.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Tolerance used when checking that a covariance is positive semidefinite.
pub const PSD_TOL: f64 = 1e-9;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Symmetrize and zero out any negative eigenvalues.
pub fn clip_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrize(m);
    if sym.nrows() == 0 {
        return sym;
    }
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return sym;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&clipped) * v.transpose()))
}

/// Factor `L` with `L Lᵀ = m` for a symmetric PSD `m` (singular allowed).
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 {
        return m.clone();
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

pub fn check_square(context: &'static str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::dim(context, format!("{n}x{n}"), shape(m)));
    }
    Ok(())
}

pub fn check_shape(context: &'static str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::dim(context, format!("{rows}x{cols}"), shape(m)));
    }
    Ok(())
}

pub fn check_len(context: &'static str, v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::dim(
            context,
            format!("length {n}"),
            format!("length {}", v.len()),
        ));
    }
    Ok(())
}

/// Symmetric (up to a relative tolerance) with no eigenvalue below `-PSD_TOL`.
pub fn check_psd(context: &'static str, m: &DMatrix<f64>) -> Result<()> {
    let scale = m.abs().max().max(1.0);
    if max_asymmetry(m) > 1e-9 * scale {
        return Err(Error::Config(format!("{context} is not symmetric")));
    }
    let min = min_sym_eigenvalue(m);
    if min < -PSD_TOL * scale {
        return Err(Error::Config(format!(
            "{context} is not positive semidefinite (min eigenvalue {min:.3e})"
        )));
    }
    Ok(())
}

pub fn check_pd(context: &'static str, m: &DMatrix<f64>) -> Result<()> {
    check_psd(context, m)?;
    let min = min_sym_eigenvalue(m);
    if min <= 0.0 {
        return Err(Error::Config(format!(
            "{context} must be positive definite (min eigenvalue {min:.3e})"
        )));
    }
    Ok(())
}

pub fn shape(m: &DMatrix<f64>) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

/// Build a matrix from row-major nested rows, rejecting ragged input.
pub fn from_rows(context: &'static str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::dim(
            context,
            format!("{ncols} columns in every row"),
            format!("a row of {}", bad.len()),
        ));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}
