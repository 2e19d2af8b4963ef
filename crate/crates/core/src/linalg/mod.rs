//! Dense linear algebra used by every other module.

mod decomp;
mod matrix;

pub use decomp::{
    cholesky, cholesky_condition, solve_lower, solve_lower_transposed, svd, sym_eig,
    EigenDecomposition, SvdResult,
};
pub use matrix::{dot, norm, squared_distance, Matrix};

pub(crate) use decomp::{complement_vector, fix_sign};

use crate::error::{contract, Result};

/// `D×d` orthonormal basis of the top-`d` principal directions of the
/// mean-centered rows of `x` (`N×D`).
///
/// When `N < D` the eigenproblem is solved on the `N×N` Gram matrix instead
/// of the covariance. Directions with (numerically) zero variance are filled
/// with an arbitrary orthonormal complement and logged.
pub fn pca_basis(x: &Matrix, d: usize) -> Result<Matrix> {
    let (n, dim) = x.shape();
    if n < 2 {
        return Err(contract(format!("pca_basis needs at least 2 rows, got {n}")));
    }
    let max_d = (n - 1).min(dim);
    if d == 0 || d > max_d {
        return Err(contract(format!(
            "pca dimension {d} out of range 1..={max_d} for {n}x{dim} data"
        )));
    }
    let (xc, _) = x.centered();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut degenerate = 0usize;

    if dim <= n {
        let cov = xc.t_matmul(&xc)?.scale(1.0 / (n - 1) as f64).symmetrized();
        let eig = sym_eig(&cov)?;
        let tol = 1e-12 * eig.values[0].abs().max(f64::MIN_POSITIVE);
        for j in 0..d {
            if eig.values[j] <= tol {
                degenerate += 1;
            }
            cols.push(eig.vectors.col(j));
        }
    } else {
        let gram = xc.matmul_t(&xc)?.symmetrized();
        let eig = sym_eig(&gram)?;
        let tol = 1e-12 * eig.values[0].abs().max(f64::MIN_POSITIVE);
        for j in 0..d {
            let lambda = eig.values[j];
            let mut col = None;
            if lambda > tol {
                let u = Matrix::column(&eig.vectors.col(j));
                let mut c = xc.t_matmul(&u)?.into_vec();
                let s = lambda.sqrt();
                c.iter_mut().for_each(|v| *v /= s);
                col = Some(c);
            }
            match col {
                Some(c) => cols.push(c),
                None => {
                    degenerate += 1;
                    cols.push(complement_vector(dim, &cols)?);
                }
            }
        }
    }
    if degenerate > 0 {
        log::warn!("pca_basis: {degenerate} of {d} directions have zero variance; padded with complement vectors");
    }

    let mut basis = Matrix::zeros(dim, d);
    for (j, mut c) in cols.into_iter().enumerate() {
        fix_sign(&mut c);
        basis.set_col(j, &c);
    }
    Ok(basis)
}

/// `H = I − (1/n)·1·1ᵀ`.
pub fn centering_matrix(n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(contract("centering_matrix needs n >= 1"));
    }
    let off = 1.0 / n as f64;
    Ok(Matrix::from_fn(n, n, |i, j| if i == j { 1.0 - off } else { -off }))
}

/// Proximal operator of `tau·|x|`: `sign(x)·max(|x| − tau, 0)`.
pub fn soft_threshold(x: f64, tau: f64) -> Result<f64> {
    if tau < 0.0 || tau.is_nan() {
        return Err(contract(format!("soft_threshold needs tau >= 0, got {tau}")));
    }
    Ok(shrink(x, tau))
}

/// Unchecked soft-threshold; `tau` must be non-negative.
#[inline]
pub(crate) fn shrink(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}
