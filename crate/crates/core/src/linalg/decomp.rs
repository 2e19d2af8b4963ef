//! Symmetric eigendecomposition (cyclic Jacobi), thin SVD, and Cholesky.

use super::matrix::{dot, Matrix};
use crate::error::{contract, Error, Result};

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenpairs of a symmetric matrix. `values` are sorted descending and
/// column `i` of `vectors` belongs to `values[i]`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for j in 0..us.cols() {
            let s = self.singular_values[j];
            for i in 0..us.rows() {
                us[(i, j)] *= s;
            }
        }
        us.matmul_t(&self.v).expect("svd factors are conformant")
    }
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eig(a: &Matrix) -> Result<EigenDecomposition> {
    if !a.is_square() {
        return Err(contract(format!("sym_eig needs a square matrix, got {:?}", a.shape())));
    }
    if !a.is_symmetric(SYMMETRY_TOL) {
        return Err(contract("sym_eig needs a symmetric matrix"));
    }
    let n = a.rows();
    let mut m = a.symmetrized();
    let mut v = Matrix::identity(n);

    let scale = m.frobenius_norm();
    let threshold = JACOBI_TOL * scale.max(f64::MIN_POSITIVE);
    let mut converged = n < 2 || scale == 0.0;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s, t, apq);
            }
        }
        converged = off_diagonal_norm(&m) <= threshold;
    }
    if !converged {
        return Err(Error::Numeric {
            message: format!("Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps"),
            condition: f64::INFINITY,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.col(src);
        fix_sign(&mut col);
        vectors.set_col(dst, &col);
    }
    Ok(EigenDecomposition { values, vectors })
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64, t: f64, apq: f64) {
    let n = m.rows();
    m[(p, p)] -= t * apq;
    m[(q, q)] += t * apq;
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        m[(k, p)] = new_kp;
        m[(p, k)] = new_kp;
        m[(k, q)] = new_kq;
        m[(q, k)] = new_kq;
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

fn off_diagonal_norm(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += m[(i, j)] * m[(i, j)];
            }
        }
    }
    sum.sqrt()
}

/// Flips `col` so its largest-magnitude entry is positive (first one on ties).
pub(crate) fn fix_sign(col: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in col.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        col.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Thin SVD: `a = u · diag(s) · vᵀ` with `k = min(rows, cols)` columns in `u` and `v`.
pub fn svd(a: &Matrix) -> Result<SvdResult> {
    if !a.all_finite() {
        return Err(contract("svd input has non-finite entries"));
    }
    if a.rows() < a.cols() {
        let t = svd_tall(&a.transpose())?;
        // Swap roles, then re-apply the sign convention on the new u.
        let mut u = t.v;
        let mut v = t.u;
        for j in 0..u.cols() {
            let mut col = u.col(j);
            let before = col.clone();
            fix_sign(&mut col);
            if col != before {
                u.set_col(j, &col);
                let flipped: Vec<f64> = v.col(j).iter().map(|x| -x).collect();
                v.set_col(j, &flipped);
            }
        }
        return Ok(SvdResult {
            u,
            singular_values: t.singular_values,
            v,
        });
    }
    svd_tall(a)
}

fn svd_tall(a: &Matrix) -> Result<SvdResult> {
    let (m, n) = a.shape();
    let gram = a.t_matmul(a)?.symmetrized();
    let eig = sym_eig(&gram)?;
    let singular_values: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let s_max = singular_values.first().copied().unwrap_or(0.0);
    let cutoff = s_max * 1e-12 * (m.max(n) as f64);

    let mut v = eig.vectors;
    let av = a.matmul(&v)?;
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let s = singular_values[j];
        let col = if s > cutoff && s > 0.0 {
            let c: Vec<f64> = av.col(j).iter().map(|x| x / s).collect();
            orthonormalize_against(c, &u_cols)
        } else {
            None
        };
        let col = match col {
            Some(c) => c,
            None => complement_vector(m, &u_cols)?,
        };
        u_cols.push(col);
    }

    let mut u = Matrix::zeros(m, n);
    for (j, mut col) in u_cols.into_iter().enumerate() {
        let before = col.clone();
        fix_sign(&mut col);
        if col != before {
            let flipped: Vec<f64> = v.col(j).iter().map(|x| -x).collect();
            v.set_col(j, &flipped);
        }
        u.set_col(j, &col);
    }
    Ok(SvdResult {
        u,
        singular_values,
        v,
    })
}

/// Modified Gram-Schmidt of `c` against `basis`; `None` if nothing survives.
fn orthonormalize_against(mut c: Vec<f64>, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let start = dot(&c, &c).sqrt();
    for _ in 0..2 {
        for b in basis {
            let proj = dot(&c, b);
            c.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
    }
    let nrm = dot(&c, &c).sqrt();
    if nrm <= 1e-10 * start.max(f64::MIN_POSITIVE) || nrm == 0.0 {
        return None;
    }
    c.iter_mut().for_each(|x| *x /= nrm);
    Some(c)
}

/// A unit vector of length `dim` orthogonal to every vector in `basis`.
pub(crate) fn complement_vector(dim: usize, basis: &[Vec<f64>]) -> Result<Vec<f64>> {
    for k in 0..dim {
        let mut e = vec![0.0; dim];
        e[k] = 1.0;
        if let Some(c) = orthonormalize_against(e, basis) {
            return Ok(c);
        }
    }
    Err(contract(format!(
        "no orthogonal complement: basis already spans R^{dim}"
    )))
}

/// Lower-triangular Cholesky factor `l` with `a = l·lᵀ`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(contract(format!("cholesky needs a square matrix, got {:?}", a.shape())));
    }
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            let diag_max = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
            return Err(Error::Numeric {
                message: format!("matrix not positive definite at pivot {j}"),
                condition: if d > 0.0 { diag_max / d } else { f64::INFINITY },
            });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Rough 2-norm condition estimate from a Cholesky factor: `(max l_ii / min l_ii)²`.
pub fn cholesky_condition(l: &Matrix) -> f64 {
    let diag: Vec<f64> = (0..l.rows()).map(|i| l[(i, i)]).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    (max / min).powi(2)
}

/// Solves `l · x = b` for lower-triangular `l`.
pub fn solve_lower(l: &Matrix, b: &Matrix) -> Result<Matrix> {
    if l.rows() != b.rows() || !l.is_square() {
        return Err(Error::Shape {
            op: "solve_lower",
            left: l.shape(),
            right: b.shape(),
        });
    }
    let n = l.rows();
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// Solves `lᵀ · x = b` for lower-triangular `l`.
pub fn solve_lower_transposed(l: &Matrix, b: &Matrix) -> Result<Matrix> {
    if l.rows() != b.rows() || !l.is_square() {
        return Err(Error::Shape {
            op: "solve_lower_transposed",
            left: l.shape(),
            right: b.shape(),
        });
    }
    let n = l.rows();
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let a = random_matrix(n, n, seed);
        a.add(&a.transpose()).unwrap()
    }

    fn orthonormality_error(q: &Matrix) -> f64 {
        let qtq = q.t_matmul(q).unwrap();
        qtq.sub(&Matrix::identity(q.cols())).unwrap().max_abs()
    }

    #[test]
    fn eig_of_diagonal_and_identity() {
        let d = Matrix::from_diag(&[3.0, 1.0, 2.0]);
        let e = sym_eig(&d).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(e.vectors.col(0), vec![1.0, 0.0, 0.0]);
        assert_eq!(e.vectors.col(1), vec![0.0, 0.0, 1.0]);
        assert_eq!(e.vectors.col(2), vec![0.0, 1.0, 0.0]);

        let e = sym_eig(&Matrix::identity(5)).unwrap();
        assert!(e.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn eig_of_two_by_two_hand_case() {
        // det([[2-l,1],[1,2-l]]) = (2-l)^2 - 1 = 0  =>  l = 3, 1
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = sym_eig(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = e.vectors.col(0);
        let v1 = e.vectors.col(1);
        assert!((v0[0] - h).abs() < 1e-12 && (v0[1] - h).abs() < 1e-12);
        assert!((v1[0].abs() - h).abs() < 1e-12 && (v1[0] + v1[1]).abs() < 1e-12);
    }

    #[test]
    fn eig_rejects_non_square_and_asymmetric() {
        assert!(matches!(sym_eig(&Matrix::zeros(2, 3)), Err(Error::Contract(_))));
        let a = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&a), Err(Error::Contract(_))));
    }

    #[test]
    fn eig_random_pairs_trace_and_orthonormality() {
        for seed in 0..5 {
            let a = random_symmetric(12, seed);
            let e = sym_eig(&a).unwrap();
            assert!(orthonormality_error(&e.vectors) < 1e-8);
            let norm = a.frobenius_norm();
            for (i, &l) in e.values.iter().enumerate() {
                let v = Matrix::column(&e.vectors.col(i));
                let av = a.matmul(&v).unwrap();
                let lv = v.scale(l);
                assert!(av.sub(&lv).unwrap().max_abs() < 1e-7 * norm);
            }
            let sum: f64 = e.values.iter().sum();
            assert!((sum - a.trace()).abs() < 1e-8 * norm.max(1.0));
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn eig_product_matches_determinant() {
        let a = Matrix::from_rows(&[[4.0, 1.0, 0.5], [1.0, 3.0, -1.0], [0.5, -1.0, 2.0]]).unwrap();
        // det by cofactor expansion
        let det = 4.0 * (3.0 * 2.0 - 1.0) - 1.0 * (1.0 * 2.0 + 0.5) + 0.5 * (-1.0 - 1.5);
        let e = sym_eig(&a).unwrap();
        let prod: f64 = e.values.iter().product();
        assert!((prod - det).abs() < 1e-9);
        let b = Matrix::from_rows(&[[5.0, 2.0], [2.0, -1.0]]).unwrap();
        let prod: f64 = sym_eig(&b).unwrap().values.iter().product();
        assert!((prod - (-9.0)).abs() < 1e-9);
    }

    #[test]
    fn svd_diagonal_zero_and_random() {
        let d = Matrix::from_diag(&[2.0, 1.0]);
        let s = svd(&d).unwrap();
        assert_eq!(s.singular_values, vec![2.0, 1.0]);

        let z = svd(&Matrix::zeros(3, 2)).unwrap();
        assert!(z.singular_values.iter().all(|&v| v == 0.0));
        assert!(orthonormality_error(&z.u) < 1e-12);

        let a = random_matrix(5, 3, 11);
        let s = svd(&a).unwrap();
        assert!(s.reconstruct().sub(&a).unwrap().max_abs() < 1e-8);
        assert!(orthonormality_error(&s.u) < 1e-8);
        assert!(orthonormality_error(&s.v) < 1e-8);
    }

    #[test]
    fn svd_wide_and_rank_deficient() {
        let a = random_matrix(3, 7, 2);
        let s = svd(&a).unwrap();
        assert_eq!(s.u.shape(), (3, 3));
        assert_eq!(s.v.shape(), (7, 3));
        assert!(s.reconstruct().sub(&a).unwrap().max_abs() < 1e-8);

        let col = random_matrix(6, 1, 3);
        let row = random_matrix(1, 4, 4);
        let r1 = col.matmul(&row).unwrap();
        let s = svd(&r1).unwrap();
        assert!(s.singular_values[1..].iter().all(|&v| v < 1e-7));
        assert!(orthonormality_error(&s.u) < 1e-8);
        assert!(s.reconstruct().sub(&r1).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn svd_sign_convention_positive_largest_entry() {
        let a = random_matrix(6, 4, 9);
        let s = svd(&a).unwrap();
        for j in 0..s.u.cols() {
            let col = s.u.col(j);
            let big = col.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn cholesky_solves() {
        let b = random_matrix(5, 5, 1);
        let spd = b.t_matmul(&b).unwrap().add(&Matrix::identity(5)).unwrap();
        let l = cholesky(&spd).unwrap();
        assert!(l.matmul_t(&l).unwrap().sub(&spd).unwrap().max_abs() < 1e-10);
        let rhs = random_matrix(5, 2, 5);
        let y = solve_lower(&l, &rhs).unwrap();
        let x = solve_lower_transposed(&l, &y).unwrap();
        assert!(spd.matmul(&x).unwrap().sub(&rhs).unwrap().max_abs() < 1e-9);
        assert!(cholesky_condition(&l) >= 1.0);

        let not_pd = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&not_pd), Err(Error::Numeric { .. })));
    }
}
