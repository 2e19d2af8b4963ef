//! Shallow domain-adaptation baselines (subspace alignment, geodesic flow
//! kernel, transfer component analysis), a 1-NN classifier, and parameter
//! sweeps over each method.
//!
//! SA and GFK center each domain on its own mean before projecting.

mod sweep;

pub use sweep::{
    best_row, gfk_grid, sa_grid, sweep_gfk, sweep_sa, sweep_tca, sweep_to_csv, tca_grid,
    SweepData, SweepRow, TCA_DEFAULT_COMPONENTS,
};

use crate::error::{contract, Error, Result};
use crate::linalg::{
    centering_matrix, cholesky, cholesky_condition, pca_basis, solve_lower,
    solve_lower_transposed, squared_distance, svd, sym_eig, Matrix,
};

const ORTHONORMAL_TOL: f64 = 1e-8;
const ZERO_ANGLE: f64 = 1e-8;
const TCA_RIDGE: f64 = 1e-8;

/// `D×d` basis with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: Matrix,
}

impl Subspace {
    pub fn new(basis: Matrix) -> Result<Self> {
        let gram = basis.t_matmul(&basis)?;
        let err = gram.sub(&Matrix::identity(basis.cols()))?.max_abs();
        if err > ORTHONORMAL_TOL {
            return Err(contract(format!("basis columns are not orthonormal (error {err:.2e})")));
        }
        Ok(Self { basis })
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.rows()
    }

    /// `P·Pᵀ`.
    pub fn projector(&self) -> Matrix {
        self.basis.matmul_t(&self.basis).expect("conformant")
    }
}

fn check_same_width(xs: &Matrix, xt: &Matrix) -> Result<()> {
    if xs.cols() != xt.cols() {
        return Err(Error::Shape {
            op: "domain features",
            left: xs.shape(),
            right: xt.shape(),
        });
    }
    Ok(())
}

/// Subtracts `mean` from every row.
fn center_with(x: &Matrix, mean: &[f64]) -> Result<Matrix> {
    if mean.len() != x.cols() {
        return Err(contract(format!("mean has {} entries for {} columns", mean.len(), x.cols())));
    }
    Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] - mean[j]))
}

#[derive(Debug, Clone)]
pub struct SaModel {
    pub ps: Subspace,
    pub pt: Subspace,
    /// `psᵀ·pt`.
    pub m: Matrix,
    pub source_mean: Vec<f64>,
    pub target_mean: Vec<f64>,
}

impl SaModel {
    /// `(xs − ms)·ps·m`.
    pub fn transform_source(&self, xs: &Matrix) -> Result<Matrix> {
        center_with(xs, &self.source_mean)?
            .matmul(self.ps.basis())?
            .matmul(&self.m)
    }

    /// `(xt − mt)·pt`.
    pub fn transform_target(&self, xt: &Matrix) -> Result<Matrix> {
        center_with(xt, &self.target_mean)?.matmul(self.pt.basis())
    }
}

/// Subspace alignment with `d`-dimensional PCA subspaces.
pub fn sa_fit(xs: &Matrix, xt: &Matrix, d: usize) -> Result<SaModel> {
    check_same_width(xs, xt)?;
    let ps = Subspace::new(pca_basis(xs, d)?)?;
    let pt = Subspace::new(pca_basis(xt, d)?)?;
    let m = ps.basis().t_matmul(pt.basis())?;
    Ok(SaModel {
        ps,
        pt,
        m,
        source_mean: xs.column_means(),
        target_mean: xt.column_means(),
    })
}

/// `(λ1, λ2, λ3)` for principal angle `theta`, with the `θ → 0` limits below 1e-8.
pub fn gfk_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta < ZERO_ANGLE {
        return (2.0, 0.0, 0.0);
    }
    let t2 = 2.0 * theta;
    let s = t2.sin() / t2;
    (1.0 + s, (t2.cos() - 1.0) / t2, 1.0 - s)
}

/// Symmetric PSD `D×D` kernel; similarity is `xᵀ·G·z`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicKernel {
    g: Matrix,
}

impl GeodesicKernel {
    pub fn matrix(&self) -> &Matrix {
        &self.g
    }

    /// `G^{1/2}`, so that `‖G^{1/2}(x − z)‖²` is the kernel distance.
    /// Tiny negative eigenvalues from rounding are clamped to zero.
    pub fn sqrt(&self) -> Result<Matrix> {
        let eig = sym_eig(&self.g.symmetrized())?;
        let n = self.g.rows();
        let roots: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
        let scaled = Matrix::from_fn(n, n, |i, j| eig.vectors[(i, j)] * roots[j]);
        Ok(scaled.matmul_t(&eig.vectors)?.symmetrized())
    }
}

/// Orthonormal basis of the complement of `ps`, from the eigenvectors of
/// `I − ps·psᵀ` whose eigenvalue exceeds 0.5.
fn complement_basis(ps: &Subspace) -> Result<Matrix> {
    let dim = ps.ambient_dim();
    let resid = Matrix::identity(dim).sub(&ps.projector())?.symmetrized();
    let eig = sym_eig(&resid)?;
    let keep = eig.values.iter().filter(|&&v| v > 0.5).count();
    Ok(eig.vectors.leading_cols(keep))
}

/// Closed-form geodesic flow kernel between two equal-dimension subspaces.
pub fn gfk_fit(ps: &Subspace, pt: &Subspace) -> Result<GeodesicKernel> {
    let (dim, d) = (ps.ambient_dim(), ps.dim());
    if pt.dim() != d || pt.ambient_dim() != dim {
        return Err(contract(format!(
            "subspaces differ: {dim}x{d} vs {}x{}",
            pt.ambient_dim(),
            pt.dim()
        )));
    }
    if d >= dim {
        return Err(contract(format!("gfk needs d < D, got d={d}, D={dim}")));
    }
    let rs = complement_basis(ps)?;
    let cross = ps.basis().t_matmul(pt.basis())?;
    let dec = svd(&cross)?;
    let (u1, v) = (&dec.u, &dec.v);
    let thetas: Vec<f64> = dec.singular_values.iter().map(|s| s.clamp(-1.0, 1.0).acos()).collect();

    // U2 = −Rsᵀ·Pt·V·Σ⁻¹, zero columns where the angle vanishes.
    let rpv = rs.t_matmul(pt.basis())?.matmul(v)?;
    let mut u2 = Matrix::zeros(rs.cols(), d);
    for (j, &theta) in thetas.iter().enumerate() {
        if theta >= ZERO_ANGLE {
            let sin = theta.sin();
            for i in 0..rs.cols() {
                u2[(i, j)] = -rpv[(i, j)] / sin;
            }
        }
    }
    let a = ps.basis().matmul(u1)?;
    let b = rs.matmul(&u2)?;
    let mut g = Matrix::zeros(dim, dim);
    for (j, &theta) in thetas.iter().enumerate() {
        let (l1, l2, l3) = gfk_coefficients(theta);
        for r in 0..dim {
            let (ar, br) = (a[(r, j)], b[(r, j)]);
            for c in 0..dim {
                let (ac, bc) = (a[(c, j)], b[(c, j)]);
                g[(r, c)] += l1 * ar * ac + l2 * (ar * bc + br * ac) + l3 * br * bc;
            }
        }
    }
    Ok(GeodesicKernel { g: g.symmetrized() })
}

/// GFK with PCA subspaces of each domain, plus the per-domain means used to
/// map features into kernel space.
#[derive(Debug, Clone)]
pub struct GfkModel {
    pub kernel: GeodesicKernel,
    pub root: Matrix,
    pub source_mean: Vec<f64>,
    pub target_mean: Vec<f64>,
}

impl GfkModel {
    pub fn fit(xs: &Matrix, xt: &Matrix, d: usize) -> Result<Self> {
        check_same_width(xs, xt)?;
        let ps = Subspace::new(pca_basis(xs, d)?)?;
        let pt = Subspace::new(pca_basis(xt, d)?)?;
        let kernel = gfk_fit(&ps, &pt)?;
        let root = kernel.sqrt()?;
        Ok(Self {
            kernel,
            root,
            source_mean: xs.column_means(),
            target_mean: xt.column_means(),
        })
    }

    pub fn map_source(&self, xs: &Matrix) -> Result<Matrix> {
        center_with(xs, &self.source_mean)?.matmul(&self.root)
    }

    pub fn map_target(&self, xt: &Matrix) -> Result<Matrix> {
        center_with(xt, &self.target_mean)?.matmul(&self.root)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Linear,
}

/// Transfer component analysis with a linear kernel.
#[derive(Debug, Clone)]
pub struct TcaModel {
    pub kernel: KernelKind,
    pub mu: f64,
    /// Stacked source-then-target training data.
    pub data: Matrix,
    pub source_count: usize,
    /// `N×m` transfer components; columns have unit norm.
    pub components: Matrix,
    /// `K·W` for the stacked training data.
    pub embedding: Matrix,
}

impl TcaModel {
    pub fn source_embedding(&self) -> Matrix {
        let idx: Vec<usize> = (0..self.source_count).collect();
        self.embedding.select_rows(&idx)
    }

    pub fn target_embedding(&self) -> Matrix {
        let idx: Vec<usize> = (self.source_count..self.embedding.rows()).collect();
        self.embedding.select_rows(&idx)
    }

    /// Embeds new points: `K(x, data)·W`.
    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        x.matmul_t(&self.data)?.matmul(&self.components)
    }
}

/// MMD coefficients: `1/Ns²` within source, `1/Nt²` within target, `−1/(Ns·Nt)` across.
pub fn mmd_matrix(ns: usize, nt: usize) -> Matrix {
    let n = ns + nt;
    let e = |i: usize| if i < ns { 1.0 / ns as f64 } else { -1.0 / nt as f64 };
    Matrix::from_fn(n, n, |i, j| e(i) * e(j))
}

/// Kernel-dependent part of TCA, shared by every `mu`.
///
/// Nonzero eigenvalues of the TCA problem have eigenvectors inside
/// range(K), so the problem is solved exactly on that `r`-dimensional range
/// with `K = Q·S·Qᵀ`. For the linear kernel `r ≤ D`, and `Q` comes from the
/// smaller of `XᵀX` and `X·Xᵀ`.
#[derive(Debug, Clone)]
pub struct TcaProblem {
    data: Matrix,
    source_count: usize,
    q: Matrix,
    s: Vec<f64>,
    lq: Matrix,
    hq: Matrix,
}

impl TcaProblem {
    pub fn new(xs: &Matrix, xt: &Matrix) -> Result<Self> {
        check_same_width(xs, xt)?;
        let (ns, nt) = (xs.rows(), xt.rows());
        if ns == 0 || nt == 0 {
            return Err(contract("tca needs samples in both domains"));
        }
        let n = ns + nt;
        let data = xs.vstack(xt)?;
        let (q, s) = kernel_range(&data)?;
        let lq = q.t_matmul(&mmd_matrix(ns, nt))?.matmul(&q)?.symmetrized();
        let hq = q.t_matmul(&centering_matrix(n)?)?.matmul(&q)?.symmetrized();
        Ok(Self {
            data,
            source_count: ns,
            q,
            s,
            lq,
            hq,
        })
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// Top-`m` eigenvectors of `(K·L·K + μI + εI)⁻¹·K·H·K` with
    /// `ε = 1e-8·trace(K·L·K + μI)`, via
    /// `S·Hq·S·a = λ·(S·Lq·S + (μ + ε)·I)·a`, `W = Q·a`. `m` is clipped to the rank.
    pub fn solve(&self, mu: f64, m: usize) -> Result<TcaModel> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(contract(format!("tca needs mu > 0, got {mu}")));
        }
        let n = self.data.rows();
        if m == 0 || m > n {
            return Err(contract(format!("tca component count {m} out of range 1..={n}")));
        }
        let r = self.rank();
        let m = if m > r {
            log::warn!("tca: {m} components requested but the kernel has rank {r}; using {r}");
            r
        } else {
            m
        };
        let s = &self.s;
        let scale_both = |x: &Matrix| Matrix::from_fn(r, r, |i, j| s[i] * x[(i, j)] * s[j]);
        let mut left = scale_both(&self.lq).symmetrized();
        let eps = TCA_RIDGE * (left.trace() + n as f64 * mu);
        for i in 0..r {
            left[(i, i)] += mu + eps;
        }
        let right = scale_both(&self.hq).symmetrized();

        let chol = cholesky(&left).map_err(|e| match e {
            Error::Numeric { condition, .. } => Error::Numeric {
                message: "tca system is singular beyond the ridge".into(),
                condition,
            },
            other => other,
        })?;
        let cond = cholesky_condition(&chol);
        if !cond.is_finite() || cond > 1e14 {
            return Err(Error::Numeric {
                message: "tca system is too ill-conditioned".into(),
                condition: cond,
            });
        }
        // C⁻¹·right·C⁻ᵀ is symmetric; its eigenvectors y give a = C⁻ᵀ·y.
        let tmp = solve_lower(&chol, &right)?;
        let reduced = solve_lower(&chol, &tmp.transpose())?.symmetrized();
        let red = sym_eig(&reduced)?;
        let mut a = solve_lower_transposed(&chol, &red.vectors.leading_cols(m))?;
        // Q has orthonormal columns, so ‖Q·a‖ = ‖a‖.
        for j in 0..m {
            let mut col = a.col(j);
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            col.iter_mut().for_each(|v| *v /= norm);
            a.set_col(j, &col);
        }
        let components = self.q.matmul(&a)?;
        let sa = Matrix::from_fn(r, m, |i, j| s[i] * a[(i, j)]);
        let embedding = self.q.matmul(&sa)?;
        Ok(TcaModel {
            kernel: KernelKind::Linear,
            mu,
            data: self.data.clone(),
            source_count: self.source_count,
            components,
            embedding,
        })
    }
}

/// Orthonormal `Q` (`N×r`) and positive `S` with `X·Xᵀ = Q·diag(S)·Qᵀ`.
fn kernel_range(x: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let (n, dim) = x.shape();
    let primal = dim < n;
    let eig = if primal {
        sym_eig(&x.t_matmul(x)?.symmetrized())?
    } else {
        sym_eig(&x.matmul_t(x)?.symmetrized())?
    };
    let r = rank_of(&eig.values);
    if r == 0 {
        return Err(Error::Numeric {
            message: "kernel matrix is zero".into(),
            condition: f64::INFINITY,
        });
    }
    let values = eig.values[..r].to_vec();
    if !primal {
        return Ok((eig.vectors.leading_cols(r), values));
    }
    // u = X·v / √s
    let mut u = x.matmul(&eig.vectors.leading_cols(r))?;
    for (j, s) in values.iter().enumerate() {
        let root = s.sqrt();
        let mut col: Vec<f64> = u.col(j).iter().map(|c| c / root).collect();
        crate::linalg::fix_sign(&mut col);
        u.set_col(j, &col);
    }
    Ok((u, values))
}

fn rank_of(values: &[f64]) -> usize {
    let tol = 1e-10 * values.first().map_or(0.0, |v| v.abs()).max(f64::MIN_POSITIVE);
    values.iter().filter(|&&v| v > tol).count()
}

/// Transfer component analysis with a linear kernel on the stacked data.
pub fn tca_fit(xs: &Matrix, xt: &Matrix, mu: f64, m: usize) -> Result<TcaModel> {
    TcaProblem::new(xs, xt)?.solve(mu, m)
}

/// Squared distance between domain means divided by the total variance of
/// the pooled rows, so discrepancies in spaces of different scale compare.
pub fn normalized_mmd(zs: &Matrix, zt: &Matrix) -> Result<f64> {
    check_same_width(zs, zt)?;
    let (ms, mt) = (zs.column_means(), zt.column_means());
    let gap = squared_distance(&ms, &mt);
    let pooled = zs.vstack(zt)?;
    let (centered, _) = pooled.centered();
    let var = centered.frobenius_norm().powi(2) / pooled.rows() as f64;
    if var == 0.0 {
        return Ok(0.0);
    }
    Ok(gap / var)
}

/// Label of the Euclidean nearest training row; ties go to the lower index.
pub fn nn1_classify(train: &Matrix, labels: &[usize], test: &Matrix) -> Result<Vec<usize>> {
    if train.rows() == 0 {
        return Err(contract("nn1_classify needs at least one training point"));
    }
    if labels.len() != train.rows() {
        return Err(contract(format!("{} labels for {} training rows", labels.len(), train.rows())));
    }
    if train.cols() != test.cols() {
        return Err(Error::Shape {
            op: "nn1_classify",
            left: train.shape(),
            right: test.shape(),
        });
    }
    Ok((0..test.rows())
        .map(|i| {
            let x = test.row(i);
            let mut best = (f64::INFINITY, 0);
            for j in 0..train.rows() {
                let d = squared_distance(x, train.row(j));
                if d < best.0 {
                    best = (d, j);
                }
            }
            labels[best.1]
        })
        .collect())
}
