//! Dense matrix kernel shared by every other module.
//!
//! Thin layer over `nalgebra` dynamic matrices: pivoted solves with a
//! condition check, SVD-based pseudoinverse and rank, Cholesky-pivot
//! definiteness classification, and spectral radius via the real Schur form.

use alloc::vec::Vec;

use nalgebra::linalg::Schur;
use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default relative tolerance for symmetry, definiteness and rank decisions.
pub const DEFAULT_TOL: f64 = 1e-10;

/// `solve` rejects systems whose reciprocal condition estimate falls below this.
pub const SINGULAR_RCOND: f64 = 1e-14;

const SCHUR_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefinitenessClass {
    /// Positive definite.
    Pd,
    /// Positive semidefinite but singular.
    Psd,
    Indefinite,
}

impl DefinitenessClass {
    pub fn is_pd(self) -> bool {
        self == DefinitenessClass::Pd
    }

    pub fn is_psd(self) -> bool {
        self != DefinitenessClass::Indefinite
    }
}

fn one_norm(m: &Mat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn require_square(m: &Mat, what: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            what,
            expected: (m.nrows(), m.nrows()),
            found: (m.nrows(), m.ncols()),
        });
    }
    Ok(())
}

/// Reciprocal 1-norm condition number `1 / (‖M‖₁ ‖M⁻¹‖₁)`; zero when singular.
pub fn rcond(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let norm = one_norm(m);
    if norm == 0.0 {
        return 0.0;
    }
    match m.clone().full_piv_lu().try_inverse() {
        Some(inv) => {
            let inv_norm = one_norm(&inv);
            if inv_norm.is_finite() {
                1.0 / (norm * inv_norm)
            } else {
                0.0
            }
        }
        None => 0.0,
    }
}

/// Solves `M·X = RHS` with a fully pivoted LU factorization.
pub fn solve(m: &Mat, rhs: &Mat) -> Result<Mat> {
    require_square(m, "solve: coefficient matrix")?;
    if rhs.nrows() != m.nrows() {
        return Err(Error::DimensionMismatch {
            what: "solve: right-hand side",
            expected: (m.nrows(), rhs.ncols()),
            found: (rhs.nrows(), rhs.ncols()),
        });
    }
    if m.nrows() == 0 {
        return Ok(Mat::zeros(0, rhs.ncols()));
    }
    let rc = rcond(m);
    if rc.is_nan() || rc < SINGULAR_RCOND {
        return Err(Error::SingularMatrix { rcond: rc });
    }
    m.clone()
        .full_piv_lu()
        .solve(rhs)
        .ok_or(Error::SingularMatrix { rcond: rc })
}

pub fn solve_vec(m: &Mat, rhs: &Vector) -> Result<Vector> {
    let x = solve(m, &Mat::from_column_slice(rhs.len(), 1, rhs.as_slice()))?;
    Ok(x.column(0).into_owned())
}

pub fn inverse(m: &Mat) -> Result<Mat> {
    require_square(m, "inverse")?;
    solve(m, &Mat::identity(m.nrows(), m.nrows()))
}

pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    m.clone().singular_values().iter().copied().collect()
}

/// Moore–Penrose pseudoinverse; singular values at or below `tol·σ_max` are
/// treated as zero.
pub fn pinv(m: &Mat, tol: f64) -> Mat {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Mat::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let (Some(u), Some(v_t)) = (svd.u.as_ref(), svd.v_t.as_ref()) else {
        return Mat::zeros(c, r);
    };
    let mut out = Mat::zeros(c, r);
    if smax == 0.0 {
        return out;
    }
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol * smax {
            out += (v_t.row(i).transpose() * u.column(i).transpose()) / s;
        }
    }
    out
}

/// Number of singular values above `tol·σ_max`.
pub fn rank_of(m: &Mat, tol: f64) -> usize {
    let sv = singular_values(m);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

pub fn asymmetry(m: &Mat) -> f64 {
    (m - m.transpose()).norm()
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Classifies a symmetric matrix.
///
/// PD iff an unpivoted Cholesky runs with every pivot above `tol·scale`
/// (`scale` = largest diagonal magnitude); otherwise PSD iff the smallest
/// eigenvalue is at least `−tol·scale`.
pub fn definiteness(m: &Mat, tol: f64) -> Result<DefinitenessClass> {
    require_square(m, "definiteness")?;
    let n = m.nrows();
    if n == 0 {
        return Ok(DefinitenessClass::Pd);
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "definiteness input",
        });
    }
    let asym = asymmetry(m);
    if asym > tol * m.norm() {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let sym = symmetrize(m);
    let scale = (0..n)
        .map(|i| sym[(i, i)].abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    if cholesky_pivots_exceed(&sym, tol * scale) {
        return Ok(DefinitenessClass::Pd);
    }
    let min_eig = sym
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eig >= -tol * scale {
        Ok(DefinitenessClass::Psd)
    } else {
        Ok(DefinitenessClass::Indefinite)
    }
}

fn cholesky_pivots_exceed(m: &Mat, threshold: f64) -> bool {
    let n = m.nrows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d.is_nan() || d <= threshold {
            return false;
        }
        let djj = libm::sqrt(d);
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    true
}

/// Eigenvalues of a general square matrix via the real Schur decomposition.
pub fn eigenvalues(m: &Mat) -> Result<Vec<Complex<f64>>> {
    require_square(m, "eigenvalues")?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "eigenvalue input",
        });
    }
    let schur =
        Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or(Error::NoConvergence {
            iterations: SCHUR_MAX_ITER,
            residual: f64::NAN,
        })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn modulus(z: Complex<f64>) -> f64 {
    libm::hypot(z.re, z.im)
}

pub fn spectral_radius(m: &Mat) -> Result<f64> {
    Ok(eigenvalues(m)?.into_iter().map(modulus).fold(0.0, f64::max))
}

/// Block-diagonal matrix from the given square or rectangular blocks.
pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn vstack(blocks: &[&Mat]) -> Mat {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    debug_assert!(blocks.iter().all(|b| b.ncols() == cols));
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), b.shape()).copy_from(*b);
        r += b.nrows();
    }
    out
}

pub fn hstack(blocks: &[&Mat]) -> Mat {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    debug_assert!(blocks.iter().all(|b| b.nrows() == rows));
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), b.shape()).copy_from(*b);
        c += b.ncols();
    }
    out
}

pub fn vstack_vec(parts: &[&Vector]) -> Vector {
    let mut out = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for p in parts {
        out.extend_from_slice(p.as_slice());
    }
    Vector::from_vec(out)
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// `‖v‖²_W = vᵀ W v`.
pub fn weighted_sq_norm(v: &Vector, w: &Mat) -> f64 {
    v.dot(&(w * v))
}
