//! Weighted least squares, the method-of-weighting penalty solution and the
//! exact equality-constrained solution.

use crate::error::{Error, Result};
use crate::matops::{self, DefinitenessClass, Mat, Vector};

/// `min_η (Gη − h)ᵀ W (Gη − h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WlsProblem {
    pub g: Mat,
    pub h: Vector,
    pub w: Mat,
}

/// [`WlsProblem`] subject to `Fη = φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LseProblem {
    pub base: WlsProblem,
    pub f: Mat,
    pub phi: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WlsOptions {
    /// Relative tolerance for rank and definiteness decisions.
    pub tol: f64,
    /// Accept a singular PSD weight and use the pseudoinverse normal equations.
    pub allow_psd_weight: bool,
}

impl Default for WlsOptions {
    fn default() -> Self {
        Self {
            tol: matops::DEFAULT_TOL,
            allow_psd_weight: false,
        }
    }
}

impl WlsProblem {
    pub fn new(g: Mat, h: Vector, w: Mat) -> Result<Self> {
        let p = Self { g, h, w };
        p.check_dims()?;
        Ok(p)
    }

    fn check_dims(&self) -> Result<()> {
        let n = self.g.nrows();
        if self.h.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: self.h.len(),
            });
        }
        if self.w.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                what: "weight W",
                expected: (n, n),
                found: self.w.shape(),
            });
        }
        Ok(())
    }

    /// `(Gη − h)ᵀ W (Gη − h)`.
    pub fn objective(&self, eta: &Vector) -> f64 {
        matops::weighted_sq_norm(&(&self.g * eta - &self.h), &self.w)
    }
}

impl LseProblem {
    pub fn new(base: WlsProblem, f: Mat, phi: Vector) -> Result<Self> {
        base.check_dims()?;
        if f.ncols() != base.g.ncols() {
            return Err(Error::DimensionMismatch {
                what: "constraint matrix F",
                expected: (f.nrows(), base.g.ncols()),
                found: f.shape(),
            });
        }
        if phi.len() != f.nrows() {
            return Err(Error::LengthMismatch {
                expected: f.nrows(),
                found: phi.len(),
            });
        }
        Ok(Self { base, f, phi })
    }

    pub fn num_constraints(&self) -> usize {
        self.f.nrows()
    }

    pub fn unknowns(&self) -> usize {
        self.base.g.ncols()
    }

    /// `Ḡ = col{G, F}`, `h̄ = col{h, φ}`, `W̄ = W ⊕ μI`.
    pub fn penalized(&self, mu: f64) -> WlsProblem {
        let k = self.num_constraints();
        WlsProblem {
            g: matops::vstack(&[&self.base.g, &self.f]),
            h: matops::vstack_vec(&[&self.base.h, &self.phi]),
            w: matops::block_diag(&[&self.base.w, &(Mat::identity(k, k) * mu)]),
        }
    }
}

fn require_full_column_rank(g: &Mat, tol: f64) -> Result<()> {
    let rank = matops::rank_of(g, tol);
    if rank < g.ncols() {
        return Err(Error::RankDeficient {
            rank,
            required: g.ncols(),
        });
    }
    Ok(())
}

fn weight_class(w: &Mat, opts: &WlsOptions) -> Result<DefinitenessClass> {
    match matops::definiteness(w, opts.tol)? {
        DefinitenessClass::Pd => Ok(DefinitenessClass::Pd),
        DefinitenessClass::Psd if opts.allow_psd_weight => Ok(DefinitenessClass::Psd),
        _ => Err(Error::SingularWeight),
    }
}

/// Lemma-1 solution through the saddle block `[[W⁻¹, G], [Gᵀ, 0]]`.
///
/// A PSD weight (when allowed) goes through `(GᵀWG)†GᵀWh` instead.
pub fn solve_wls(p: &WlsProblem, opts: &WlsOptions) -> Result<Vector> {
    p.check_dims()?;
    require_full_column_rank(&p.g, opts.tol)?;
    match weight_class(&p.w, opts)? {
        DefinitenessClass::Pd => {
            let (n, m) = p.g.shape();
            let w_inv = matops::inverse(&p.w)?;
            let top = matops::hstack(&[&w_inv, &p.g]);
            let bottom = matops::hstack(&[&p.g.transpose(), &Mat::zeros(m, m)]);
            let saddle = matops::vstack(&[&top, &bottom]);
            let rhs = matops::vstack_vec(&[&p.h, &Vector::zeros(m)]);
            let sol = matops::solve_vec(&saddle, &rhs).map_err(|_| Error::SingularKkt)?;
            Ok(sol.rows(n, m).into_owned())
        }
        _ => {
            let gtw = p.g.transpose() * &p.w;
            let normal = &gtw * &p.g;
            Ok(matops::pinv(&normal, opts.tol) * (gtw * &p.h))
        }
    }
}

/// `(GᵀWG)⁻¹GᵀWh` through the normal equations.
pub fn solve_wls_normal(p: &WlsProblem) -> Result<Vector> {
    p.check_dims()?;
    let gtw = p.g.transpose() * &p.w;
    matops::solve_vec(&(&gtw * &p.g), &(gtw * &p.h))
}

fn weight_sqrt_t(w: &Mat, class: DefinitenessClass) -> Result<Mat> {
    match class {
        // W = L Lᵀ, so ‖r‖²_W = ‖Lᵀ r‖².
        DefinitenessClass::Pd => w
            .clone()
            .cholesky()
            .map(|c| c.l().transpose())
            .ok_or(Error::SingularWeight),
        _ => {
            let eig = matops::symmetrize(w).symmetric_eigen();
            let mut root = eig.eigenvectors.transpose();
            for (i, lam) in eig.eigenvalues.iter().enumerate() {
                let s = libm::sqrt(lam.max(0.0));
                root.row_mut(i).scale_mut(s);
            }
            Ok(root)
        }
    }
}

fn stacked_penalty_system(
    p: &LseProblem,
    mu: f64,
    class: DefinitenessClass,
) -> Result<(Mat, Vector)> {
    let lt = weight_sqrt_t(&p.base.w, class)?;
    let root_mu = libm::sqrt(mu);
    let a = matops::vstack(&[&(&lt * &p.base.g), &(&p.f * root_mu)]);
    let b = matops::vstack_vec(&[&(&lt * &p.base.h), &(&p.phi * root_mu)]);
    Ok((a, b))
}

/// Method of weighting: the Lemma-1 solution of the problem with `Ḡ = col{G, F}`,
/// `h̄ = col{h, φ}`, `W̄ = W ⊕ μI`.
///
/// Solved as one least-squares problem with the rows of `F` scaled by `√μ`
/// (Householder QR), so `μI` is never formed.
pub fn solve_penalized(p: &LseProblem, mu: f64, opts: &WlsOptions) -> Result<Vector> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter("mu must be positive and finite"));
    }
    if p.num_constraints() == 0 {
        return solve_wls(&p.base, opts);
    }
    let class = weight_class(&p.base.w, opts)?;
    require_full_column_rank(&matops::vstack(&[&p.base.g, &p.f]), opts.tol)?;
    let (a, b) = stacked_penalty_system(p, mu, class)?;
    let m = p.unknowns();
    let qr = a.qr();
    let rhs = qr.q().transpose() * b;
    qr.r()
        .solve_upper_triangular(&rhs)
        .map(|x| x.rows(0, m).into_owned())
        .ok_or(Error::RankDeficient {
            rank: m.saturating_sub(1),
            required: m,
        })
}

/// Condition number of the `√μ`-scaled least-squares matrix; grows like `√μ`
/// once the penalty dominates, which bounds the usable range of `μ`.
pub fn penalized_condition(p: &LseProblem, mu: f64, opts: &WlsOptions) -> Result<f64> {
    let class = weight_class(&p.base.w, opts)?;
    let (a, _) = stacked_penalty_system(p, mu, class)?;
    let sv = matops::singular_values(&a);
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(if min > 0.0 { max / min } else { f64::INFINITY })
}

/// Exact constrained solution from the saddle block
/// `[[W⁻¹, 0, G], [0, 0, F], [Gᵀ, Fᵀ, 0]]`.
///
/// A PSD weight (when allowed) uses the KKT form `[[GᵀWG, Fᵀ], [F, 0]]`.
pub fn solve_lse_exact(p: &LseProblem, opts: &WlsOptions) -> Result<Vector> {
    let (n, m) = p.base.g.shape();
    let k = p.num_constraints();
    match weight_class(&p.base.w, opts)? {
        DefinitenessClass::Pd => {
            let w_inv = matops::inverse(&p.base.w)?;
            let row1 = matops::hstack(&[&w_inv, &Mat::zeros(n, k), &p.base.g]);
            let row2 = matops::hstack(&[&Mat::zeros(k, n), &Mat::zeros(k, k), &p.f]);
            let row3 =
                matops::hstack(&[&p.base.g.transpose(), &p.f.transpose(), &Mat::zeros(m, m)]);
            let saddle = matops::vstack(&[&row1, &row2, &row3]);
            let rhs = matops::vstack_vec(&[&p.base.h, &p.phi, &Vector::zeros(m)]);
            let sol = matops::solve_vec(&saddle, &rhs).map_err(|_| Error::SingularKkt)?;
            Ok(sol.rows(n + k, m).into_owned())
        }
        _ => {
            let gtw = p.base.g.transpose() * &p.base.w;
            let top = matops::hstack(&[&(&gtw * &p.base.g), &p.f.transpose()]);
            let bottom = matops::hstack(&[&p.f, &Mat::zeros(k, k)]);
            let kkt = matops::vstack(&[&top, &bottom]);
            let rhs = matops::vstack_vec(&[&(gtw * &p.base.h), &p.phi]);
            let sol = matops::solve_vec(&kkt, &rhs).map_err(|_| Error::SingularKkt)?;
            Ok(sol.rows(0, m).into_owned())
        }
    }
}

/// `rank(F) = k` and `rank(col{G, F}) = m`.
pub fn check_lse_uniqueness(p: &LseProblem, tol: f64) -> bool {
    let k = p.num_constraints();
    let m = p.unknowns();
    (k == 0 || matops::rank_of(&p.f, tol) == k)
        && matops::rank_of(&matops::vstack(&[&p.base.g, &p.f]), tol) == m
}
