//! Re-MPC gains and the design-matrix (terminal weight) recursion.
//!
//! Two gain routes are provided for the same stacked window:
//!
//! * [`gain_penalized`]: the method-of-weighting gain, where the dynamics enter
//!   the objective with weight `μ` and hold only up to an `O(1/μ)` residual;
//! * [`gain_exact`]: the `μ`-free closed form
//!   `col{K_X, K_U} = blockdiag(Q̄, −R̄)⁻¹ [B̄₁, B̄₂]ᵀ O⁻¹ Ā` with
//!   `O = B̄₁Q̄⁻¹B̄₁ᵀ + B̄₂R̄⁻¹B̄₂ᵀ`.
//!
//! [`gain_kkt`] solves the equality-constrained QP directly and is the
//! reference both routes are tested against.

use crate::error::{Error, Result};
use crate::horizon::{build_stacked, StackedDecision, StackedProblem};
use crate::matops::{self, DefinitenessClass, Mat, Vector};
use crate::model::{self, CostSpec, LtiSystem};

/// `Ū* = K x`, with `K = col{K_X, K_U}` split on the decision layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrices {
    pub k: Mat,
    pub k_x: Mat,
    pub k_u: Mat,
}

impl GainMatrices {
    fn from_stacked(k: Mat, state_len: usize) -> Self {
        let input_len = k.nrows() - state_len;
        let k_x = k.rows(0, state_len).into_owned();
        let k_u = k.rows(state_len, input_len).into_owned();
        Self { k, k_x, k_u }
    }

    pub fn decision(&self, x: &Vector) -> StackedDecision {
        StackedDecision {
            x: &self.k_x * x,
            u: &self.k_u * x,
        }
    }

    /// Row block `j` (0-based) of `K_X`: the map `x_{k|k} ↦ x_{k+j+1|k}`.
    pub fn state_block(&self, j: usize, n: usize) -> Mat {
        self.k_x.rows(j * n, n).into_owned()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiState {
    pub p: Mat,
    pub iterations: usize,
    /// `‖ℛ‖_F` for a single update; relative fixed-point residual for iterations.
    pub residual: f64,
}

fn is_pd(m: &Mat) -> bool {
    matches!(
        matops::definiteness(m, matops::DEFAULT_TOL),
        Ok(DefinitenessClass::Pd)
    )
}

/// Method-of-weighting gain from the saddle system
/// `[[ℋ⁻¹, ℬ], [ℬᵀ, 0]]·[·; K] = [𝒜; 0]` at the window's `μ`.
///
/// The `Q`-weighted block of `ℋ` multiplies a zero block row of `ℬ`, so when
/// `Q` is singular that block is dropped; when `H₁` itself is singular the
/// pseudoinverse normal equations `(ℬᵀℋℬ)†ℬᵀℋ𝒜` are used.
pub fn gain_penalized(sp: &StackedProblem) -> Result<GainMatrices> {
    let big_n = sp.decision_len();
    let (n, ln) = (sp.n, sp.state_len());
    if !is_pd(&sp.h1) {
        let h = sp.script_h();
        let bth = sp.script_b.transpose() * &h;
        let k = matops::pinv(&(&bth * &sp.script_b), matops::DEFAULT_TOL) * (bth * &sp.script_a);
        return Ok(GainMatrices::from_stacked(k, ln));
    }
    let h1_inv = matops::inverse(&sp.h1)?;
    let penalty_inv = Mat::identity(ln, ln) / sp.mu;
    let (h_inv, b, a) = if is_pd(&sp.q) {
        let q_inv = matops::inverse(&sp.q)?;
        (
            matops::block_diag(&[&h1_inv, &q_inv, &penalty_inv]),
            sp.script_b.clone(),
            sp.script_a.clone(),
        )
    } else {
        (
            matops::block_diag(&[&h1_inv, &penalty_inv]),
            matops::vstack(&[&Mat::identity(big_n, big_n), &sp.aeq]),
            matops::vstack(&[&Mat::zeros(big_n, n), &sp.a_bar]),
        )
    };
    let rows = h_inv.nrows();
    let saddle = matops::vstack(&[
        &matops::hstack(&[&h_inv, &b]),
        &matops::hstack(&[&b.transpose(), &Mat::zeros(big_n, big_n)]),
    ]);
    let rhs = matops::vstack(&[&a, &Mat::zeros(big_n, n)]);
    let sol = matops::solve(&saddle, &rhs).map_err(|_| Error::SingularKkt)?;
    Ok(GainMatrices::from_stacked(
        sol.rows(rows, big_n).into_owned(),
        ln,
    ))
}

/// `O = B̄₁Q̄⁻¹B̄₁ᵀ + B̄₂R̄⁻¹B̄₂ᵀ`.
pub fn o_matrix(sp: &StackedProblem) -> Result<Mat> {
    let q_inv = matops::inverse(&sp.q_bar)?;
    let r_inv = matops::inverse(&sp.r_bar)?;
    Ok(&sp.b1_bar * q_inv * sp.b1_bar.transpose() + &sp.b2_bar * r_inv * sp.b2_bar.transpose())
}

/// `μ`-free gain.
///
/// Uses the closed form when `Q̄` is positive definite and falls back to
/// [`gain_kkt`] otherwise.
pub fn gain_exact(sp: &StackedProblem) -> Result<GainMatrices> {
    if !is_pd(&sp.r_bar) {
        return Err(Error::NotPd { what: "R" });
    }
    if !is_pd(&sp.q_bar) {
        return gain_kkt(sp);
    }
    let o = o_matrix(sp)?;
    let y = matops::solve(&o, &sp.a_bar).map_err(|_| Error::SingularO)?;
    let k_x = matops::solve(&sp.q_bar, &(sp.b1_bar.transpose() * &y))?;
    // (−R̄)⁻¹ B̄₂ᵀ O⁻¹ Ā
    let k_u = matops::solve(&(-&sp.r_bar), &(sp.b2_bar.transpose() * &y))?;
    Ok(GainMatrices::from_stacked(
        matops::vstack(&[&k_x, &k_u]),
        sp.state_len(),
    ))
}

/// Gain of `min ŪᵀH₁Ū s.t. [B̄₁, −B̄₂]Ū = Āx` from its KKT system.
pub fn gain_kkt(sp: &StackedProblem) -> Result<GainMatrices> {
    let big_n = sp.decision_len();
    let ln = sp.state_len();
    let kkt = matops::vstack(&[
        &matops::hstack(&[&sp.h1, &sp.aeq.transpose()]),
        &matops::hstack(&[&sp.aeq, &Mat::zeros(ln, ln)]),
    ]);
    let rhs = matops::vstack(&[&Mat::zeros(big_n, sp.n), &sp.a_bar]);
    let sol = matops::solve(&kkt, &rhs).map_err(|_| Error::SingularKkt)?;
    Ok(GainMatrices::from_stacked(
        sol.rows(0, big_n).into_owned(),
        ln,
    ))
}

/// Linear part of the QP solution map when the rows `active` of `F̄` are held
/// tight: the gain of `min ŪᵀH₁Ū s.t. Aeq Ū = Āx, F̄_active Ū = 0`.
pub fn gain_active_set(sp: &StackedProblem, active: &[usize]) -> Result<GainMatrices> {
    if active.is_empty() {
        return gain_kkt(sp);
    }
    let f = sp.f_bar.as_ref().ok_or(Error::InvalidParameter(
        "active set given for an unconstrained window",
    ))?;
    if let Some(&bad) = active.iter().find(|&&i| i >= f.nrows()) {
        return Err(Error::LengthMismatch {
            expected: f.nrows(),
            found: bad + 1,
        });
    }
    let big_n = sp.decision_len();
    let rows: alloc::vec::Vec<_> = active.iter().map(|&i| f.row(i)).collect();
    let c = matops::vstack(&[&sp.aeq, &Mat::from_rows(&rows)]);
    let k = c.nrows();
    let kkt = matops::vstack(&[
        &matops::hstack(&[&sp.h1, &c.transpose()]),
        &matops::hstack(&[&c, &Mat::zeros(k, k)]),
    ]);
    let rhs = matops::vstack(&[
        &Mat::zeros(big_n, sp.n),
        &sp.a_bar,
        &Mat::zeros(active.len(), sp.n),
    ]);
    let sol = matops::solve(&kkt, &rhs).map_err(|_| Error::SingularKkt)?;
    Ok(GainMatrices::from_stacked(
        sol.rows(0, big_n).into_owned(),
        sp.state_len(),
    ))
}

/// `ℛ = B̄₁K_X − B̄₂K_U − Ā`.
pub fn residual(sp: &StackedProblem, gains: &GainMatrices) -> Mat {
    &sp.b1_bar * &gains.k_x - &sp.b2_bar * &gains.k_u - &sp.a_bar
}

fn checked_state(p: Mat, residual: f64) -> Result<RiccatiState> {
    let p = matops::symmetrize(&p);
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "updated design matrix",
        });
    }
    if !is_pd(&p) {
        return Err(Error::NotPd {
            what: "updated design matrix",
        });
    }
    Ok(RiccatiState {
        p,
        iterations: 1,
        residual,
    })
}

/// `P = KᵀH₁K + Q + μℛᵀℛ`, the optimal value matrix of the penalized window.
pub fn update_design_matrix_penalized(
    sp: &StackedProblem,
    gains: &GainMatrices,
) -> Result<RiccatiState> {
    let r = residual(sp, gains);
    let p = gains.k.transpose() * &sp.h1 * &gains.k + &sp.q + r.transpose() * &r * sp.mu;
    checked_state(p, r.norm())
}

fn exact_update_matrix(sp: &StackedProblem, gains: &GainMatrices) -> Mat {
    gains.k_x.transpose() * &sp.q_bar * &gains.k_x
        + gains.k_u.transpose() * &sp.r_bar * &gains.k_u
        + &sp.q
}

/// `P = K_XᵀQ̄K_X + K_UᵀR̄K_U + Q`.
pub fn update_design_matrix_exact(
    sp: &StackedProblem,
    gains: &GainMatrices,
) -> Result<RiccatiState> {
    let r = residual(sp, gains);
    checked_state(exact_update_matrix(sp, gains), r.norm())
}

/// `ĀᵀO⁻¹Ā + Q`.
pub fn design_matrix_closed_form(sp: &StackedProblem) -> Result<Mat> {
    let o = o_matrix(sp)?;
    let y = matops::solve(&o, &sp.a_bar).map_err(|_| Error::SingularO)?;
    Ok(matops::symmetrize(&(sp.a_bar.transpose() * y + &sp.q)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateOptions {
    /// Relative fixed-point tolerance `‖P − Φ(P)‖_F ≤ tol·‖P‖_F`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative tolerance of the stabilizability/detectability rank tests.
    pub rank_tol: f64,
    pub check_assumptions: bool,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            rank_tol: matops::DEFAULT_TOL,
            check_assumptions: true,
        }
    }
}

/// Stabilizability of `(A, B)` and detectability of `(A, Q)`.
pub fn check_assumptions(sys: &LtiSystem, q: &Mat, rank_tol: f64) -> Result<()> {
    if !model::check_stabilizability(sys, rank_tol)? {
        return Err(Error::AssumptionViolated("(A, B) is not stabilizable"));
    }
    if !model::check_detectability(sys, q, rank_tol)? {
        return Err(Error::AssumptionViolated("(A, Q) is not detectable"));
    }
    Ok(())
}

/// One application of the stacked steady-state map: the window's optimal value
/// matrix when its terminal weight is `p`.
pub fn steady_state_map(sys: &LtiSystem, cost: &CostSpec, horizon: usize, p: &Mat) -> Result<Mat> {
    let sp = build_stacked(sys, cost, p, horizon, 1.0, None)?;
    let gains = gain_exact(&sp)?;
    Ok(matops::symmetrize(&exact_update_matrix(&sp, &gains)))
}

fn iterate_fixed_point<F>(p0: &Mat, opts: &SteadyStateOptions, mut map: F) -> Result<RiccatiState>
where
    F: FnMut(&Mat) -> Result<Mat>,
{
    let mut p = p0.clone();
    let mut rel = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let next = map(&p)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: f64::INFINITY,
            });
        }
        let scale = next.norm().max(f64::MIN_POSITIVE);
        rel = (&next - &p).norm() / scale;
        p = next;
        if rel <= opts.tol {
            if !is_pd(&p) {
                return Err(Error::NotPd {
                    what: "steady-state design matrix",
                });
            }
            return Ok(RiccatiState {
                p,
                iterations: it,
                residual: rel,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: rel,
    })
}

/// Fixed point of the stacked steady-state map for horizon `l`, started from
/// the cost's terminal weight.
pub fn solve_steady_state(
    sys: &LtiSystem,
    cost: &CostSpec,
    horizon: usize,
    opts: &SteadyStateOptions,
) -> Result<RiccatiState> {
    solve_steady_state_from(sys, cost, horizon, cost.p_terminal(), opts)
}

pub fn solve_steady_state_from(
    sys: &LtiSystem,
    cost: &CostSpec,
    horizon: usize,
    p0: &Mat,
    opts: &SteadyStateOptions,
) -> Result<RiccatiState> {
    if opts.check_assumptions {
        check_assumptions(sys, cost.q(), opts.rank_tol)?;
    }
    if !is_pd(p0) {
        return Err(Error::NotPd {
            what: "initial design matrix",
        });
    }
    iterate_fixed_point(p0, opts, |p| steady_state_map(sys, cost, horizon, p))
}

/// `AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA + Q`.
pub fn dare_map(sys: &LtiSystem, q: &Mat, r: &Mat, p: &Mat) -> Result<Mat> {
    let (a, b) = (sys.a(), sys.b());
    let pa = p * a;
    let bt_pa = b.transpose() * &pa;
    let s = r + b.transpose() * p * b;
    let next = a.transpose() * &pa - bt_pa.transpose() * matops::solve(&s, &bt_pa)? + q;
    Ok(matops::symmetrize(&next))
}

/// `Aᵀ(P⁻¹ + BR⁻¹Bᵀ)⁻¹A + Q`, the same map after the Woodbury identity.
pub fn dare_map_inverse_form(sys: &LtiSystem, q: &Mat, r: &Mat, p: &Mat) -> Result<Mat> {
    let inner = matops::inverse(p)? + sys.b() * matops::inverse(r)? * sys.b().transpose();
    Ok(matops::symmetrize(
        &(sys.a().transpose() * matops::solve(&inner, sys.a())? + q),
    ))
}

/// Standard DARE by fixed-point iteration from `P₀ = Q`.
pub fn solve_dare(
    sys: &LtiSystem,
    q: &Mat,
    r: &Mat,
    opts: &SteadyStateOptions,
) -> Result<RiccatiState> {
    solve_dare_from(sys, q, r, q, opts)
}

pub fn solve_dare_from(
    sys: &LtiSystem,
    q: &Mat,
    r: &Mat,
    p0: &Mat,
    opts: &SteadyStateOptions,
) -> Result<RiccatiState> {
    iterate_fixed_point(p0, opts, |p| dare_map(sys, q, r, p))
}

/// `(I + BR⁻¹BᵀP)⁻¹A`, the one-step predicted closed loop for terminal weight `P`.
pub fn predicted_closed_loop(sys: &LtiSystem, r: &Mat, p: &Mat) -> Result<Mat> {
    let n = sys.n();
    let m = Mat::identity(n, n) + sys.b() * matops::solve(r, &sys.b().transpose())? * p;
    matops::solve(&m, sys.a())
}

/// `P⁻¹(P⁻¹ + BR⁻¹Bᵀ)⁻¹A`.
pub fn predicted_closed_loop_inverse_form(sys: &LtiSystem, r: &Mat, p: &Mat) -> Result<Mat> {
    let p_inv = matops::inverse(p)?;
    let inner = &p_inv + sys.b() * matops::inverse(r)? * sys.b().transpose();
    Ok(p_inv * matops::solve(&inner, sys.a())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Scenario;
    use crate::pls::{self, WlsOptions, WlsProblem};
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example(l: usize, mu: f64, p: Option<&Mat>) -> (Scenario, StackedProblem) {
        let s = Scenario::example1();
        let p = p.cloned().unwrap_or_else(|| s.cost.q().clone());
        let sp = build_stacked(&s.system, &s.cost, &p, l, mu, None).unwrap();
        (s, sp)
    }

    fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
        let a = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + Mat::identity(n, n) * 0.1
    }

    #[test]
    fn gains_are_homogeneous() {
        let (_, sp) = example(2, 1e3, None);
        for g in [gain_penalized(&sp).unwrap(), gain_exact(&sp).unwrap()] {
            let d = g.decision(&Vector::zeros(2));
            assert_eq!(d.ubar(), Vector::zeros(6));
        }
    }

    #[test]
    fn penalized_residual_decays_like_inverse_mu() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x0 = Vector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
        let mut norms = alloc::vec::Vec::new();
        for mu in [1e3, 1e4, 1e5] {
            let (_, sp) = example(2, mu, None);
            let g = gain_penalized(&sp).unwrap();
            norms.push(sp.dynamics_residual(&x0, &g.decision(&x0)).norm());
        }
        assert!(norms[0] < 1e-1);
        for w in norms.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 10.0).abs() < 0.5, "ratio {ratio}");
        }
    }

    #[test]
    fn penalized_gain_matches_weighted_least_squares() {
        let (_, sp) = example(2, 1e3, None);
        let g = gain_penalized(&sp).unwrap();
        let x0 = Vector::from_column_slice(&[0.5, -0.1]);
        let wls = WlsProblem::new(sp.script_b.clone(), &sp.script_a * &x0, sp.script_h()).unwrap();
        let eta = pls::solve_wls(&wls, &WlsOptions::default()).unwrap();
        assert!((&g.k * &x0 - eta).amax() < 1e-8);
    }

    #[test]
    fn exact_gain_single_step_identity() {
        let p = dmatrix![4.0, 1.0; 1.0, 3.0];
        let (s, sp) = example(1, 1.0, Some(&p));
        let g = gain_exact(&sp).unwrap();
        let cl = predicted_closed_loop(&s.system, s.cost.r(), &p).unwrap();
        let inv_form = predicted_closed_loop_inverse_form(&s.system, s.cost.r(), &p).unwrap();
        assert!((&g.k_x - &cl).amax() < 1e-10);
        assert!((&g.k_x - &inv_form).amax() < 1e-10);
    }

    #[test]
    fn exact_gain_matches_kkt_and_satisfies_dynamics() {
        for l in 1..=4 {
            let (s, sp) = example(l, 1.0, None);
            let g = gain_exact(&sp).unwrap();
            let kkt = gain_kkt(&sp).unwrap();
            assert!((&g.k - &kkt.k).amax() < 1e-10);
            assert!(sp.dynamics_residual(&s.x0, &g.decision(&s.x0)).amax() < 1e-10);
        }
    }

    #[test]
    fn large_mu_limit_agrees_with_exact() {
        let (_, sp) = example(2, 1e10, None);
        let diff = (gain_penalized(&sp).unwrap().k - gain_exact(&sp).unwrap().k).amax();
        assert!(diff < 1e-5, "{diff}");
    }

    #[test]
    fn penalized_update_with_exact_gains_is_exact_update() {
        let (_, sp) = example(2, 1e3, None);
        let g = gain_exact(&sp).unwrap();
        let pen = update_design_matrix_penalized(&sp, &g).unwrap();
        let exact = update_design_matrix_exact(&sp, &g).unwrap();
        // μ‖ℛ‖² is round-off only
        assert!((pen.p - exact.p).amax() < 1e-9);
        assert!(pen.residual < 1e-12);
    }

    #[test]
    fn penalized_update_with_zero_gain() {
        let (_, sp) = example(2, 7.0, None);
        let zero = GainMatrices::from_stacked(Mat::zeros(6, 2), 4);
        let st = update_design_matrix_penalized(&sp, &zero).unwrap();
        let expected = &sp.q + sp.a_bar.transpose() * &sp.a_bar * 7.0;
        assert!((st.p - expected).amax() < 1e-12);
    }

    #[test]
    fn penalized_update_is_optimal_value() {
        let (s, sp) = example(2, 1e3, None);
        let g = gain_penalized(&sp).unwrap();
        let st = update_design_matrix_penalized(&sp, &g).unwrap();
        let x0 = &s.x0;
        let ubar = &g.k * x0;
        let r = &sp.script_b * &ubar - &sp.script_a * x0;
        let objective = matops::weighted_sq_norm(&r, &sp.script_h());
        let value = matops::weighted_sq_norm(x0, &st.p);
        assert!((objective - value).abs() < 1e-8 * objective.max(1.0));
    }

    #[test]
    fn exact_update_matches_closed_form() {
        for l in 1..=4 {
            let (_, sp) = example(l, 1.0, None);
            let g = gain_exact(&sp).unwrap();
            let st = update_design_matrix_exact(&sp, &g).unwrap();
            let closed = design_matrix_closed_form(&sp).unwrap();
            assert!((&st.p - &closed).amax() < 1e-9 * closed.amax());
            assert!(matops::definiteness(&st.p, 1e-10).unwrap().is_pd());
        }
    }

    #[test]
    fn degenerate_update_is_not_pd() {
        let sys = LtiSystem::new(Mat::zeros(2, 2), dmatrix![1.0; 0.0]).unwrap();
        let cost = CostSpec::new(Mat::zeros(2, 2), dmatrix![1.0], Mat::identity(2, 2)).unwrap();
        let sp = build_stacked(&sys, &cost, &Mat::identity(2, 2), 1, 1.0, None).unwrap();
        let g = gain_exact(&sp).unwrap();
        assert_eq!(
            update_design_matrix_exact(&sp, &g),
            Err(Error::NotPd {
                what: "updated design matrix"
            })
        );
    }

    #[test]
    fn scalar_dare_against_quadratic_root() {
        let sys = LtiSystem::new(dmatrix![0.5], dmatrix![1.0]).unwrap();
        let (a, q, r) = (0.5f64, 1.0f64, 1.0f64);
        // p² + (r − a²r − q)p − qr = 0
        let bq = r - a * a * r - q;
        let root = (-bq + libm::sqrt(bq * bq + 4.0 * q * r)) / 2.0;
        let st = solve_dare(
            &sys,
            &dmatrix![1.0],
            &dmatrix![1.0],
            &SteadyStateOptions::default(),
        )
        .unwrap();
        assert!((st.p[(0, 0)] - root).abs() < 1e-9);
    }

    #[test]
    fn dare_with_zero_dynamics_is_q() {
        let sys = LtiSystem::new(Mat::zeros(2, 2), dmatrix![1.0; 0.5]).unwrap();
        let q = dmatrix![2.0, 0.3; 0.3, 1.0];
        let st = solve_dare(&sys, &q, &dmatrix![1.0], &SteadyStateOptions::default()).unwrap();
        assert_eq!(st.p, q);
        let cost = CostSpec::with_terminal_q(q.clone(), dmatrix![1.0]).unwrap();
        let ss = solve_steady_state(&sys, &cost, 3, &SteadyStateOptions::default()).unwrap();
        assert!((ss.p - &q).amax() < 1e-14);
        assert_eq!(ss.iterations, 1);
    }

    #[test]
    fn woodbury_form_at_fixed_point() {
        let s = Scenario::example1();
        let opts = SteadyStateOptions {
            tol: 1e-13,
            ..Default::default()
        };
        let st = solve_dare(&s.system, s.cost.q(), s.cost.r(), &opts).unwrap();
        let inv = dare_map_inverse_form(&s.system, s.cost.q(), s.cost.r(), &st.p).unwrap();
        assert!((&inv - &st.p).amax() < 1e-9 * st.p.amax());
    }

    #[test]
    fn steady_state_is_horizon_independent() {
        let s = Scenario::example1();
        let opts = SteadyStateOptions {
            tol: 1e-13,
            ..Default::default()
        };
        let dare = solve_dare(&s.system, s.cost.q(), s.cost.r(), &opts).unwrap();
        for l in 1..=3 {
            let st = solve_steady_state(&s.system, &s.cost, l, &opts).unwrap();
            assert!((&st.p - &dare.p).norm() < 1e-9 * dare.p.norm(), "l={l}");
        }
    }

    #[test]
    fn closed_loop_identity_on_random_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let n = rng.gen_range(1..=4);
            let m = rng.gen_range(1..=2);
            let sys = LtiSystem::new(
                Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)),
                Mat::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0)),
            )
            .unwrap();
            let p = random_pd(&mut rng, n);
            let r = random_pd(&mut rng, m);
            let a = predicted_closed_loop(&sys, &r, &p).unwrap();
            let b = predicted_closed_loop_inverse_form(&sys, &r, &p).unwrap();
            assert!((a - b).amax() < 1e-10);
        }
    }

    #[test]
    fn steady_state_rejects_undetectable() {
        let sys = LtiSystem::new(dmatrix![2.0, 0.0; 0.0, 0.5], Mat::zeros(2, 1)).unwrap();
        let cost = CostSpec::new(Mat::identity(2, 2), dmatrix![1.0], Mat::identity(2, 2)).unwrap();
        assert!(matches!(
            solve_steady_state(&sys, &cost, 2, &SteadyStateOptions::default()),
            Err(Error::AssumptionViolated(_))
        ));
    }

    #[test]
    fn psd_q_uses_kkt_fallback() {
        let s = Scenario::example1();
        let q = dmatrix![1.0, 0.0; 0.0, 0.0];
        let cost = CostSpec::new(q, dmatrix![1.0], Mat::identity(2, 2)).unwrap();
        let sp = build_stacked(&s.system, &cost, &Mat::identity(2, 2), 3, 1e3, None).unwrap();
        let g = gain_exact(&sp).unwrap();
        assert!(sp.dynamics_residual(&s.x0, &g.decision(&s.x0)).amax() < 1e-10);
        let pen = gain_penalized(&sp).unwrap();
        assert!((pen.k - g.k).amax() < 1e-2);
    }
}
