//! Numerical certificates for the steady-state design matrix, closed-loop
//! stability and the penalty limit, plus seeded random problem generators.
//!
//! Random systems use `A` with entries uniform in `[−1, 1]` rescaled to a
//! spectral radius drawn from [`TARGET_RADII`], `B` uniform in `[−1, 1]`, and
//! weights `MMᵀ + 0.1·I` with `M` uniform in `[−1, 1]`.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::horizon::{build_stacked, StackedProblem};
use crate::matops::{self, Mat};
use crate::model::{self, CostSpec, LtiSystem};
use crate::pls::{self, LseProblem, WlsOptions};
use crate::riccati::{self, SteadyStateOptions};

pub const TARGET_RADII: [f64; 3] = [0.8, 1.0, 1.2];
const WEIGHT_FLOOR: f64 = 0.1;
/// Relative agreement required between fixed points from different starts.
pub const FIXED_POINT_AGREEMENT: f64 = 1e-7;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..=1.0))
}

/// `MMᵀ + 0.1·I`.
pub fn random_pd<R: Rng>(rng: &mut R, n: usize) -> Mat {
    let m = random_matrix(rng, n, n);
    matops::symmetrize(&(&m * m.transpose() + Mat::identity(n, n) * WEIGHT_FLOOR))
}

/// `A` rescaled to spectral radius `radius`, `B` uniform.
pub fn random_system<R: Rng>(rng: &mut R, n: usize, m: usize, radius: f64) -> Result<LtiSystem> {
    loop {
        let a = random_matrix(rng, n, n);
        let rho = matops::spectral_radius(&a)?;
        if rho > 1e-3 {
            return LtiSystem::new(a * (radius / rho), random_matrix(rng, n, m));
        }
    }
}

/// A system, weights and horizon drawn for a certification trial.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomCase {
    pub system: LtiSystem,
    pub cost: CostSpec,
    pub horizon: usize,
    pub target_radius: f64,
}

/// Controllable `(A, B)`, positive definite `Q`, `R` and `P = Q`;
/// `n ≤ 4`, `m ≤ 2`, `l ≤ 4`.
pub fn random_certifiable_case<R: Rng>(rng: &mut R) -> Result<RandomCase> {
    loop {
        let n = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=2);
        let horizon = rng.gen_range(1..=4);
        let target_radius = TARGET_RADII[rng.gen_range(0..TARGET_RADII.len())];
        let system = random_system(rng, n, m, target_radius)?;
        if !model::check_controllability(&system, 1e-8) {
            continue;
        }
        let q = random_pd(rng, n);
        let r = random_pd(rng, m);
        return Ok(RandomCase {
            cost: CostSpec::with_terminal_q(q, r)?,
            system,
            horizon,
            target_radius,
        });
    }
}

/// An unstable mode (`|λ| ∈ [1.1, 1.5]`) that `Q` does not see; the rest of the
/// system is random with spectral radius 0.8.
pub fn random_undetectable_case<R: Rng>(rng: &mut R) -> Result<RandomCase> {
    let n = rng.gen_range(2..=4);
    let m = rng.gen_range(1..=2);
    let horizon = rng.gen_range(1..=4);
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let unstable = sign * rng.gen_range(1.1..=1.5);
    let rest = random_system(rng, n - 1, m, 0.8)?;
    let mut a = Mat::zeros(n, n);
    a[(0, 0)] = unstable;
    a.view_mut((1, 1), (n - 1, n - 1)).copy_from(rest.a());
    let system = LtiSystem::new(a, random_matrix(rng, n, m))?;
    let mut q = Mat::zeros(n, n);
    q.view_mut((1, 1), (n - 1, n - 1))
        .copy_from(&random_pd(rng, n - 1));
    let r = random_pd(rng, m);
    let cost = CostSpec::new(q, r, Mat::identity(n, n))?;
    Ok(RandomCase {
        system,
        cost,
        horizon,
        target_radius: unstable.abs(),
    })
}

/// Equality-constrained least squares with `G` of full column rank, `W`
/// positive definite and `F` of full row rank: at most 6 unknowns.
pub fn random_lse_problem<R: Rng>(rng: &mut R) -> Result<LseProblem> {
    loop {
        let unknowns = rng.gen_range(2..=6);
        let rows = rng.gen_range(unknowns..=unknowns + 3);
        let constraints = rng.gen_range(1..unknowns);
        let g = random_matrix(rng, rows, unknowns);
        let f = random_matrix(rng, constraints, unknowns);
        if matops::rank_of(&g, 1e-8) < unknowns || matops::rank_of(&f, 1e-8) < constraints {
            continue;
        }
        let h = random_matrix(rng, rows, 1).column(0).into_owned();
        let phi = random_matrix(rng, constraints, 1).column(0).into_owned();
        let base = pls::WlsProblem::new(g, h, random_pd(rng, rows))?;
        return LseProblem::new(base, f, phi);
    }
}

fn describe_instance(sys: &LtiSystem, cost: &CostSpec, horizon: usize) -> alloc::string::String {
    format!(
        "l={horizon} A={:?} B={:?} Q={:?} R={:?} P={:?}",
        sys.a().as_slice(),
        sys.b().as_slice(),
        cost.q().as_slice(),
        cost.r().as_slice(),
        cost.p_terminal().as_slice()
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub p: Mat,
    /// Largest `‖P_i − P_j‖_F / ‖P_0‖_F` over all pairs of trials.
    pub max_deviation: f64,
    pub min_eigenvalue: f64,
    pub max_iterations: usize,
}

/// Runs the steady-state iteration from `trials` random positive definite
/// starting points and checks that every run lands on the same positive
/// definite, symmetric matrix.
pub fn certify_pd_fixed_point(
    sys: &LtiSystem,
    cost: &CostSpec,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<FixedPointReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("at least one trial is required"));
    }
    let opts = SteadyStateOptions {
        tol: 1e-12,
        ..SteadyStateOptions::default()
    };
    riccati::check_assumptions(sys, cost.q(), opts.rank_tol)?;
    let checked = SteadyStateOptions {
        check_assumptions: false,
        ..opts
    };
    let mut rng = rng_from_seed(seed);
    let mut solutions: Vec<Mat> = Vec::with_capacity(trials);
    let mut max_iterations = 0;
    for trial in 0..trials {
        let p0 = random_pd(&mut rng, sys.n());
        let st =
            riccati::solve_steady_state_from(sys, cost, horizon, &p0, &checked).map_err(|e| {
                Error::CertificationFailed(format!(
                    "seed={seed} trial={trial} {} P0={:?}: {e}",
                    describe_instance(sys, cost, horizon),
                    p0.as_slice()
                ))
            })?;
        if matops::asymmetry(&st.p) > 1e-12 * st.p.norm() {
            return Err(Error::CertificationFailed(format!(
                "seed={seed} trial={trial} fixed point not symmetric; {}",
                describe_instance(sys, cost, horizon)
            )));
        }
        max_iterations = max_iterations.max(st.iterations);
        solutions.push(st.p);
    }
    let scale = solutions[0].norm();
    let mut max_deviation: f64 = 0.0;
    for i in 0..solutions.len() {
        for j in i + 1..solutions.len() {
            max_deviation = max_deviation.max((&solutions[i] - &solutions[j]).norm() / scale);
        }
    }
    if max_deviation > FIXED_POINT_AGREEMENT {
        return Err(Error::CertificationFailed(format!(
            "seed={seed} fixed points disagree by {max_deviation:e}; {}",
            describe_instance(sys, cost, horizon)
        )));
    }
    let p = solutions.swap_remove(0);
    let min_eigenvalue = p
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eigenvalue.is_nan() || min_eigenvalue <= 0.0 {
        return Err(Error::CertificationFailed(format!(
            "seed={seed} fixed point has eigenvalue {min_eigenvalue:e}; {}",
            describe_instance(sys, cost, horizon)
        )));
    }
    Ok(FixedPointReport {
        horizon,
        trials,
        seed,
        p,
        max_deviation,
        min_eigenvalue,
        max_iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub p: Mat,
    /// `ρ((I + BR⁻¹BᵀP)⁻¹A)`.
    pub closed_loop_radius: f64,
    /// `ρ(A + B·K_{u,0})`, the loop the plant actually sees.
    pub applied_radius: f64,
    /// Spectral radius of each state block of `K_X`.
    pub block_radii: Vec<f64>,
    /// `1 − max` of all radii above.
    pub margin: f64,
}

/// Steady-state closed-loop spectral radii for horizon `l`.
pub fn certify_stability(
    sys: &LtiSystem,
    cost: &CostSpec,
    horizon: usize,
) -> Result<StabilityReport> {
    let opts = SteadyStateOptions {
        tol: 1e-12,
        ..SteadyStateOptions::default()
    };
    let p = riccati::solve_steady_state(sys, cost, horizon, &opts)?.p;
    let a_cl = riccati::predicted_closed_loop(sys, cost.r(), &p)?;
    let closed_loop_radius = matops::spectral_radius(&a_cl)?;

    let sp = build_stacked(sys, cost, &p, horizon, 1.0, None)?;
    let gains = riccati::gain_exact(&sp)?;
    let (n, m) = (sys.n(), sys.m());
    let k_u0 = gains.k_u.rows(0, m).into_owned();
    let applied_radius = matops::spectral_radius(&(sys.a() + sys.b() * k_u0))?;
    let block_radii = (0..horizon)
        .map(|j| matops::spectral_radius(&gains.state_block(j, n)))
        .collect::<Result<Vec<_>>>()?;

    let worst = block_radii
        .iter()
        .copied()
        .fold(closed_loop_radius.max(applied_radius), f64::max);
    if worst.is_nan() || worst >= 1.0 {
        return Err(Error::CertificationFailed(format!(
            "closed-loop spectral radius {worst}; {}",
            describe_instance(sys, cost, horizon)
        )));
    }
    Ok(StabilityReport {
        p,
        closed_loop_radius,
        applied_radius,
        block_radii,
        margin: 1.0 - worst,
    })
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub const SLOPE_BAND: (f64, f64) = (-1.3, -0.7);

#[derive(Debug, Clone, PartialEq)]
pub struct MuLimitReport {
    /// Ascending penalty grid.
    pub mus: Vec<f64>,
    /// Distance of the penalized solution from the exact one at each `μ`.
    pub errors: Vec<f64>,
    /// Constraint residual at each `μ`.
    pub residual_norms: Vec<f64>,
    /// Fitted slope of `log error` against `log μ`.
    pub slope: f64,
}

fn sorted_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.len() < 3 {
        return Err(Error::InvalidParameter("mu grid needs at least 3 points"));
    }
    if grid.iter().any(|&mu| !(mu > 0.0 && mu.is_finite())) {
        return Err(Error::InvalidParameter(
            "mu grid values must be positive and finite",
        ));
    }
    let mut mus = grid.to_vec();
    mus.sort_by(f64::total_cmp);
    Ok(mus)
}

fn judge(mus: Vec<f64>, errors: Vec<f64>, residual_norms: Vec<f64>) -> Result<MuLimitReport> {
    let log_mu: Vec<f64> = mus.iter().map(|&m| libm::log(m)).collect();
    let log_err: Vec<f64> = errors.iter().map(|&e| libm::log(e)).collect();
    let slope = fit_slope(&log_mu, &log_err);
    if !(slope >= SLOPE_BAND.0 && slope <= SLOPE_BAND.1) {
        return Err(Error::CertificationFailed(format!(
            "penalty slope {slope} outside [{}, {}] for mu = {mus:?}",
            SLOPE_BAND.0, SLOPE_BAND.1
        )));
    }
    if residual_norms.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::CertificationFailed(format!(
            "constraint residual not decreasing in mu: {residual_norms:?}"
        )));
    }
    Ok(MuLimitReport {
        mus,
        errors,
        residual_norms,
        slope,
    })
}

/// Convergence rate of the penalized gain to the exact gain on a stacked window.
pub fn certify_mu_limit(sp: &StackedProblem, grid: &[f64]) -> Result<MuLimitReport> {
    let mus = sorted_grid(grid)?;
    let exact = riccati::gain_exact(sp)?;
    let mut errors = Vec::with_capacity(mus.len());
    let mut residual_norms = Vec::with_capacity(mus.len());
    for &mu in &mus {
        let windowed = sp.with_mu(mu)?;
        let g = riccati::gain_penalized(&windowed)?;
        errors.push((&g.k - &exact.k).norm());
        residual_norms.push(riccati::residual(&windowed, &g).norm());
    }
    judge(mus, errors, residual_norms)
}

/// Same certificate for a generic equality-constrained least-squares problem.
pub fn certify_lse_mu_limit(p: &LseProblem, grid: &[f64]) -> Result<MuLimitReport> {
    let mus = sorted_grid(grid)?;
    let opts = WlsOptions::default();
    let exact = pls::solve_lse_exact(p, &opts)?;
    let mut errors = Vec::with_capacity(mus.len());
    let mut residual_norms = Vec::with_capacity(mus.len());
    for &mu in &mus {
        let eta = pls::solve_penalized(p, mu, &opts)?;
        errors.push((&eta - &exact).norm());
        residual_norms.push((&p.f * &eta - &p.phi).norm());
    }
    judge(mus, errors, residual_norms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Scenario;
    use nalgebra::dmatrix;

    #[test]
    fn example_fixed_point_certifies() {
        let s = Scenario::example1();
        let rep = certify_pd_fixed_point(&s.system, &s.cost, 2, 20, 7).unwrap();
        assert!(rep.max_deviation < FIXED_POINT_AGREEMENT);
        assert!(rep.min_eigenvalue > 0.0);
    }

    #[test]
    fn uncontrollable_unstable_is_rejected() {
        let sys = LtiSystem::new(dmatrix![1.5, 0.0; 0.0, 0.5], Mat::zeros(2, 1)).unwrap();
        let cost = CostSpec::with_terminal_q(Mat::identity(2, 2), dmatrix![1.0]).unwrap();
        assert!(matches!(
            certify_pd_fixed_point(&sys, &cost, 2, 5, 1),
            Err(Error::AssumptionViolated(_))
        ));
        assert!(matches!(
            certify_stability(&sys, &cost, 2),
            Err(Error::AssumptionViolated(_))
        ));
    }

    #[test]
    fn zero_dynamics_return_q() {
        let sys = LtiSystem::new(Mat::zeros(2, 2), dmatrix![1.0; 1.0]).unwrap();
        let q = dmatrix![2.0, 0.5; 0.5, 1.0];
        let cost = CostSpec::with_terminal_q(q.clone(), dmatrix![1.0]).unwrap();
        let rep = certify_pd_fixed_point(&sys, &cost, 3, 10, 3).unwrap();
        assert!((rep.p - q).amax() < 1e-14);
        assert!(rep.max_iterations <= 2);
    }

    #[test]
    fn example_is_stable_with_margin() {
        let s = Scenario::example1();
        let rep = certify_stability(&s.system, &s.cost, 2).unwrap();
        assert!(rep.margin > 0.0);
        assert!((rep.closed_loop_radius - rep.applied_radius).abs() < 1e-9);
        // second block is the square of the first at steady state
        assert!((rep.block_radii[1] - rep.block_radii[0].powi(2)).abs() < 1e-9);
    }

    #[test]
    fn marginal_uncontrolled_mode_seen_by_q_passes() {
        let sys = LtiSystem::new(dmatrix![1.0, 0.0; 0.0, 0.5], dmatrix![1.0; 0.0]).unwrap();
        let cost = CostSpec::with_terminal_q(Mat::identity(2, 2), dmatrix![1.0]).unwrap();
        let rep = certify_stability(&sys, &cost, 2).unwrap();
        assert!((rep.closed_loop_radius - 0.5).abs() < 1e-9);
    }

    #[test]
    fn expensive_control_limit() {
        let cost =
            |n: usize| CostSpec::with_terminal_q(Mat::identity(n, n), dmatrix![1e8]).unwrap();
        // stable A: the loop barely acts, ρ → ρ(A)
        let stable = LtiSystem::new(dmatrix![0.9, 0.1; 0.0, 0.7], dmatrix![0.0; 1.0]).unwrap();
        let rep = certify_stability(&stable, &cost(2), 1).unwrap();
        assert!((rep.closed_loop_radius - 0.9).abs() < 1e-4);
        // unstable A: the unstable pole is mirrored into the unit disc
        let unstable = LtiSystem::new(dmatrix![2.0], dmatrix![1.0]).unwrap();
        let rep = certify_stability(&unstable, &cost(1), 1).unwrap();
        assert!((rep.closed_loop_radius - 0.5).abs() < 1e-4);
    }

    #[test]
    fn example_mu_limit_slope() {
        let s = Scenario::example1();
        let sp = build_stacked(&s.system, &s.cost, s.cost.q(), 2, 1.0, None).unwrap();
        let grid = [1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8];
        let rep = certify_mu_limit(&sp, &grid).unwrap();
        assert!((rep.slope + 1.0).abs() < 0.05, "{}", rep.slope);
    }

    #[test]
    fn residual_vanishes_at_huge_mu() {
        let s = Scenario::example1();
        let sp = build_stacked(&s.system, &s.cost, s.cost.q(), 2, 1e12, None).unwrap();
        let g = riccati::gain_penalized(&sp).unwrap();
        assert!(riccati::residual(&sp, &g).norm() < 1e-6);
    }

    #[test]
    fn short_grid_is_rejected() {
        let s = Scenario::example1();
        let sp = build_stacked(&s.system, &s.cost, s.cost.q(), 2, 1.0, None).unwrap();
        assert_eq!(
            certify_mu_limit(&sp, &[1e3]),
            Err(Error::InvalidParameter("mu grid needs at least 3 points"))
        );
    }

    #[test]
    fn generators_are_reproducible() {
        let a = random_certifiable_case(&mut rng_from_seed(11)).unwrap();
        let b = random_certifiable_case(&mut rng_from_seed(11)).unwrap();
        assert_eq!(a, b);
        let u = random_undetectable_case(&mut rng_from_seed(5)).unwrap();
        assert!(!model::check_detectability(&u.system, u.cost.q(), 1e-10).unwrap());
    }

    #[test]
    fn random_systems_hit_target_radius() {
        let mut rng = rng_from_seed(2);
        for &r in &TARGET_RADII {
            let sys = random_system(&mut rng, 3, 1, r).unwrap();
            assert!((matops::spectral_radius(sys.a()).unwrap() - r).abs() < 1e-9);
        }
    }
}
