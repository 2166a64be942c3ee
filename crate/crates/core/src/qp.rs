//! Dense convex QP: `min zᵀHz + cᵀz  s.t.  A_eq z = b_eq,  F z ≤ g`.
//!
//! Inequalities are handled by the Goldfarb–Idnani dual active-set method:
//! start from the equality-constrained minimizer and repeatedly add the most
//! violated inequality, dropping active ones whose multiplier would turn
//! negative. Every iterate is dual feasible, so the first primal-feasible
//! iterate is optimal, and a violated constraint that cannot be added proves
//! the feasible set empty.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::horizon::StackedProblem;
use crate::matops::{self, Mat, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: Mat,
    pub c: Vector,
    pub aeq: Mat,
    pub beq: Vector,
    pub fineq: Mat,
    pub gineq: Vector,
}

impl QpProblem {
    pub fn new(h: Mat, aeq: Mat, beq: Vector, fineq: Mat, gineq: Vector) -> Result<Self> {
        let n = h.nrows();
        let p = Self {
            c: Vector::zeros(n),
            h,
            aeq,
            beq,
            fineq,
            gineq,
        };
        p.validate()?;
        Ok(p)
    }

    /// Equality-only problem.
    pub fn equality(h: Mat, aeq: Mat, beq: Vector) -> Result<Self> {
        let n = h.nrows();
        Self::new(h, aeq, beq, Mat::zeros(0, n), Vector::zeros(0))
    }

    pub fn with_linear(mut self, c: Vector) -> Result<Self> {
        self.c = c;
        self.validate()?;
        Ok(self)
    }

    /// The stacked window at initial state `x0`: `H = H₁`, `A_eq = [B̄₁, −B̄₂]`,
    /// `b_eq = Āx0`, and `F̄Ū ≤ ḡ` when the window carries constraints.
    pub fn from_stacked(sp: &StackedProblem, x0: &Vector) -> Result<Self> {
        let n = sp.decision_len();
        let (f, g) = match (&sp.f_bar, &sp.g_bar) {
            (Some(f), Some(g)) => (f.clone(), g.clone()),
            _ => (Mat::zeros(0, n), Vector::zeros(0)),
        };
        Self::new(sp.h1.clone(), sp.aeq.clone(), sp.beq(x0), f, g)
    }

    pub fn without_inequalities(&self) -> Self {
        let n = self.dim();
        Self {
            fineq: Mat::zeros(0, n),
            gineq: Vector::zeros(0),
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn num_eq(&self) -> usize {
        self.aeq.nrows()
    }

    pub fn num_ineq(&self) -> usize {
        self.fineq.nrows()
    }

    pub fn objective(&self, z: &Vector) -> f64 {
        matops::weighted_sq_norm(z, &self.h) + self.c.dot(z)
    }

    /// Largest violation `max(|A_eq z − b_eq|, F z − g)`, or 0.
    pub fn max_violation(&self, z: &Vector) -> f64 {
        let eq = (&self.aeq * z - &self.beq).amax();
        let ineq = (&self.fineq * z - &self.gineq).max();
        eq.max(if self.num_ineq() > 0 { ineq } else { 0.0 })
            .max(0.0)
    }

    fn validate(&self) -> Result<()> {
        let n = self.h.nrows();
        let dim = |what, expected: (usize, usize), m: &Mat| {
            if m.shape() != expected {
                Err(Error::DimensionMismatch {
                    what,
                    expected,
                    found: m.shape(),
                })
            } else {
                Ok(())
            }
        };
        dim("QP Hessian", (n, n), &self.h)?;
        dim("equality matrix", (self.aeq.nrows(), n), &self.aeq)?;
        dim("inequality matrix", (self.fineq.nrows(), n), &self.fineq)?;
        for (expected, found) in [
            (n, self.c.len()),
            (self.aeq.nrows(), self.beq.len()),
            (self.fineq.nrows(), self.gineq.len()),
        ] {
            if expected != found {
                return Err(Error::LengthMismatch { expected, found });
            }
        }
        let finite = self.h.iter().all(|v| v.is_finite())
            && self.c.iter().all(|v| v.is_finite())
            && self.aeq.iter().all(|v| v.is_finite())
            && self.beq.iter().all(|v| v.is_finite())
            && self.fineq.iter().all(|v| v.is_finite())
            && self.gineq.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite { what: "QP data" });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
            QpStatus::IterationLimit => "iteration_limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub ubar: Vector,
    /// Sorted indices of the inequality rows in the final working set.
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub status: QpStatus,
    /// `ν` in `2Hz + c + A_eqᵀν + Fᵀλ = 0`.
    pub eq_multipliers: Vector,
    /// `λ`, one entry per inequality row, zero off the active set.
    pub ineq_multipliers: Vector,
    /// Active-set changes performed.
    pub iterations: usize,
}

impl QpSolution {
    pub fn ensure_optimal(self) -> Result<Self> {
        match self.status {
            QpStatus::Optimal => Ok(self),
            QpStatus::Infeasible => Err(Error::Infeasible),
            QpStatus::IterationLimit => Err(Error::IterationLimit {
                changes: self.iterations,
            }),
        }
    }
}

fn check_hessian(p: &QpProblem) -> Result<()> {
    if !matops::definiteness(&p.h, matops::DEFAULT_TOL)?.is_pd() {
        return Err(Error::NotPd { what: "QP Hessian" });
    }
    Ok(())
}

/// Solves `[[2H, Aᵀ], [A, 0]]·[z; ν] = [−c; b]`.
pub fn solve_equality_kkt(h: &Mat, c: &Vector, a: &Mat, b: &Vector) -> Result<(Vector, Vector)> {
    let n = h.nrows();
    let k = a.nrows();
    if k == 0 {
        let z = matops::solve_vec(&(h * 2.0), &(-c))?;
        return Ok((z, Vector::zeros(0)));
    }
    let kkt = matops::vstack(&[
        &matops::hstack(&[&(h * 2.0), &a.transpose()]),
        &matops::hstack(&[a, &Mat::zeros(k, k)]),
    ]);
    let rhs = matops::vstack_vec(&[&(-c), b]);
    let sol = matops::solve_vec(&kkt, &rhs).map_err(|_| Error::SingularKkt)?;
    Ok((sol.rows(0, n).into_owned(), sol.rows(n, k).into_owned()))
}

/// Equality-constrained minimizer from the KKT system.
pub fn solve_eq_qp(p: &QpProblem) -> Result<QpSolution> {
    if p.num_ineq() > 0 {
        return Err(Error::InvalidParameter(
            "solve_eq_qp called with inequality constraints",
        ));
    }
    check_hessian(p)?;
    let (z, nu) = solve_equality_kkt(&p.h, &p.c, &p.aeq, &p.beq)?;
    Ok(QpSolution {
        objective: p.objective(&z),
        ubar: z,
        active_set: Vec::new(),
        status: QpStatus::Optimal,
        eq_multipliers: nu,
        ineq_multipliers: Vector::zeros(0),
        iterations: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    /// Absolute tolerance on constraint residuals.
    pub feas_tol: f64,
    /// Multipliers in `[−dual_clamp, 0)` are reported as zero.
    pub dual_clamp: f64,
    /// Active-set change budget; `None` means `3·(inequality rows)`.
    pub max_changes: Option<usize>,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-9,
            dual_clamp: 1e-10,
            max_changes: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Row {
    Eq(usize),
    Ineq(usize),
}

/// Dual active-set solver. Holds scratch state for one solve at a time.
#[derive(Debug, Clone, Default)]
pub struct ActiveSetSolver {
    pub options: QpOptions,
    working: Vec<Row>,
    duals: Vec<f64>,
}

impl ActiveSetSolver {
    pub fn new(options: QpOptions) -> Self {
        Self {
            options,
            ..Self::default()
        }
    }

    pub fn solve(&mut self, p: &QpProblem) -> Result<QpSolution> {
        self.solve_warm(p, &[])
    }

    /// Like [`solve`](Self::solve), but offers the rows in `hint` (typically the
    /// previous step's active set) first whenever they are violated. The
    /// optimum is unique, so the hint only changes the path taken.
    pub fn solve_warm(&mut self, p: &QpProblem, hint: &[usize]) -> Result<QpSolution> {
        check_hessian(p)?;
        let m_ineq = p.num_ineq();
        let limit = self.options.max_changes.unwrap_or(3 * m_ineq);
        let tol = self.options.feas_tol;

        let g = &p.h * 2.0;
        let g_inv = matops::inverse(&g)?;
        let g_scale = g_inv.norm().max(f64::MIN_POSITIVE);

        let (mut z, nu) = solve_equality_kkt(&p.h, &p.c, &p.aeq, &p.beq)?;
        self.working = (0..p.num_eq()).map(Row::Eq).collect();
        // Normals for the `nᵀz ≥ b` convention: equalities keep their sign,
        // `Fᵢz ≤ gᵢ` becomes `−Fᵢz ≥ −gᵢ`; multipliers follow `Gz + c = Σuᵢnᵢ`.
        self.duals = nu.iter().map(|v| -v).collect();

        let normal = |row: Row| -> (Vector, f64) {
            match row {
                Row::Eq(i) => (p.aeq.row(i).transpose(), p.beq[i]),
                Row::Ineq(i) => (-p.fineq.row(i).transpose(), -p.gineq[i]),
            }
        };

        let mut pending: Vec<usize> = hint.iter().copied().filter(|&i| i < m_ineq).collect();
        let mut changes = 0usize;
        let mut status = QpStatus::Optimal;

        'outer: loop {
            let in_working = |w: &[Row], i: usize| w.contains(&Row::Ineq(i));
            let violation = |z: &Vector, i: usize| p.fineq.row(i).dot(&z.transpose()) - p.gineq[i];

            let mut chosen = None;
            while let Some(i) = (!pending.is_empty()).then(|| pending.remove(0)) {
                if !in_working(&self.working, i) && violation(&z, i) > tol {
                    chosen = Some(i);
                    break;
                }
            }
            if chosen.is_none() {
                let mut worst = tol;
                for i in 0..m_ineq {
                    if in_working(&self.working, i) {
                        continue;
                    }
                    let v = violation(&z, i);
                    if v > worst {
                        worst = v;
                        chosen = Some(i);
                    }
                }
            }
            let Some(entering) = chosen else { break };
            let (n_plus, b_plus) = normal(Row::Ineq(entering));
            let mut u_plus = 0.0;

            loop {
                if changes >= limit {
                    status = QpStatus::IterationLimit;
                    break 'outer;
                }
                let q = self.working.len();
                let (d, r) = if q == 0 {
                    (&g_inv * &n_plus, Vector::zeros(0))
                } else {
                    let cols: Vec<Vector> = self.working.iter().map(|&w| normal(w).0).collect();
                    let nmat = Mat::from_columns(&cols);
                    let gn = &g_inv * &nmat;
                    let m = nmat.transpose() * &gn;
                    let n_star = matops::solve(&m, &gn.transpose())?;
                    let r = &n_star * &n_plus;
                    let d = &g_inv * &n_plus - &gn * &r;
                    (d, r)
                };

                let mut t1 = f64::INFINITY;
                let mut drop_at = None;
                for (j, (&row, &rj)) in self.working.iter().zip(r.iter()).enumerate() {
                    if let Row::Ineq(_) = row {
                        if rj > 1e-14 {
                            let ratio = self.duals[j] / rj;
                            if ratio < t1 {
                                t1 = ratio;
                                drop_at = Some(j);
                            }
                        }
                    }
                }

                let curvature = n_plus.dot(&d);
                let t2 = if curvature <= 1e-14 * g_scale * n_plus.norm_squared() {
                    f64::INFINITY
                } else {
                    (b_plus - n_plus.dot(&z)) / curvature
                };

                if t1.is_infinite() && t2.is_infinite() {
                    status = QpStatus::Infeasible;
                    break 'outer;
                }
                let t = t1.min(t2);
                if t2.is_finite() {
                    z += &d * t;
                }
                for (u, rj) in self.duals.iter_mut().zip(r.iter()) {
                    *u -= t * rj;
                }
                u_plus += t;
                changes += 1;
                if t2 <= t1 {
                    self.working.push(Row::Ineq(entering));
                    self.duals.push(u_plus);
                    continue 'outer;
                }
                let j = drop_at.expect("finite t1 has a blocking row");
                self.working.remove(j);
                self.duals.remove(j);
            }
        }

        let mut eq_multipliers = Vector::zeros(p.num_eq());
        let mut ineq_multipliers = Vector::zeros(m_ineq);
        let mut active_set = Vec::new();
        for (&row, &u) in self.working.iter().zip(self.duals.iter()) {
            match row {
                Row::Eq(i) => eq_multipliers[i] = -u,
                Row::Ineq(i) => {
                    let u = if u < 0.0 && u >= -self.options.dual_clamp {
                        0.0
                    } else {
                        u
                    };
                    ineq_multipliers[i] = u;
                    active_set.push(i);
                }
            }
        }
        active_set.sort_unstable();
        Ok(QpSolution {
            objective: p.objective(&z),
            ubar: z,
            active_set,
            status,
            eq_multipliers,
            ineq_multipliers,
            iterations: changes,
        })
    }
}

/// [`ActiveSetSolver`] with default options and no warm start.
pub fn solve_qp(p: &QpProblem) -> Result<QpSolution> {
    ActiveSetSolver::default().solve(p)
}

/// Stationarity, primal feasibility, dual feasibility and complementary
/// slackness of `s` for `p`, each within `tol`.
pub fn check_kkt(p: &QpProblem, s: &QpSolution, tol: f64) -> bool {
    if s.status != QpStatus::Optimal
        || s.ubar.len() != p.dim()
        || s.eq_multipliers.len() != p.num_eq()
        || s.ineq_multipliers.len() != p.num_ineq()
    {
        return false;
    }
    let z = &s.ubar;
    let grad = &p.h * z * 2.0
        + &p.c
        + p.aeq.transpose() * &s.eq_multipliers
        + p.fineq.transpose() * &s.ineq_multipliers;
    if grad.amax() > tol {
        return false;
    }
    if p.max_violation(z) > tol {
        return false;
    }
    let slack = &p.fineq * z - &p.gineq;
    s.ineq_multipliers
        .iter()
        .zip(slack.iter())
        .all(|(&l, &sl)| l >= -tol && (l * sl).abs() <= tol)
}
