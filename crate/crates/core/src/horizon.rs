//! Horizon-stacked matrices for one prediction window.
//!
//! Decision layout is `Ū = col{X, U}` with `X = col{x_{k+1|k}, …, x_{k+l|k}}`
//! followed by `U = col{u_{k|k}, …, u_{k+l−1|k}}`. Every other module slices on
//! this layout.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matops::{self, Mat, Vector};
use crate::model::{BoxConstraints, CostSpec, LtiSystem};

#[derive(Debug, Clone, PartialEq)]
pub struct StackedProblem {
    pub horizon: usize,
    pub n: usize,
    pub m: usize,
    pub mu: f64,
    pub a: Mat,
    pub q: Mat,
    pub r: Mat,
    /// Terminal weight placed in the last block of `Q̄`.
    pub p_terminal: Mat,
    /// `col{A, 0, …, 0}`, `(l·n)×n`.
    pub a_bar: Mat,
    /// `blockdiag(A, …, A)·S`, `S` the lower block shift.
    pub a_tilde: Mat,
    /// `I − Ã`.
    pub b1_bar: Mat,
    /// `blockdiag(B, …, B)`.
    pub b2_bar: Mat,
    pub q_bar: Mat,
    pub r_bar: Mat,
    /// `blockdiag(Q̄, R̄)`: the design matrix.
    pub h1: Mat,
    /// `blockdiag(Q, μI_{l·n})`.
    pub h2: Mat,
    /// `[B̄₁, −B̄₂]`.
    pub aeq: Mat,
    /// `col{0_{N×n}, −I_n, Ā}` with `N = l·n + l·m`.
    pub script_a: Mat,
    /// `col{I_N, 0_{n×N}, [B̄₁, −B̄₂]}`.
    pub script_b: Mat,
    /// Stacked inequality rows `F̄ Ū ≤ ḡ`; `None` when unconstrained.
    pub f_bar: Option<Mat>,
    pub g_bar: Option<Vector>,
}

/// Predicted states and inputs of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedDecision {
    pub x: Vector,
    pub u: Vector,
}

impl StackedDecision {
    pub fn zeros(sp: &StackedProblem) -> Self {
        Self {
            x: Vector::zeros(sp.state_len()),
            u: Vector::zeros(sp.input_len()),
        }
    }

    /// Splits `Ū = col{X, U}`.
    pub fn from_ubar(sp: &StackedProblem, ubar: &Vector) -> Result<Self> {
        if ubar.len() != sp.decision_len() {
            return Err(Error::LengthMismatch {
                expected: sp.decision_len(),
                found: ubar.len(),
            });
        }
        Ok(Self {
            x: ubar.rows(0, sp.state_len()).into_owned(),
            u: ubar.rows(sp.state_len(), sp.input_len()).into_owned(),
        })
    }

    pub fn ubar(&self) -> Vector {
        matops::vstack_vec(&[&self.x, &self.u])
    }

    /// Forward rollout of the model from `x0` under the input sequence `u`.
    pub fn rollout(sys: &LtiSystem, x0: &Vector, u: &Vector) -> Self {
        let (n, m) = (sys.n(), sys.m());
        let l = u.len() / m.max(1);
        let mut x = Vector::zeros(l * n);
        let mut cur = x0.clone();
        for i in 0..l {
            let ui = u.rows(i * m, m).into_owned();
            cur = sys.propagate(&cur, &ui);
            x.rows_mut(i * n, n).copy_from(&cur);
        }
        Self { x, u: u.clone() }
    }

    pub fn first_input(&self, m: usize) -> Vector {
        self.u.rows(0, m).into_owned()
    }

    pub fn first_state(&self, n: usize) -> Vector {
        self.x.rows(0, n).into_owned()
    }
}

impl StackedProblem {
    pub fn state_len(&self) -> usize {
        self.horizon * self.n
    }

    pub fn input_len(&self) -> usize {
        self.horizon * self.m
    }

    pub fn decision_len(&self) -> usize {
        self.state_len() + self.input_len()
    }

    /// `ℋ = H₁ ⊕ H₂`.
    pub fn script_h(&self) -> Mat {
        matops::block_diag(&[&self.h1, &self.h2])
    }

    /// `Ā x₀`, the equality right-hand side.
    pub fn beq(&self, x0: &Vector) -> Vector {
        &self.a_bar * x0
    }

    /// Same window with a different penalty parameter.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter("mu must be positive and finite"));
        }
        let ln = self.state_len();
        Ok(Self {
            mu,
            h2: matops::block_diag(&[&self.q, &(Mat::identity(ln, ln) * mu)]),
            ..self.clone()
        })
    }

    /// `B̄₁X − Āx₀ − B̄₂U`.
    pub fn dynamics_residual(&self, x0: &Vector, d: &StackedDecision) -> Vector {
        &self.b1_bar * &d.x - &self.a_bar * x0 - &self.b2_bar * &d.u
    }

    /// `XᵀQ̄X + UᵀR̄U + x₀ᵀQx₀`.
    pub fn stage_cost(&self, x0: &Vector, d: &StackedDecision) -> f64 {
        matops::weighted_sq_norm(&d.x, &self.q_bar)
            + matops::weighted_sq_norm(&d.u, &self.r_bar)
            + matops::weighted_sq_norm(x0, &self.q)
    }
}

/// `1_l ⊗ v`.
fn repeat(v: &Vector, times: usize) -> Vector {
    Vector::from_iterator(v.len() * times, (0..times).flat_map(|_| v.iter().copied()))
}

fn lower_shift(blocks: usize, n: usize) -> Mat {
    let dim = blocks * n;
    Mat::from_fn(dim, dim, |i, j| if i == j + n { 1.0 } else { 0.0 })
}

/// Builds every stacked matrix for a window of length `horizon` with terminal
/// weight `p_current`.
pub fn build_stacked(
    sys: &LtiSystem,
    cost: &CostSpec,
    p_current: &Mat,
    horizon: usize,
    mu: f64,
    constraints: Option<&BoxConstraints>,
) -> Result<StackedProblem> {
    let (n, m) = (sys.n(), sys.m());
    cost.check_dims(sys)?;
    if p_current.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            what: "terminal weight",
            expected: (n, n),
            found: p_current.shape(),
        });
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter(
            "prediction horizon must be at least 1",
        ));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter("mu must be positive and finite"));
    }
    if let Some(c) = constraints {
        c.check_dims(sys)?;
    }

    let l = horizon;
    let (ln, lm) = (l * n, l * m);
    let eye_l = Mat::identity(l, l);

    let mut a_bar = Mat::zeros(ln, n);
    a_bar.view_mut((0, 0), (n, n)).copy_from(sys.a());
    let a_tilde = matops::kron(&eye_l, sys.a()) * lower_shift(l, n);
    let b1_bar = Mat::identity(ln, ln) - &a_tilde;
    let b2_bar = matops::kron(&eye_l, sys.b());

    let mut q_bar = matops::kron(&eye_l, cost.q());
    q_bar
        .view_mut((ln - n, ln - n), (n, n))
        .copy_from(p_current);
    let r_bar = matops::kron(&eye_l, cost.r());
    let h1 = matops::block_diag(&[&q_bar, &r_bar]);
    let h2 = matops::block_diag(&[cost.q(), &(Mat::identity(ln, ln) * mu)]);

    let aeq = matops::hstack(&[&b1_bar, &(-&b2_bar)]);
    let big_n = ln + lm;
    let script_a = matops::vstack(&[&Mat::zeros(big_n, n), &(-Mat::identity(n, n)), &a_bar]);
    let script_b = matops::vstack(&[&Mat::identity(big_n, big_n), &Mat::zeros(n, big_n), &aeq]);

    let (f_bar, g_bar) = match constraints {
        Some(c) if !c.is_empty() => {
            let mut rows: Vec<Mat> = Vec::new();
            let mut rhs: Vec<Vector> = Vec::new();
            if let Some(s) = &c.state {
                rows.push(matops::hstack(&[
                    &matops::kron(&eye_l, &s.f),
                    &Mat::zeros(l * s.f.nrows(), lm),
                ]));
                rhs.push(repeat(&s.g, l));
            }
            if let Some(u) = &c.input {
                rows.push(matops::hstack(&[
                    &Mat::zeros(l * u.f.nrows(), ln),
                    &matops::kron(&eye_l, &u.f),
                ]));
                rhs.push(repeat(&u.g, l));
            }
            let row_refs: Vec<&Mat> = rows.iter().collect();
            let rhs_refs: Vec<&Vector> = rhs.iter().collect();
            (
                Some(matops::vstack(&row_refs)),
                Some(matops::vstack_vec(&rhs_refs)),
            )
        }
        _ => (None, None),
    };

    Ok(StackedProblem {
        horizon: l,
        n,
        m,
        mu,
        a: sys.a().clone(),
        q: cost.q().clone(),
        r: cost.r().clone(),
        p_terminal: p_current.clone(),
        a_bar,
        a_tilde,
        b1_bar,
        b2_bar,
        q_bar,
        r_bar,
        h1,
        h2,
        aeq,
        script_a,
        script_b,
        f_bar,
        g_bar,
    })
}
