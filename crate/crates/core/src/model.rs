//! Plant, cost and constraint definitions plus the rank tests behind the
//! controllability/detectability assumptions.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matops::{self, DefinitenessClass, Mat, Vector};

fn check_finite(m: &Mat, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what })
    }
}

fn check_shape(m: &Mat, what: &'static str, expected: (usize, usize)) -> Result<()> {
    if m.shape() != expected {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found: m.shape(),
        });
    }
    Ok(())
}

/// `x_{k+1} = A x_k + B u_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: Mat,
    b: Mat,
}

impl LtiSystem {
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        let n = a.nrows();
        check_shape(&a, "A", (n, n))?;
        if b.nrows() != n {
            return Err(Error::DimensionMismatch {
                what: "B",
                expected: (n, b.ncols()),
                found: b.shape(),
            });
        }
        check_finite(&a, "A")?;
        check_finite(&b, "B")?;
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn propagate(&self, x: &Vector, u: &Vector) -> Vector {
        &self.a * x + &self.b * u
    }
}

/// Stage weights `Q`, `R` and the terminal weight `P`.
///
/// Construction only checks shapes and symmetry; definiteness is reported by
/// [`CostSpec::definiteness`] so that diagnostics can describe bad weights
/// instead of refusing to load them.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    q: Mat,
    r: Mat,
    p_terminal: Mat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostDefiniteness {
    pub q: DefinitenessClass,
    pub r: DefinitenessClass,
    pub p_terminal: DefinitenessClass,
}

impl CostDefiniteness {
    /// `Q ⪰ 0`, `R ≻ 0`, `P ≻ 0`.
    pub fn acceptable(&self) -> bool {
        self.q.is_psd() && self.r.is_pd() && self.p_terminal.is_pd()
    }
}

impl CostSpec {
    pub fn new(q: Mat, r: Mat, p_terminal: Mat) -> Result<Self> {
        let n = q.nrows();
        let m = r.nrows();
        check_shape(&q, "Q", (n, n))?;
        check_shape(&r, "R", (m, m))?;
        check_shape(&p_terminal, "P_terminal", (n, n))?;
        for (mat, what) in [(&q, "Q"), (&r, "R"), (&p_terminal, "P_terminal")] {
            check_finite(mat, what)?;
            let asym = matops::asymmetry(mat);
            if asym > matops::DEFAULT_TOL * mat.norm() {
                return Err(Error::NotSymmetric { asymmetry: asym });
            }
        }
        Ok(Self { q, r, p_terminal })
    }

    /// Terminal weight defaults to `Q`.
    pub fn with_terminal_q(q: Mat, r: Mat) -> Result<Self> {
        let p = q.clone();
        Self::new(q, r, p)
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn r(&self) -> &Mat {
        &self.r
    }

    pub fn p_terminal(&self) -> &Mat {
        &self.p_terminal
    }

    pub fn check_dims(&self, sys: &LtiSystem) -> Result<()> {
        check_shape(&self.q, "Q", (sys.n(), sys.n()))?;
        check_shape(&self.r, "R", (sys.m(), sys.m()))?;
        check_shape(&self.p_terminal, "P_terminal", (sys.n(), sys.n()))
    }

    pub fn definiteness(&self, tol: f64) -> Result<CostDefiniteness> {
        Ok(CostDefiniteness {
            q: matops::definiteness(&self.q, tol)?,
            r: matops::definiteness(&self.r, tol)?,
            p_terminal: matops::definiteness(&self.p_terminal, tol)?,
        })
    }
}

/// `{v : F v ≤ g}` with `F = [I; −I]`, `g = [upper; −lower]`.
pub fn box_to_polytope(lower: &Vector, upper: &Vector) -> Result<(Mat, Vector)> {
    if lower.len() != upper.len() {
        return Err(Error::LengthMismatch {
            expected: lower.len(),
            found: upper.len(),
        });
    }
    if let Some(index) =
        (0..lower.len()).find(|&i| lower[i].partial_cmp(&upper[i]).is_none_or(|o| o.is_gt()))
    {
        return Err(Error::EmptyBox { index });
    }
    let k = lower.len();
    let eye = Mat::identity(k, k);
    let f = matops::vstack(&[&eye, &(-&eye)]);
    let g = matops::vstack_vec(&[upper, &(-lower)]);
    Ok((f, g))
}

/// One box `lower ≤ v ≤ upper` with its polytope form.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub lower: Vector,
    pub upper: Vector,
    pub f: Mat,
    pub g: Vector,
}

impl BoxBounds {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        let (f, g) = box_to_polytope(&lower, &upper)?;
        Ok(Self { lower, upper, f, g })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// True when `lower − tol ≤ v ≤ upper + tol`.
    pub fn contains(&self, v: &Vector, tol: f64) -> bool {
        v.len() == self.dim()
            && (0..self.dim()).all(|i| v[i] >= self.lower[i] - tol && v[i] <= self.upper[i] + tol)
    }
}

/// State and input boxes; either part may be absent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoxConstraints {
    pub state: Option<BoxBounds>,
    pub input: Option<BoxBounds>,
}

impl BoxConstraints {
    pub fn new(state: Option<BoxBounds>, input: Option<BoxBounds>) -> Self {
        Self { state, input }
    }

    pub fn is_empty(&self) -> bool {
        self.state.is_none() && self.input.is_none()
    }

    pub fn check_dims(&self, sys: &LtiSystem) -> Result<()> {
        if let Some(s) = &self.state {
            if s.dim() != sys.n() {
                return Err(Error::LengthMismatch {
                    expected: sys.n(),
                    found: s.dim(),
                });
            }
        }
        if let Some(u) = &self.input {
            if u.dim() != sys.m() {
                return Err(Error::LengthMismatch {
                    expected: sys.m(),
                    found: u.dim(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub system: LtiSystem,
    pub cost: CostSpec,
    pub constraints: Option<BoxConstraints>,
    pub x0: Vector,
    /// Number of closed-loop steps.
    pub t_f: usize,
    /// Prediction horizon `l`.
    pub horizon: usize,
    /// Penalty parameter `μ`.
    pub mu: f64,
}

impl Scenario {
    pub fn new(
        system: LtiSystem,
        cost: CostSpec,
        constraints: Option<BoxConstraints>,
        x0: Vector,
        t_f: usize,
        horizon: usize,
        mu: f64,
    ) -> Result<Self> {
        let s = Self {
            system,
            cost,
            constraints,
            x0,
            t_f,
            horizon,
            mu,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.cost.check_dims(&self.system)?;
        if let Some(c) = &self.constraints {
            c.check_dims(&self.system)?;
        }
        if self.x0.len() != self.system.n() {
            return Err(Error::LengthMismatch {
                expected: self.system.n(),
                found: self.x0.len(),
            });
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "x0" });
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter(
                "prediction horizon must be at least 1",
            ));
        }
        if self.horizon > self.t_f {
            return Err(Error::InvalidParameter(
                "prediction horizon must not exceed the time horizon",
            ));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter("mu must be positive and finite"));
        }
        Ok(())
    }

    /// The constrained two-state benchmark: `t_f = 50`, `l = 2`, `μ = 10³`,
    /// `x₀ = (0.5, −0.1)`, `P = Q`, `−0.45 ≤ x ≤ 0.5`, `|u| ≤ 0.25`.
    pub fn example1() -> Self {
        let system = LtiSystem::new(
            Mat::from_row_slice(2, 2, &[0.9, 0.2, -0.4, 0.8]),
            Mat::from_row_slice(2, 1, &[0.1, 0.05]),
        )
        .expect("valid system");
        let cost = CostSpec::with_terminal_q(
            Mat::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 10.0]),
            Mat::from_element(1, 1, 1.0),
        )
        .expect("valid cost");
        let state = BoxBounds::new(
            Vector::from_vec(alloc::vec![-0.45, -0.45]),
            Vector::from_vec(alloc::vec![0.5, 0.5]),
        )
        .expect("valid state box");
        let input = BoxBounds::new(
            Vector::from_vec(alloc::vec![-0.25]),
            Vector::from_vec(alloc::vec![0.25]),
        )
        .expect("valid input box");
        Self::new(
            system,
            cost,
            Some(BoxConstraints::new(Some(state), Some(input))),
            Vector::from_vec(alloc::vec![0.5, -0.1]),
            50,
            2,
            1e3,
        )
        .expect("valid scenario")
    }

    /// Same scenario with the constraints dropped.
    pub fn without_constraints(&self) -> Self {
        Self {
            constraints: None,
            ..self.clone()
        }
    }
}

/// Kalman controllability matrix `[B, AB, …, Aⁿ⁻¹B]`.
pub fn controllability_matrix(sys: &LtiSystem) -> Mat {
    let n = sys.n();
    let mut blocks: Vec<Mat> = Vec::with_capacity(n);
    let mut cur = sys.b().clone();
    for _ in 0..n {
        let next = sys.a() * &cur;
        blocks.push(cur);
        cur = next;
    }
    let refs: Vec<&Mat> = blocks.iter().collect();
    matops::hstack(&refs)
}

/// Kalman rank test.
pub fn check_controllability(sys: &LtiSystem, tol: f64) -> bool {
    matops::rank_of(&controllability_matrix(sys), tol) == sys.n()
}

/// Real embedding `[[Re, −Im], [Im, Re]]` of a complex matrix; its rank is twice
/// the complex rank.
fn realify(re: &Mat, im: &Mat) -> Mat {
    let top = matops::hstack(&[re, &(-im)]);
    let bottom = matops::hstack(&[im, re]);
    matops::vstack(&[&top, &bottom])
}

/// Complex rank of `[zI − A, B]` (or its stacked variant), via the real embedding.
fn pbh_rank(
    z: nalgebra::Complex<f64>,
    a: &Mat,
    other: &Mat,
    side_by_side: bool,
    tol: f64,
) -> usize {
    let n = a.nrows();
    let re = Mat::identity(n, n) * z.re - a;
    let im = Mat::identity(n, n) * z.im;
    let zero = Mat::zeros(other.nrows(), other.ncols());
    let (re_full, im_full) = if side_by_side {
        (matops::hstack(&[&re, other]), matops::hstack(&[&im, &zero]))
    } else {
        (matops::vstack(&[&re, other]), matops::vstack(&[&im, &zero]))
    };
    matops::rank_of(&realify(&re_full, &im_full), tol) / 2
}

/// PBH test `rank([zI − A, B]) = n` at every eigenvalue `z` of `A` with
/// `|z| ≥ min_modulus`. `min_modulus = 0` gives controllability, `1` gives
/// stabilizability.
pub fn check_pbh_input(sys: &LtiSystem, min_modulus: f64, tol: f64) -> Result<bool> {
    let n = sys.n();
    for z in matops::eigenvalues(sys.a())? {
        if matops::modulus(z) >= min_modulus - tol && pbh_rank(z, sys.a(), sys.b(), true, tol) < n {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn check_controllability_pbh(sys: &LtiSystem, tol: f64) -> Result<bool> {
    check_pbh_input(sys, 0.0, tol)
}

pub fn check_stabilizability(sys: &LtiSystem, tol: f64) -> Result<bool> {
    check_pbh_input(sys, 1.0, tol)
}

/// `rank(col{zI − A, Q}) = n` for every eigenvalue `z` of `A` with `|z| ≥ 1`.
pub fn check_detectability(sys: &LtiSystem, q: &Mat, tol: f64) -> Result<bool> {
    let n = sys.n();
    for z in matops::eigenvalues(sys.a())? {
        if matops::modulus(z) >= 1.0 - tol && pbh_rank(z, sys.a(), q, false, tol) < n {
            return Ok(false);
        }
    }
    Ok(true)
}
