//! Receding-horizon loop for Re-MPC and the fixed-weight baseline, plus run
//! metrics.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::horizon::{build_stacked, StackedDecision, StackedProblem};
use crate::matops::{self, Mat, Vector};
use crate::model::{self, CostSpec, Scenario};
use crate::qp::{self, ActiveSetSolver, QpOptions, QpProblem, QpStatus};
use crate::riccati::{self, GainMatrices};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControllerKind {
    /// Re-MPC with the `μ`-free gain and update.
    ReMpcExact,
    /// Re-MPC with the method-of-weighting gain and update at penalty `mu`.
    ReMpcPenalized { mu: f64 },
    /// Fixed design matrix: the terminal weight never changes.
    ClassicalMpc,
}

impl ControllerKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ControllerKind::ReMpcPenalized { mu } if !(mu > 0.0 && mu.is_finite()) => {
                Err(Error::InvalidParameter("mu must be positive and finite"))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ControllerKind::ReMpcExact => "re-mpc-exact",
            ControllerKind::ReMpcPenalized { .. } => "re-mpc",
            ControllerKind::ClassicalMpc => "c-mpc",
        }
    }

    pub fn updates_design_matrix(&self) -> bool {
        !matches!(self, ControllerKind::ClassicalMpc)
    }
}

/// How the input is computed when the scenario has no inequality constraints.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum UnconstrainedPath {
    /// Penalized gain for `ReMpcPenalized`, `μ`-free gain otherwise.
    #[default]
    KindDefault,
    /// Method-of-weighting gain at the given penalty, whatever the kind.
    PenaltyGain { mu: f64 },
    /// `μ`-free closed-form gain.
    ClosedForm,
    /// Equality-constrained QP solved through its KKT system.
    EqualityQp,
}

/// Gain fed to the design-matrix update on constrained steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DesignUpdate {
    /// Gain of the equality-constrained window (inequalities ignored).
    #[default]
    UnconstrainedGain,
    /// Linear part of the QP solution with its final active set held tight.
    ActiveSetGain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub unconstrained_path: UnconstrainedPath,
    pub design_update: DesignUpdate,
    pub qp: QpOptions,
    /// Offer the previous step's active set to the QP solver first.
    pub warm_start: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            unconstrained_path: UnconstrainedPath::default(),
            design_update: DesignUpdate::default(),
            qp: QpOptions::default(),
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    /// `None` when the step was solved without the QP.
    pub qp_status: Option<QpStatus>,
    pub active_set: Vec<usize>,
    pub qp_iterations: usize,
    /// `‖H₁‖_F` of the window that was solved.
    pub h1_norm: f64,
    /// `‖ℛ‖_F` of the gain used for the update (0 for the baseline).
    pub update_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub u: Vector,
    pub x_pred: Vector,
    pub p_next: Mat,
    pub decision: StackedDecision,
    pub diagnostics: StepDiagnostics,
}

/// Per-run controller state: the scenario, the kind and a QP solver whose
/// working set carries over between steps.
#[derive(Debug, Clone)]
pub struct Controller<'a> {
    scenario: &'a Scenario,
    kind: ControllerKind,
    options: StepOptions,
    solver: ActiveSetSolver,
    last_active: Vec<usize>,
}

impl<'a> Controller<'a> {
    pub fn new(scenario: &'a Scenario, kind: ControllerKind, options: StepOptions) -> Result<Self> {
        scenario.validate()?;
        kind.validate()?;
        if let UnconstrainedPath::PenaltyGain { mu } = options.unconstrained_path {
            ControllerKind::ReMpcPenalized { mu }.validate()?;
        }
        Ok(Self {
            scenario,
            kind,
            options,
            solver: ActiveSetSolver::new(options.qp),
            last_active: Vec::new(),
        })
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    fn window(&self, p_k: &Mat) -> Result<StackedProblem> {
        let mu = match self.kind {
            ControllerKind::ReMpcPenalized { mu } => mu,
            _ => self.scenario.mu,
        };
        let constraints = self.scenario.constraints.as_ref().filter(|c| !c.is_empty());
        build_stacked(
            &self.scenario.system,
            &self.scenario.cost,
            p_k,
            self.scenario.horizon,
            mu,
            constraints,
        )
    }

    fn default_gain(&self, sp: &StackedProblem) -> Result<GainMatrices> {
        match self.kind {
            ControllerKind::ReMpcPenalized { .. } => riccati::gain_penalized(sp),
            _ => riccati::gain_exact(sp),
        }
    }

    /// One receding-horizon step from state `x_k` with terminal weight `p_k`.
    pub fn step(&mut self, x_k: &Vector, p_k: &Mat) -> Result<StepOutput> {
        if !matops::definiteness(p_k, matops::DEFAULT_TOL)?.is_pd() {
            return Err(Error::NotPd {
                what: "terminal weight",
            });
        }
        let sp = self.window(p_k)?;
        let h1_norm = sp.h1.norm();

        let mut qp_status = None;
        let mut active_set = Vec::new();
        let mut qp_iterations = 0;
        let decision = if sp.f_bar.is_some() {
            let problem = QpProblem::from_stacked(&sp, x_k)?;
            let hint = if self.options.warm_start {
                core::mem::take(&mut self.last_active)
            } else {
                Vec::new()
            };
            let sol = self.solver.solve_warm(&problem, &hint)?;
            qp_status = Some(sol.status);
            qp_iterations = sol.iterations;
            let sol = sol.ensure_optimal()?;
            active_set = sol.active_set.clone();
            self.last_active = sol.active_set;
            StackedDecision::from_ubar(&sp, &sol.ubar)?
        } else {
            match self.options.unconstrained_path {
                UnconstrainedPath::KindDefault => self.default_gain(&sp)?.decision(x_k),
                UnconstrainedPath::PenaltyGain { mu } => {
                    riccati::gain_penalized(&sp.with_mu(mu)?)?.decision(x_k)
                }
                UnconstrainedPath::ClosedForm => riccati::gain_exact(&sp)?.decision(x_k),
                UnconstrainedPath::EqualityQp => {
                    let sol = qp::solve_eq_qp(&QpProblem::from_stacked(&sp, x_k)?)?;
                    StackedDecision::from_ubar(&sp, &sol.ubar)?
                }
            }
        };

        let (p_next, update_residual) = if self.kind.updates_design_matrix() {
            let gains = match self.options.design_update {
                DesignUpdate::ActiveSetGain if !active_set.is_empty() => {
                    riccati::gain_active_set(&sp, &active_set)?
                }
                _ => self.default_gain(&sp)?,
            };
            let state = match self.kind {
                ControllerKind::ReMpcPenalized { .. } => {
                    riccati::update_design_matrix_penalized(&sp, &gains)?
                }
                _ => riccati::update_design_matrix_exact(&sp, &gains)?,
            };
            (state.p, state.residual)
        } else {
            (p_k.clone(), 0.0)
        };

        let (n, m) = (sp.n, sp.m);
        Ok(StepOutput {
            u: decision.first_input(m),
            x_pred: decision.first_state(n),
            p_next,
            decision,
            diagnostics: StepDiagnostics {
                qp_status,
                active_set,
                qp_iterations,
                h1_norm,
                update_residual,
            },
        })
    }
}

/// Single step with default options and a fresh solver.
pub fn step(
    scenario: &Scenario,
    kind: ControllerKind,
    x_k: &Vector,
    p_k: &Mat,
) -> Result<StepOutput> {
    Controller::new(scenario, kind, StepOptions::default())?.step(x_k, p_k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRun {
    pub kind: ControllerKind,
    /// `x_0 … x_{t_f}`.
    pub states: Vec<Vector>,
    /// `u_0 … u_{t_f − 1}`.
    pub inputs: Vec<Vector>,
    /// First predicted state of each window.
    pub predicted_states: Vec<Vector>,
    /// Terminal weight used at each step.
    pub p_history: Vec<Mat>,
    pub h1_norms: Vec<f64>,
    /// `x_kᵀQx_k + u_kᵀRu_k`.
    pub per_step_cost: Vec<f64>,
    pub solver_statuses: Vec<Option<QpStatus>>,
    pub active_set_sizes: Vec<usize>,
    pub qp_iterations: Vec<usize>,
    /// Assumption checks that failed before the run started.
    pub warnings: Vec<String>,
}

impl ClosedLoopRun {
    fn start(kind: ControllerKind, x0: &Vector, t_f: usize) -> Self {
        let mut states = Vec::with_capacity(t_f + 1);
        states.push(x0.clone());
        Self {
            kind,
            states,
            inputs: Vec::with_capacity(t_f),
            predicted_states: Vec::with_capacity(t_f),
            p_history: Vec::with_capacity(t_f),
            h1_norms: Vec::with_capacity(t_f),
            per_step_cost: Vec::with_capacity(t_f),
            solver_statuses: Vec::with_capacity(t_f),
            active_set_sizes: Vec::with_capacity(t_f),
            qp_iterations: Vec::with_capacity(t_f),
            warnings: Vec::new(),
        }
    }

    /// Completed steps.
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("a run always holds x0")
    }
}

/// A run aborted at `step`; `partial` holds everything recorded before it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunError {
    pub step: usize,
    pub source: Error,
    pub partial: Box<ClosedLoopRun>,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run aborted at step {}: {}", self.step, self.source)
    }
}

impl core::error::Error for RunError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        Some(&self.source)
    }
}

impl From<RunError> for Error {
    fn from(e: RunError) -> Self {
        Error::StepFailed {
            step: e.step,
            source: Box::new(e.source),
        }
    }
}

/// Human-readable list of the standing-assumption checks that fail.
pub fn assumption_warnings(scenario: &Scenario) -> Vec<String> {
    let tol = matops::DEFAULT_TOL;
    let mut out = Vec::new();
    let sys = &scenario.system;
    match model::check_stabilizability(sys, tol) {
        Ok(true) => {}
        Ok(false) => out.push("(A, B) is not stabilizable".to_string()),
        Err(e) => out.push(alloc::format!("stabilizability check failed: {e}")),
    }
    match model::check_detectability(sys, scenario.cost.q(), tol) {
        Ok(true) => {}
        Ok(false) => out.push("(A, Q) is not detectable".to_string()),
        Err(e) => out.push(alloc::format!("detectability check failed: {e}")),
    }
    match scenario.cost.definiteness(tol) {
        Ok(d) if d.acceptable() => {}
        Ok(d) => out.push(alloc::format!(
            "weights not admissible: Q {:?}, R {:?}, P {:?}",
            d.q,
            d.r,
            d.p_terminal
        )),
        Err(e) => out.push(alloc::format!("weight check failed: {e}")),
    }
    out
}

pub fn run_closed_loop(
    scenario: &Scenario,
    kind: ControllerKind,
) -> core::result::Result<ClosedLoopRun, RunError> {
    run_closed_loop_with(scenario, kind, StepOptions::default())
}

/// Runs `t_f` steps from `x0` with `P₀ = P_terminal`; the plant is advanced by
/// the true model with the applied input.
pub fn run_closed_loop_with(
    scenario: &Scenario,
    kind: ControllerKind,
    options: StepOptions,
) -> core::result::Result<ClosedLoopRun, RunError> {
    let mut run = ClosedLoopRun::start(kind, &scenario.x0, scenario.t_f);
    let fail = |step, source, run: ClosedLoopRun| RunError {
        step,
        source,
        partial: Box::new(run),
    };
    let mut controller = match Controller::new(scenario, kind, options) {
        Ok(c) => c,
        Err(e) => return Err(fail(0, e, run)),
    };
    run.warnings = assumption_warnings(scenario);
    for w in &run.warnings {
        log::warn!("{w}");
    }

    let (q, r) = (scenario.cost.q(), scenario.cost.r());
    let mut p = scenario.cost.p_terminal().clone();
    for k in 0..scenario.t_f {
        let x = run.states[k].clone();
        let out = match controller.step(&x, &p) {
            Ok(o) => o,
            Err(e) => {
                log::debug!("step {k} failed: {e}");
                return Err(fail(k, e, run));
            }
        };
        log::debug!(
            "step {k}: u = {:?}, |H1| = {:.6}, active = {:?}",
            out.u.as_slice(),
            out.diagnostics.h1_norm,
            out.diagnostics.active_set
        );
        run.per_step_cost
            .push(matops::weighted_sq_norm(&x, q) + matops::weighted_sq_norm(&out.u, r));
        run.states.push(scenario.system.propagate(&x, &out.u));
        run.p_history.push(core::mem::replace(&mut p, out.p_next));
        run.h1_norms.push(out.diagnostics.h1_norm);
        run.solver_statuses.push(out.diagnostics.qp_status);
        run.active_set_sizes.push(out.diagnostics.active_set.len());
        run.qp_iterations.push(out.diagnostics.qp_iterations);
        run.inputs.push(out.u);
        run.predicted_states.push(out.x_pred);
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    /// `(1/t_f) Σ_{k<t_f} x_j(k)²` per state component.
    pub mse_per_state: Vector,
    /// `Σ_{k<t_f} x_kᵀQx_k + u_kᵀRu_k`.
    pub total_cost: f64,
    /// Mean relative Frobenius change of `H₁` against the baseline, in percent.
    pub rc_design_matrix: Option<f64>,
    pub steps: usize,
}

pub fn compute_metrics(
    run: &ClosedLoopRun,
    baseline: Option<&ClosedLoopRun>,
    cost: &CostSpec,
) -> Result<RunMetrics> {
    let steps = run.steps();
    let n = run.states[0].len();
    let mut mse = Vector::zeros(n);
    let mut total = 0.0;
    for (x, u) in run.states.iter().zip(run.inputs.iter()) {
        mse += x.component_mul(x);
        total += matops::weighted_sq_norm(x, cost.q()) + matops::weighted_sq_norm(u, cost.r());
    }
    if steps > 0 {
        mse /= steps as f64;
    }
    let rc_design_matrix = match baseline {
        None => None,
        Some(b) => {
            if b.p_history.len() != run.p_history.len() {
                return Err(Error::LengthMismatch {
                    expected: run.p_history.len(),
                    found: b.p_history.len(),
                });
            }
            if steps == 0 {
                Some(0.0)
            } else {
                // H₁ differs only in its terminal block.
                let sum: f64 = run
                    .p_history
                    .iter()
                    .zip(b.p_history.iter().zip(b.h1_norms.iter()))
                    .map(|(p, (pb, hb))| (p - pb).norm() / hb)
                    .sum();
                Some(100.0 * sum / steps as f64)
            }
        }
    };
    Ok(RunMetrics {
        mse_per_state: mse,
        total_cost: total,
        rc_design_matrix,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub mu: f64,
    pub run: ClosedLoopRun,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub baseline: ClosedLoopRun,
    pub baseline_metrics: RunMetrics,
    pub points: Vec<SweepPoint>,
}

/// One penalized Re-MPC run per `μ` plus the fixed-weight baseline.
pub fn sweep_mu(scenario: &Scenario, mus: &[f64]) -> Result<SweepResult> {
    sweep_mu_with(scenario, mus, StepOptions::default())
}

pub fn sweep_mu_with(
    scenario: &Scenario,
    mus: &[f64],
    options: StepOptions,
) -> Result<SweepResult> {
    if mus.is_empty() {
        return Err(Error::InvalidParameter("mu list is empty"));
    }
    for &mu in mus {
        ControllerKind::ReMpcPenalized { mu }.validate()?;
    }
    let baseline = run_closed_loop_with(scenario, ControllerKind::ClassicalMpc, options)?;
    let baseline_metrics = compute_metrics(&baseline, Some(&baseline), &scenario.cost)?;
    let mut points = Vec::with_capacity(mus.len());
    for &mu in mus {
        let run = run_closed_loop_with(scenario, ControllerKind::ReMpcPenalized { mu }, options)?;
        let metrics = compute_metrics(&run, Some(&baseline), &scenario.cost)?;
        points.push(SweepPoint { mu, run, metrics });
    }
    Ok(SweepResult {
        baseline,
        baseline_metrics,
        points,
    })
}
