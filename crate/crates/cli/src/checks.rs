//! Pre-run assumption checks and the optional numerical certificates.

use std::fmt;

use remmpc_core::analysis;
use remmpc_core::horizon::build_stacked;
use remmpc_core::matops::{self, DefinitenessClass};
use remmpc_core::model;
use remmpc_core::Scenario;

use crate::number::fmt_sig;

/// Random starts used by the fixed-point certificate.
pub const FIXED_POINT_TRIALS: usize = 8;
pub const FIXED_POINT_SEED: u64 = 0;
/// Penalty grid for the convergence-rate certificate.
pub const MU_GRID: [f64; 5] = [1e2, 1e3, 1e4, 1e5, 1e6];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckItem {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for CheckItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "pass" } else { "FAIL" };
        write!(f, "{verdict:<5} {:<28} {}", self.name, self.detail)
    }
}

fn class_name(c: DefinitenessClass) -> &'static str {
    match c {
        DefinitenessClass::Pd => "positive definite",
        DefinitenessClass::Psd => "positive semidefinite (singular)",
        DefinitenessClass::Indefinite => "indefinite",
    }
}

fn yes_no(ok: bool) -> &'static str {
    if ok {
        "yes"
    } else {
        "no"
    }
}

/// Controllability, detectability, weight definiteness and the rank of the
/// stacked dynamics; `tol` is relative to the largest singular value.
pub fn run_checks(scenario: &Scenario, tol: f64) -> Vec<CheckItem> {
    let sys = &scenario.system;
    let (n, m, l) = (sys.n(), sys.m(), scenario.horizon);
    let mut items = Vec::new();

    let ctrb_rank = matops::rank_of(&model::controllability_matrix(sys), tol);
    items.push(CheckItem::new(
        "controllable (Kalman rank)",
        ctrb_rank == n,
        format!("rank {ctrb_rank} of {n}"),
    ));

    items.push(
        match model::check_detectability(sys, scenario.cost.q(), tol) {
            Ok(ok) => CheckItem::new("detectable (A, Q)", ok, yes_no(ok)),
            Err(e) => CheckItem::new("detectable (A, Q)", false, e.to_string()),
        },
    );

    let weights = [
        ("Q", scenario.cost.q(), false),
        ("R", scenario.cost.r(), true),
        ("P_terminal", scenario.cost.p_terminal(), true),
    ];
    for (name, w, need_pd) in weights {
        let label = format!("{name} definiteness");
        items.push(match matops::definiteness(w, tol) {
            Ok(c) => {
                let ok = if need_pd { c.is_pd() } else { c.is_psd() };
                CheckItem::new(label, ok, class_name(c))
            }
            Err(e) => CheckItem::new(label, false, e.to_string()),
        });
    }

    let required = l * n;
    items.push(
        match build_stacked(
            sys,
            &scenario.cost,
            scenario.cost.p_terminal(),
            l,
            scenario.mu,
            None,
        ) {
            Ok(sp) => {
                let rank = matops::rank_of(&sp.aeq, tol);
                CheckItem::new(
                    "rank [B1 -B2] full row",
                    rank == required,
                    format!("rank {rank} of {required} ({required}x{})", l * (n + m)),
                )
            }
            Err(e) => CheckItem::new("rank [B1 -B2] full row", false, e.to_string()),
        },
    );
    items
}

/// Fixed-point uniqueness, steady-state stability and penalty convergence.
pub fn run_certificates(scenario: &Scenario) -> Vec<CheckItem> {
    let (sys, cost, l) = (&scenario.system, &scenario.cost, scenario.horizon);
    let mut items = Vec::new();

    items.push(
        match analysis::certify_pd_fixed_point(sys, cost, l, FIXED_POINT_TRIALS, FIXED_POINT_SEED) {
            Ok(r) => CheckItem::new(
                "unique PD fixed point",
                true,
                format!(
                    "{} starts agree to {}, min eigenvalue {}",
                    r.trials,
                    fmt_sig(r.max_deviation),
                    fmt_sig(r.min_eigenvalue)
                ),
            ),
            Err(e) => CheckItem::new("unique PD fixed point", false, e.to_string()),
        },
    );

    items.push(match analysis::certify_stability(sys, cost, l) {
        Ok(r) => CheckItem::new(
            "steady-state stability",
            r.margin > 0.0,
            format!(
                "closed-loop radius {}, applied radius {}",
                fmt_sig(r.closed_loop_radius),
                fmt_sig(r.applied_radius)
            ),
        ),
        Err(e) => CheckItem::new("steady-state stability", false, e.to_string()),
    });

    let mu_limit = build_stacked(sys, cost, cost.p_terminal(), l, scenario.mu, None)
        .and_then(|sp| analysis::certify_mu_limit(&sp, &MU_GRID));
    items.push(match mu_limit {
        Ok(r) => CheckItem::new(
            "penalty convergence O(1/mu)",
            true,
            format!("fitted slope {}", fmt_sig(r.slope)),
        ),
        Err(e) => CheckItem::new("penalty convergence O(1/mu)", false, e.to_string()),
    });
    items
}

/// Names of the failed items.
pub fn failures(items: &[CheckItem]) -> Vec<String> {
    items
        .iter()
        .filter(|i| !i.passed)
        .map(|i| format!("{} ({})", i.name, i.detail))
        .collect()
}
