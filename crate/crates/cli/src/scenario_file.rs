//! TOML scenario files: parsing with field-level diagnostics and a generator
//! that writes a [`Scenario`] back out.

use std::fmt::{self, Write as _};
use std::path::Path;

use serde::Deserialize;

use remmpc_core::{
    BoxBounds, BoxConstraints, ControllerKind, CostSpec, LtiSystem, Mat, Scenario, Vector,
};

#[derive(Debug)]
pub enum ScenarioError {
    /// The file could not be read.
    Read { path: String, message: String },
    /// TOML syntax or schema error; the message carries line and column.
    Syntax(String),
    /// A well-formed field whose content is invalid.
    Field {
        field: &'static str,
        message: String,
    },
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::Read { path, message } => write!(f, "cannot read {path}: {message}"),
            ScenarioError::Syntax(msg) => write!(f, "scenario parse error: {}", msg.trim_end()),
            ScenarioError::Field { field, message } => {
                write!(f, "scenario field `{field}`: {message}")
            }
        }
    }
}

impl std::error::Error for ScenarioError {}

fn field_err(field: &'static str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Field {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    system: SystemSection,
    cost: CostSection,
    #[serde(default)]
    constraints: ConstraintSection,
    run: RunSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostSection {
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    r: Vec<Vec<f64>>,
    #[serde(rename = "P_terminal")]
    p_terminal: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintSection {
    x_lower: Option<Vec<f64>>,
    x_upper: Option<Vec<f64>>,
    u_lower: Option<Vec<f64>>,
    u_upper: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    x0: Vec<f64>,
    t_f: usize,
    l: usize,
    mu: f64,
    controller: Option<String>,
}

/// A parsed scenario plus the controller the file asks for, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedScenario {
    pub scenario: Scenario,
    pub controller: Option<ControllerKind>,
}

/// Maps a controller label to its kind; penalized Re-MPC takes `mu`.
pub fn parse_controller(label: &str, mu: f64) -> Option<ControllerKind> {
    match label {
        "re-mpc" => Some(ControllerKind::ReMpcPenalized { mu }),
        "re-mpc-exact" => Some(ControllerKind::ReMpcExact),
        "c-mpc" => Some(ControllerKind::ClassicalMpc),
        _ => None,
    }
}

fn matrix(field: &'static str, rows: &[Vec<f64>]) -> Result<Mat, ScenarioError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(field_err(
            field,
            "matrix must have at least one row and column",
        ));
    }
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(field_err(
            field,
            format!("row {} has {} entries, expected {ncols}", i + 1, row.len()),
        ));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn bounds(
    lower_field: &'static str,
    lower: Option<Vec<f64>>,
    upper_field: &'static str,
    upper: Option<Vec<f64>>,
) -> Result<Option<BoxBounds>, ScenarioError> {
    match (lower, upper) {
        (None, None) => Ok(None),
        (Some(_), None) => Err(field_err(
            upper_field,
            format!("required when `{lower_field}` is set"),
        )),
        (None, Some(_)) => Err(field_err(
            lower_field,
            format!("required when `{upper_field}` is set"),
        )),
        (Some(lo), Some(hi)) => BoxBounds::new(Vector::from_vec(lo), Vector::from_vec(hi))
            .map(Some)
            .map_err(|e| field_err(lower_field, e.to_string())),
    }
}

/// Parses scenario text.
pub fn parse_scenario(text: &str) -> Result<ParsedScenario, ScenarioError> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;

    let a = matrix("system.A", &file.system.a)?;
    let b = matrix("system.B", &file.system.b)?;
    let system = LtiSystem::new(a, b).map_err(|e| field_err("system", e.to_string()))?;

    let q = matrix("cost.Q", &file.cost.q)?;
    let r = matrix("cost.R", &file.cost.r)?;
    let cost = match &file.cost.p_terminal {
        Some(p) => CostSpec::new(q, r, matrix("cost.P_terminal", p)?),
        None => CostSpec::with_terminal_q(q, r),
    }
    .map_err(|e| field_err("cost", e.to_string()))?;

    let c = file.constraints;
    let state = bounds(
        "constraints.x_lower",
        c.x_lower,
        "constraints.x_upper",
        c.x_upper,
    )?;
    let input = bounds(
        "constraints.u_lower",
        c.u_lower,
        "constraints.u_upper",
        c.u_upper,
    )?;
    let constraints =
        (state.is_some() || input.is_some()).then(|| BoxConstraints::new(state, input));

    let run = file.run;
    let controller = match run.controller.as_deref() {
        None => None,
        Some(label) => Some(parse_controller(label, run.mu).ok_or_else(|| {
            field_err(
                "run.controller",
                format!("unknown controller `{label}` (expected re-mpc, re-mpc-exact or c-mpc)"),
            )
        })?),
    };
    let scenario = Scenario::new(
        system,
        cost,
        constraints,
        Vector::from_vec(run.x0),
        run.t_f,
        run.l,
        run.mu,
    )
    .map_err(|e| field_err("run", e.to_string()))?;
    Ok(ParsedScenario {
        scenario,
        controller,
    })
}

pub fn load_scenario(path: &Path) -> Result<ParsedScenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenario(&text)
}

// `{:?}` prints the shortest string that parses back to the same f64, and
// always in a form TOML accepts as a float.
fn real(v: f64) -> String {
    format!("{v:?}")
}

fn row(values: impl IntoIterator<Item = f64>) -> String {
    let parts: Vec<String> = values.into_iter().map(real).collect();
    format!("[{}]", parts.join(", "))
}

fn write_matrix(out: &mut String, key: &str, m: &Mat) {
    let rows: Vec<String> = m.row_iter().map(|r| row(r.iter().copied())).collect();
    if rows.len() == 1 {
        let _ = writeln!(out, "{key} = [{}]", rows[0]);
    } else {
        let _ = writeln!(out, "{key} = [\n    {},\n]", rows.join(",\n    "));
    }
}

/// Renders a scenario as TOML. `P_terminal` is omitted when it equals `Q`.
pub fn render_scenario(scenario: &Scenario, controller: Option<ControllerKind>) -> String {
    let mut out = String::new();
    out.push_str("[system]\n");
    write_matrix(&mut out, "A", scenario.system.a());
    write_matrix(&mut out, "B", scenario.system.b());

    out.push_str("\n[cost]\n");
    let cost = &scenario.cost;
    write_matrix(&mut out, "Q", cost.q());
    write_matrix(&mut out, "R", cost.r());
    if cost.p_terminal() != cost.q() {
        write_matrix(&mut out, "P_terminal", cost.p_terminal());
    }

    if let Some(c) = &scenario.constraints {
        out.push_str("\n[constraints]\n");
        for (lower, upper, b) in [
            ("x_lower", "x_upper", &c.state),
            ("u_lower", "u_upper", &c.input),
        ] {
            if let Some(b) = b {
                let _ = writeln!(out, "{lower} = {}", row(b.lower.iter().copied()));
                let _ = writeln!(out, "{upper} = {}", row(b.upper.iter().copied()));
            }
        }
    }

    out.push_str("\n[run]\n");
    let _ = writeln!(out, "x0 = {}", row(scenario.x0.iter().copied()));
    let _ = writeln!(out, "t_f = {}", scenario.t_f);
    let _ = writeln!(out, "l = {}", scenario.horizon);
    let _ = writeln!(out, "mu = {}", real(scenario.mu));
    if let Some(kind) = controller {
        let _ = writeln!(out, "controller = \"{}\"", kind.label());
    }
    out
}

/// The constrained two-state benchmark as a scenario file.
pub fn example1_text() -> String {
    let scenario = Scenario::example1();
    let kind = ControllerKind::ReMpcPenalized { mu: scenario.mu };
    format!(
        "# Two-state constrained benchmark; P_terminal defaults to Q.\n{}",
        render_scenario(&scenario, Some(kind))
    )
}
