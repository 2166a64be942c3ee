//! Argument definitions and the four subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use remmpc_core::controller::{self, ClosedLoopRun, StepOptions};
use remmpc_core::{ControllerKind, Scenario};

use crate::checks::{self, CheckItem};
use crate::error::{CliError, CliResult};
use crate::number::fmt_sig;
use crate::output::{self, MetricsRow};
use crate::scenario_file::{self, ParsedScenario};

pub const DEFAULT_TOL: f64 = remmpc_core::matops::DEFAULT_TOL;

#[derive(Debug, Parser)]
#[command(name = "remmpc", version, about = "Regularized MPC benchmark runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the standing assumptions of a scenario.
    Check(CheckArgs),
    /// Run one controller in closed loop and write its trajectory and metrics.
    Run(RunArgs),
    /// Run the fixed-weight baseline next to a second controller.
    Compare(RunArgs),
    /// Run penalized Re-MPC for each penalty in a list, plus the baseline.
    Sweep(SweepArgs),
    /// Print the bundled two-state benchmark scenario.
    Example,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ControllerArg {
    #[value(name = "re-mpc")]
    ReMpc,
    #[value(name = "re-mpc-exact")]
    ReMpcExact,
    #[value(name = "c-mpc")]
    CMpc,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub scenario: PathBuf,
    /// Relative tolerance for rank and definiteness tests.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Also run the fixed-point, stability and penalty-convergence certificates.
    #[arg(long)]
    pub certify: bool,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    pub scenario: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "remmpc-out")]
    pub out: PathBuf,
    /// Proceed even when assumption checks fail.
    #[arg(long)]
    pub force: bool,
    /// Relative tolerance for the pre-run checks.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Controller; defaults to the scenario's choice, then re-mpc.
    #[arg(long, value_enum)]
    pub controller: Option<ControllerArg>,
    /// Penalty for re-mpc; defaults to the scenario's mu.
    #[arg(long)]
    pub mu: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated penalties.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub mu_list: Vec<f64>,
}

/// Runs a parsed command; the returned text goes to stdout.
pub fn execute(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Check(a) => cmd_check(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Example => Ok(scenario_file::example1_text()),
    }
}

fn positive(flag: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!(
            "{flag} must be positive and finite, got {v}"
        )))
    }
}

fn render_items(title: &str, items: &[CheckItem]) -> String {
    let mut out = format!("{title}\n");
    for item in items {
        out.push_str(&format!("  {item}\n"));
    }
    out
}

pub fn cmd_check(args: &CheckArgs) -> CliResult<String> {
    let tol = positive("--tol", args.tol)?;
    let parsed = scenario_file::load_scenario(&args.scenario)?;
    let mut items = checks::run_checks(&parsed.scenario, tol);
    let mut report = render_items("assumption checks", &items);
    if args.certify {
        let certs = checks::run_certificates(&parsed.scenario);
        report.push_str(&render_items("certificates", &certs));
        items.extend(certs);
    }
    let failed = checks::failures(&items);
    if failed.is_empty() {
        report.push_str("all checks passed\n");
        Ok(report)
    } else {
        // The report is still useful on failure.
        print!("{report}");
        Err(CliError::Checks(failed))
    }
}

/// Loads the scenario and enforces the pre-run checks unless `--force`.
fn prepare(common: &CommonArgs) -> CliResult<ParsedScenario> {
    let tol = positive("--tol", common.tol)?;
    let parsed = scenario_file::load_scenario(&common.scenario)?;
    let failed = checks::failures(&checks::run_checks(&parsed.scenario, tol));
    if !failed.is_empty() {
        if !common.force {
            return Err(CliError::Checks(failed));
        }
        for f in &failed {
            log::warn!("check failed, continuing under --force: {f}");
        }
    }
    std::fs::create_dir_all(&common.out).map_err(|e| CliError::io(&common.out, e))?;
    Ok(parsed)
}

fn resolve_kind(args: &RunArgs, parsed: &ParsedScenario) -> CliResult<ControllerKind> {
    let mu = match args.mu {
        Some(mu) => positive("--mu", mu)?,
        None => parsed.scenario.mu,
    };
    Ok(match (args.controller, parsed.controller) {
        (Some(ControllerArg::ReMpc), _) => ControllerKind::ReMpcPenalized { mu },
        (Some(ControllerArg::ReMpcExact), _) => ControllerKind::ReMpcExact,
        (Some(ControllerArg::CMpc), _) => ControllerKind::ClassicalMpc,
        (None, Some(ControllerKind::ReMpcPenalized { .. })) | (None, None) => {
            ControllerKind::ReMpcPenalized { mu }
        }
        (None, Some(kind)) => kind,
    })
}

fn trajectory_path(out: &Path, kind: ControllerKind) -> PathBuf {
    match kind {
        ControllerKind::ReMpcPenalized { mu } => {
            out.join(format!("trajectory_mu_{}.csv", fmt_sig(mu)))
        }
        other => out.join(format!("trajectory_{}.csv", other.label())),
    }
}

/// Runs one controller and writes its trajectory; on failure the partial
/// trajectory gets a sentinel row before the error is returned.
fn run_and_record(
    scenario: &Scenario,
    kind: ControllerKind,
    path: &Path,
) -> CliResult<ClosedLoopRun> {
    let m = scenario.system.m();
    match controller::run_closed_loop_with(scenario, kind, StepOptions::default()) {
        Ok(run) => {
            output::write_atomic(path, &output::trajectory_csv(&run, m, None))?;
            Ok(run)
        }
        Err(e) => {
            let message = e.source.to_string();
            output::write_atomic(
                path,
                &output::trajectory_csv(&e.partial, m, Some((e.step, &message))),
            )?;
            Err(CliError::from_run(
                format!("{} failed at step {}", kind.label(), e.step),
                e.source,
            ))
        }
    }
}

fn metrics_row(
    scenario: &Scenario,
    run: &ClosedLoopRun,
    baseline: Option<&ClosedLoopRun>,
) -> CliResult<MetricsRow> {
    let metrics =
        controller::compute_metrics(run, baseline, &scenario.cost).map_err(CliError::Invalid)?;
    Ok(MetricsRow::new(run, metrics))
}

/// The fixed-weight run that rc is measured against, computed in memory only.
fn baseline_for(
    scenario: &Scenario,
    kind: ControllerKind,
    run: &ClosedLoopRun,
) -> Option<ClosedLoopRun> {
    if kind == ControllerKind::ClassicalMpc {
        return Some(run.clone());
    }
    match controller::run_closed_loop(scenario, ControllerKind::ClassicalMpc) {
        Ok(b) => Some(b),
        Err(e) => {
            log::warn!("baseline for rc failed ({e}); rc left empty");
            None
        }
    }
}

pub fn cmd_run(args: &RunArgs) -> CliResult<String> {
    let parsed = prepare(&args.common)?;
    let kind = resolve_kind(args, &parsed)?;
    let scenario = &parsed.scenario;
    let out = &args.common.out;

    let traj_path = out.join("trajectory.csv");
    let run = run_and_record(scenario, kind, &traj_path)?;
    let baseline = baseline_for(scenario, kind, &run);
    let row = metrics_row(scenario, &run, baseline.as_ref())?;
    let metrics_path = out.join("metrics.csv");
    output::write_atomic(
        &metrics_path,
        &output::metrics_csv(std::slice::from_ref(&row)),
    )?;

    Ok(format!(
        "{}: total cost {}, final |x| {}\nwrote {} and {}\n",
        kind.label(),
        fmt_sig(row.metrics.total_cost),
        fmt_sig(row.final_state_norm),
        traj_path.display(),
        metrics_path.display()
    ))
}

pub fn cmd_compare(args: &RunArgs) -> CliResult<String> {
    let parsed = prepare(&args.common)?;
    let kind = resolve_kind(args, &parsed)?;
    let scenario = &parsed.scenario;
    let out = &args.common.out;

    let timed = |k: ControllerKind| -> CliResult<(ClosedLoopRun, f64)> {
        let start = Instant::now();
        let run = run_and_record(scenario, k, &trajectory_path(out, k))?;
        Ok((run, start.elapsed().as_secs_f64()))
    };
    let (baseline, base_secs) = timed(ControllerKind::ClassicalMpc)?;
    let (run, run_secs) = timed(kind)?;

    let rows = [
        (
            metrics_row(scenario, &baseline, Some(&baseline))?,
            base_secs,
        ),
        (metrics_row(scenario, &run, Some(&baseline))?, run_secs),
    ];
    let plain: Vec<MetricsRow> = rows.iter().map(|(r, _)| r.clone()).collect();
    output::write_atomic(&out.join("compare.csv"), &output::metrics_csv(&plain))?;
    // Wall-clock time stays out of the CSV so that file is reproducible.
    let text = output::metrics_text(&rows);
    output::write_atomic(&out.join("compare.txt"), text.as_bytes())?;
    Ok(text)
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<String> {
    let mut mus = Vec::with_capacity(args.mu_list.len());
    for &mu in &args.mu_list {
        let mu = positive("--mu-list entry", mu)?;
        if mus.iter().any(|&seen| fmt_sig(seen) == fmt_sig(mu)) {
            return Err(CliError::Usage(format!(
                "duplicate penalty {mu} in --mu-list"
            )));
        }
        mus.push(mu);
    }
    let parsed = prepare(&args.common)?;
    let scenario = &parsed.scenario;
    let out = &args.common.out;

    let baseline = run_and_record(
        scenario,
        ControllerKind::ClassicalMpc,
        &trajectory_path(out, ControllerKind::ClassicalMpc),
    )?;
    // Independent runs; each worker writes only its own file.
    let runs: Vec<CliResult<ClosedLoopRun>> = std::thread::scope(|s| {
        let handles: Vec<_> = mus
            .iter()
            .map(|&mu| {
                let kind = ControllerKind::ReMpcPenalized { mu };
                s.spawn(move || run_and_record(scenario, kind, &trajectory_path(out, kind)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });

    let mut rows = vec![metrics_row(scenario, &baseline, Some(&baseline))?];
    for run in runs {
        rows.push(metrics_row(scenario, &run?, Some(&baseline))?);
    }
    output::write_atomic(&out.join("sweep.csv"), &output::metrics_csv(&rows))?;
    Ok(String::from_utf8(output::metrics_csv(&rows)).expect("CSV output is UTF-8"))
}
