//! CSV and text renderings of runs and metrics, plus atomic file writes.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use remmpc_core::controller::ClosedLoopRun;
use remmpc_core::{ControllerKind, RunMetrics};

use crate::error::{CliError, CliResult};
use crate::number::fmt_sig;

/// Value of the `qp_status` column for steps solved without inequality rows.
pub const UNCONSTRAINED_STATUS: &str = "unconstrained";
/// First-column marker of the row appended when a run aborts.
pub const FAILED_MARKER: &str = "FAILED";

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("writing to memory cannot fail")
}

fn indexed(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}{i}"))
}

/// Per-step trajectory table. `failure` appends a sentinel row naming the
/// aborted step and the error.
pub fn trajectory_csv(run: &ClosedLoopRun, m: usize, failure: Option<(usize, &str)>) -> Vec<u8> {
    let n = run.states[0].len();
    let mut w = csv_writer();
    let mut header = vec!["k".to_string()];
    header.extend(indexed("x", n));
    header.extend(indexed("u", m));
    header.extend(["stage_cost", "h1_norm", "qp_status", "active_set_size"].map(String::from));
    w.write_record(&header).expect("in-memory write");

    for k in 0..run.steps() {
        let mut rec = vec![k.to_string()];
        rec.extend(run.states[k].iter().map(|&v| fmt_sig(v)));
        rec.extend(run.inputs[k].iter().map(|&v| fmt_sig(v)));
        rec.push(fmt_sig(run.per_step_cost[k]));
        rec.push(fmt_sig(run.h1_norms[k]));
        rec.push(
            run.solver_statuses[k]
                .map_or(UNCONSTRAINED_STATUS, |s| s.as_str())
                .to_string(),
        );
        rec.push(run.active_set_sizes[k].to_string());
        w.write_record(&rec).expect("in-memory write");
    }

    if let Some((step, message)) = failure {
        let mut rec = vec![FAILED_MARKER.to_string()];
        rec.resize(header.len() - 2, String::new());
        rec.push(format!("step {step}: {message}"));
        rec.push(String::new());
        w.write_record(&rec).expect("in-memory write");
    }
    finish(w)
}

/// One metrics row: the controller that produced it and what it scored.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub kind: ControllerKind,
    pub metrics: RunMetrics,
    pub final_state_norm: f64,
}

impl MetricsRow {
    pub fn new(run: &ClosedLoopRun, metrics: RunMetrics) -> Self {
        Self {
            kind: run.kind,
            final_state_norm: run.final_state().norm(),
            metrics,
        }
    }

    fn mu_cell(&self) -> String {
        match self.kind {
            ControllerKind::ReMpcPenalized { mu } => fmt_sig(mu),
            _ => String::new(),
        }
    }

    fn cells(&self) -> Vec<String> {
        let m = &self.metrics;
        let mut rec = vec![
            self.kind.label().to_string(),
            self.mu_cell(),
            m.steps.to_string(),
        ];
        rec.push(fmt_sig(m.total_cost));
        rec.extend(m.mse_per_state.iter().map(|&v| fmt_sig(v)));
        rec.push(m.rc_design_matrix.map(fmt_sig).unwrap_or_default());
        rec.push(fmt_sig(self.final_state_norm));
        rec
    }
}

fn metrics_header(n: usize) -> Vec<String> {
    let mut header: Vec<String> = ["controller", "mu", "steps", "total_cost"]
        .map(String::from)
        .to_vec();
    header.extend(indexed("mse_x", n));
    header.extend(["rc_percent", "final_state_norm"].map(String::from));
    header
}

/// Metrics table, one row per run; every row must have the same state dimension.
pub fn metrics_csv(rows: &[MetricsRow]) -> Vec<u8> {
    let n = rows.first().map_or(0, |r| r.metrics.mse_per_state.len());
    let mut w = csv_writer();
    w.write_record(metrics_header(n)).expect("in-memory write");
    for row in rows {
        w.write_record(row.cells()).expect("in-memory write");
    }
    finish(w)
}

/// Aligned plain-text table of `rows` with a wall-clock column in seconds.
pub fn metrics_text(rows: &[(MetricsRow, f64)]) -> String {
    let n = rows.first().map_or(0, |r| r.0.metrics.mse_per_state.len());
    let mut table = vec![metrics_header(n)];
    table[0].push("elapsed_s".into());
    for (row, elapsed) in rows {
        let mut cells = row.cells();
        cells.push(format!("{elapsed:.3}"));
        table.push(cells);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|j| table.iter().map(|r| r[j].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &table {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Writes `bytes` to a sibling temp file and renames it over `path`, so a
/// reader never sees a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp: PathBuf = path.with_file_name(tmp_name);
    let result = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .and_then(|()| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    log::info!("wrote {}", path.display());
    Ok(())
}
