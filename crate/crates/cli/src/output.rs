//! Row types and writers for the sweep and validation tables. Floats are
//! written with 17 significant digits so a parsed CSV reproduces every
//! value bit-for-bit.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use blockq_core::latency::{mining_delay, propagation_delay};
use blockq_core::sim::default_warmup;
use blockq_core::{
    confirmation_latency, run_replications, ModelError, ModelOptions, ScenarioParams, SimConfig,
};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_else(|| "NaN".to_string())
}

/// Short machine-readable tag of an error ("model-unstable", ...).
pub fn error_tag(e: &ModelError) -> String {
    let text = e.to_string();
    text.split(':').next().unwrap_or("error").trim().to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for TableFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "jsonl" => Ok(TableFormat::Jsonl),
            other => Err(format!("unknown format '{other}' (expected 'csv' or 'jsonl')")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub mu: f64,
    pub lambda: f64,
    pub miners: u32,
    pub queue_size: usize,
    pub block_size: usize,
    pub timer: f64,
    pub backend: &'static str,
    pub seed_count: usize,
    pub t_q: Option<f64>,
    pub t_bg: Option<f64>,
    pub t_bp: Option<f64>,
    pub p_fork: Option<f64>,
    pub t_bc: Option<f64>,
    /// Simulator: forked blocks per committed block. Model: the expected
    /// value of the same ratio, p_fork / (1 - p_fork).
    pub fork_rate: Option<f64>,
    /// Simulator: mean dropped transactions per run. Model: the blocking
    /// probability an arriving transaction faces.
    pub drop_count: Option<f64>,
    pub diag: String,
}

pub const SWEEP_HEADER: &str = "mu,lambda,miners,queue_size,block_size,timer,backend,\
seed_count,t_q,t_bg,t_bp,p_fork,t_bc,fork_rate,drop_count,diag";

impl SweepRow {
    fn blank(params: &ScenarioParams, backend: &'static str, seed_count: usize) -> Self {
        SweepRow {
            mu: params.mu,
            lambda: params.lambda,
            miners: params.miners,
            queue_size: params.queue_size,
            block_size: params.block_size_tx,
            timer: params.timer,
            backend,
            seed_count,
            t_q: None,
            t_bg: None,
            t_bp: None,
            p_fork: None,
            t_bc: None,
            fork_rate: None,
            drop_count: None,
            diag: String::new(),
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_f64(self.mu),
            fmt_f64(self.lambda),
            self.miners,
            self.queue_size,
            self.block_size,
            fmt_f64(self.timer),
            self.backend,
            self.seed_count,
            fmt_opt(self.t_q),
            fmt_opt(self.t_bg),
            fmt_opt(self.t_bp),
            fmt_opt(self.p_fork),
            fmt_opt(self.t_bc),
            fmt_opt(self.fork_rate),
            fmt_opt(self.drop_count),
            self.diag,
        )
    }
}

/// Evaluates the analytical model for one cell. Errors become a row with
/// the diagnostic tag and no numbers.
pub fn model_row(params: &ScenarioParams) -> SweepRow {
    let mut row = SweepRow::blank(params, "model", 0);
    match confirmation_latency(params, ModelOptions::default()) {
        Ok((lat, sol)) => {
            let mut diags = Vec::new();
            if sol.diagnostics.saturated {
                diags.push("saturated");
            }
            if sol.diagnostics.negative_mass_clamped {
                diags.push("clamped");
            }
            row.diag = if diags.is_empty() {
                "ok".to_string()
            } else {
                diags.join(";")
            };
            row.t_q = Some(lat.t_q);
            row.t_bg = Some(lat.t_bg);
            row.t_bp = Some(lat.t_bp);
            row.p_fork = Some(lat.p_fork);
            row.t_bc = Some(lat.t_bc);
            row.fork_rate = Some(lat.p_fork / (1.0 - lat.p_fork));
            row.drop_count = Some(sol.blocking_probability());
        }
        Err(e) => row.diag = error_tag(&e),
    }
    row
}

/// Runs the simulator backend for one cell over the given seeds.
pub fn simulator_row(params: &ScenarioParams, sim_time: f64, seeds: &[u64]) -> SweepRow {
    let mut row = SweepRow::blank(params, "simulator", seeds.len());
    let config = SimConfig {
        scenario: params.clone(),
        sim_time,
        warmup: default_warmup(sim_time),
        ..Default::default()
    };
    let agg = run_replications(&config, seeds);
    let fr = agg.result.fork_rate;
    row.t_q = agg.result.mean_pool_delay;
    row.t_bg = Some(mining_delay(params.miners, params.lambda));
    row.t_bp = Some(propagation_delay(params.block_size_tx, params));
    row.p_fork = Some(fr / (1.0 + fr));
    row.t_bc = agg.result.mean_confirmation_latency;
    row.fork_rate = Some(fr);
    row.drop_count = Some(agg.result.mean_drop_count);
    row.diag = if row.t_q.is_some() { "ok" } else { "no-samples" }.to_string();
    row
}

/// Writes rows as CSV or JSON lines, to a file or stdout.
pub fn write_rows<T: Serialize>(
    rows: &[T],
    csv_header: &str,
    csv_line: impl Fn(&T) -> String,
    format: TableFormat,
    output: Option<&Path>,
) -> io::Result<()> {
    let mut sink: Box<dyn Write> = match output {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    };
    match format {
        TableFormat::Csv => {
            writeln!(sink, "{csv_header}")?;
            for row in rows {
                writeln!(sink, "{}", csv_line(row))?;
            }
        }
        TableFormat::Jsonl => {
            for row in rows {
                let line = serde_json::to_string(row).map_err(io::Error::other)?;
                writeln!(sink, "{line}")?;
            }
        }
    }
    sink.flush()
}
