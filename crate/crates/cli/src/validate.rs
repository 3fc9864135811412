//! Figure-reproduction presets: run a hard-coded grid on both the
//! analytical model and the simulator, and report per-cell agreement plus
//! relative-error quantiles grouped by (timer, miners).

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use blockq_core::ScenarioParams;

use crate::output::{fmt_f64, fmt_opt, model_row, TableFormat};
use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig3,
    Fig4,
    Fig5,
}

impl std::str::FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fig3" => Ok(Preset::Fig3),
            "fig4" => Ok(Preset::Fig4),
            "fig5" => Ok(Preset::Fig5),
            other => Err(format!(
                "unknown preset '{other}' (expected 'fig3', 'fig4', or 'fig5')"
            )),
        }
    }
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
        }
    }

    /// The hard-coded cell grid, in deterministic row order.
    pub fn grid(&self) -> Vec<ScenarioParams> {
        let (miners, mus, lambdas, timers): (&[u32], &[f64], &[f64], &[f64]) = match self {
            Preset::Fig3 => (&[1], &[0.1, 0.25, 5.0], &[0.1, 0.2, 0.25], &[1.0, 100.0]),
            Preset::Fig4 => (&[1, 10], &[0.1, 0.25, 5.0], &[0.1, 0.2, 0.25], &[100.0]),
            Preset::Fig5 => (&[1, 10], &[0.1, 0.25], &[0.25, 5.0], &[1.0, 5.0, 100.0]),
        };
        let mut cells = Vec::new();
        for &m in miners {
            for &timer in timers {
                for &mu in mus {
                    for &lambda in lambdas {
                        for b in 1..=10usize {
                            let params = ScenarioParams {
                                mu,
                                lambda,
                                miners: m,
                                block_size_tx: b,
                                timer,
                                ..Default::default()
                            }
                            .validate()
                            .expect("preset grids are valid by construction");
                            cells.push(params);
                        }
                    }
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub mu: f64,
    pub lambda: f64,
    pub miners: u32,
    pub queue_size: usize,
    pub block_size: usize,
    pub timer: f64,
    pub seed_count: usize,
    pub model_t_q: Option<f64>,
    pub model_t_bc: Option<f64>,
    pub model_diag: String,
    pub sim_t_q: Option<f64>,
    pub sim_t_bc: Option<f64>,
    /// 95% half-width of the simulator's pool-delay mean across seeds.
    pub sim_ci_t_q: Option<f64>,
    pub sim_fork_rate: Option<f64>,
    pub abs_err_t_q: Option<f64>,
    pub rel_err_t_q: Option<f64>,
}

pub const COMPARISON_HEADER: &str = "mu,lambda,miners,queue_size,block_size,timer,seed_count,\
model_t_q,model_t_bc,model_diag,sim_t_q,sim_t_bc,sim_ci_t_q,sim_fork_rate,abs_err_t_q,rel_err_t_q";

impl ComparisonRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_f64(self.mu),
            fmt_f64(self.lambda),
            self.miners,
            self.queue_size,
            self.block_size,
            fmt_f64(self.timer),
            self.seed_count,
            fmt_opt(self.model_t_q),
            fmt_opt(self.model_t_bc),
            self.model_diag,
            fmt_opt(self.sim_t_q),
            fmt_opt(self.sim_t_bc),
            fmt_opt(self.sim_ci_t_q),
            fmt_opt(self.sim_fork_rate),
            fmt_opt(self.abs_err_t_q),
            fmt_opt(self.rel_err_t_q),
        )
    }
}

/// Runs both backends for a single cell.
pub fn compare_cell(params: &ScenarioParams, sim_time: f64, seeds: &[u64]) -> ComparisonRow {
    let model = model_row(params);
    let config = blockq_core::SimConfig {
        scenario: params.clone(),
        sim_time,
        warmup: blockq_core::sim::default_warmup(sim_time),
        ..Default::default()
    };
    let agg = blockq_core::run_replications(&config, seeds);
    let sim_t_q = agg.result.mean_pool_delay;
    let (abs_err, rel_err) = match (model.t_q, sim_t_q) {
        (Some(m), Some(s)) if s > 0.0 => (Some((m - s).abs()), Some((m - s).abs() / s)),
        (Some(m), Some(s)) => (Some((m - s).abs()), None),
        _ => (None, None),
    };
    ComparisonRow {
        mu: params.mu,
        lambda: params.lambda,
        miners: params.miners,
        queue_size: params.queue_size,
        block_size: params.block_size_tx,
        timer: params.timer,
        seed_count: seeds.len(),
        model_t_q: model.t_q,
        model_t_bc: model.t_bc,
        model_diag: model.diag,
        sim_t_q,
        sim_t_bc: agg.result.mean_confirmation_latency,
        sim_ci_t_q: agg.result.ci_pool_delay,
        sim_fork_rate: Some(agg.result.fork_rate),
        abs_err_t_q: abs_err,
        rel_err_t_q: rel_err,
    }
}

pub fn run_preset(
    preset: Preset,
    sim_time: f64,
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<ComparisonRow>, Failure> {
    let cells = preset.grid();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Usage(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(|| {
        cells
            .par_iter()
            .map(|params| compare_cell(params, sim_time, seeds))
            .collect()
    }))
}

/// True for cells the model itself flags as past its valid regime; these
/// are excluded from the error statistics and counted separately.
pub fn is_flagged(row: &ComparisonRow) -> bool {
    row.model_diag.contains("saturated") || row.rel_err_t_q.is_none()
}

/// Relative-error quantiles per (timer, miners) group over the cells the
/// model considers valid, in sorted group order.
pub fn summarize(rows: &[ComparisonRow]) -> Vec<String> {
    let mut groups: Vec<(f64, u32)> = rows.iter().map(|r| (r.timer, r.miners)).collect();
    groups.sort_by(|a, b| a.partial_cmp(b).unwrap());
    groups.dedup();
    let mut lines = Vec::new();
    for (timer, miners) in groups {
        let members: Vec<&ComparisonRow> = rows
            .iter()
            .filter(|r| r.timer == timer && r.miners == miners)
            .collect();
        let flagged = members.iter().filter(|r| is_flagged(r)).count();
        let mut errs: Vec<f64> = members
            .iter()
            .filter(|r| !is_flagged(r))
            .filter_map(|r| r.rel_err_t_q)
            .collect();
        if errs.is_empty() {
            lines.push(format!(
                "timer={timer} miners={miners}: no comparable cells ({flagged} flagged)"
            ));
            continue;
        }
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = errs.len();
        let mean = errs.iter().sum::<f64>() / n as f64;
        let q = |p: f64| errs[((p * (n - 1) as f64).round() as usize).min(n - 1)];
        lines.push(format!(
            "timer={timer} miners={miners}: n={n} flagged={flagged} mean_rel_err={mean:.4} p50={:.4} p90={:.4} max={:.4}",
            q(0.5),
            q(0.9),
            errs[n - 1]
        ));
    }
    lines
}

pub fn write_report(
    rows: &[ComparisonRow],
    format: TableFormat,
    output: Option<&Path>,
) -> Result<(), Failure> {
    crate::output::write_rows(rows, COMPARISON_HEADER, ComparisonRow::csv_line, format, output)
        .map_err(|e| Failure::Io(e.to_string()))
}
