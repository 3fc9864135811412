//! Parameter sweeps driven by a JSON spec file: a base scenario, value
//! lists for any of mu/lambda/miners/block_size/timer, one or two
//! backends, and an output table.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::Value;

use blockq_core::ScenarioParams;

use crate::output::{model_row, simulator_row, SweepRow, TableFormat};
use crate::Failure;

/// Hard cap on emitted rows (combos x backends).
pub const ROW_CAP: usize = 1_000_000;

const AXIS_ORDER: [&str; 5] = ["mu", "lambda", "miners", "block_size", "timer"];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSpecFile {
    base: Option<Value>,
    axes: Option<HashMap<String, Vec<Value>>>,
    backends: Option<Vec<String>>,
    seeds: Option<Vec<u64>>,
    output: Option<PathBuf>,
    format: Option<String>,
    sim_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Backend {
    Model,
    Simulator,
}

pub struct SweepPlan {
    cells: Vec<(ScenarioParams, Backend)>,
    seeds: Vec<u64>,
    sim_time: f64,
    pub output: Option<PathBuf>,
    pub format: TableFormat,
}

fn axis_f64(value: &Value, axis: &str) -> Result<f64, Failure> {
    value
        .as_f64()
        .ok_or_else(|| Failure::Usage(format!("axis '{axis}': {value} is not a number")))
}

fn axis_usize(value: &Value, axis: &str) -> Result<usize, Failure> {
    value
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| Failure::Usage(format!("axis '{axis}': {value} is not a non-negative integer")))
}

fn apply_axis(params: &mut ScenarioParams, axis: &str, value: &Value) -> Result<(), Failure> {
    match axis {
        "mu" => params.mu = axis_f64(value, axis)?,
        "lambda" => params.lambda = axis_f64(value, axis)?,
        "miners" => params.miners = axis_usize(value, axis)? as u32,
        "block_size" => params.block_size_tx = axis_usize(value, axis)?,
        "timer" => params.timer = axis_f64(value, axis)?,
        other => {
            return Err(Failure::Usage(format!(
                "unknown axis '{other}' (expected one of {})",
                AXIS_ORDER.join(", ")
            )))
        }
    }
    Ok(())
}

pub fn load_plan(spec_path: &Path) -> Result<SweepPlan, Failure> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| Failure::Io(format!("{}: {e}", spec_path.display())))?;
    let spec: SweepSpecFile = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{}: {e}", spec_path.display())))?;

    let base = match &spec.base {
        Some(v) => ScenarioParams::from_json(&v.to_string()).map_err(Failure::from)?,
        None => ScenarioParams::default(),
    };

    let axes = spec.axes.unwrap_or_default();
    for name in axes.keys() {
        if !AXIS_ORDER.contains(&name.as_str()) {
            return Err(Failure::Usage(format!(
                "unknown axis '{name}' (expected one of {})",
                AXIS_ORDER.join(", ")
            )));
        }
    }
    // fixed canonical axis order so row order never depends on map order
    let active: Vec<(&str, &Vec<Value>)> = AXIS_ORDER
        .iter()
        .filter_map(|&name| axes.get(name).map(|vs| (name, vs)))
        .collect();
    if active.iter().any(|(_, vs)| vs.is_empty()) {
        return Err(Failure::Usage("empty axis value list".to_string()));
    }

    let backends = match spec.backends.as_deref() {
        None => vec![Backend::Model],
        Some(names) => {
            let mut list = Vec::new();
            for name in names {
                match name.as_str() {
                    "model" => list.push(Backend::Model),
                    "simulator" => list.push(Backend::Simulator),
                    "both" => {
                        list.push(Backend::Model);
                        list.push(Backend::Simulator);
                    }
                    other => {
                        return Err(Failure::Usage(format!(
                            "unknown backend '{other}' (expected 'model', 'simulator', or 'both')"
                        )))
                    }
                }
            }
            list.dedup();
            if list.is_empty() {
                return Err(Failure::Usage("no backends selected".to_string()));
            }
            list
        }
    };

    let combos: usize = active.iter().map(|(_, vs)| vs.len()).product();
    if combos.saturating_mul(backends.len()) > ROW_CAP {
        return Err(Failure::Usage(format!(
            "sweep would emit {} rows, cap is {ROW_CAP}",
            combos * backends.len()
        )));
    }

    // cartesian product in canonical axis order
    let mut scenarios = vec![base];
    for (name, values) in &active {
        let mut next = Vec::with_capacity(scenarios.len() * values.len());
        for scenario in &scenarios {
            for value in *values {
                let mut s = scenario.clone();
                apply_axis(&mut s, name, value)?;
                next.push(s);
            }
        }
        scenarios = next;
    }

    let mut cells = Vec::with_capacity(scenarios.len() * backends.len());
    for scenario in scenarios {
        let validated = scenario.validate().map_err(Failure::from)?;
        for &backend in &backends {
            cells.push((validated.clone(), backend));
        }
    }

    let format = match spec.format.as_deref() {
        None => TableFormat::Csv,
        Some(name) => name.parse().map_err(Failure::Usage)?,
    };

    Ok(SweepPlan {
        cells,
        seeds: spec.seeds.unwrap_or_else(|| vec![0]),
        sim_time: spec.sim_time.unwrap_or(100_000.0),
        output: spec.output,
        format,
    })
}

/// Evaluates every cell (concurrently) and returns rows in spec order.
pub fn run_plan(plan: &SweepPlan, jobs: usize) -> Result<Vec<SweepRow>, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Usage(format!("cannot build worker pool: {e}")))?;
    let rows = pool.install(|| {
        plan.cells
            .par_iter()
            .map(|(params, backend)| match backend {
                Backend::Model => model_row(params),
                Backend::Simulator => simulator_row(params, plan.sim_time, &plan.seeds),
            })
            .collect()
    });
    Ok(rows)
}
