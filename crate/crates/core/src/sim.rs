//! Discrete-event simulation of the blockchain pipeline: Poisson arrivals
//! into a shared pool, block formation by size-or-timer, exponential
//! mining by M miners, propagation, and fork resolution.
//!
//! A run is strictly sequential over a time-ordered event heap and fully
//! determined by its seed. Event draws happen in a fixed order (one draw
//! per arrival, M draws per formed block), so identical seeds yield
//! bit-identical results.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{ModelError, Result};
use crate::params::ScenarioParams;

/// What happens to a forked block's transactions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum LoserTxPolicy {
    /// Transactions stay at the front of the pool and are re-mined.
    #[default]
    ReturnToPoolFront,
    /// Transactions are removed and never committed.
    Discard,
}

impl std::str::FromStr for LoserTxPolicy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "return" => Ok(LoserTxPolicy::ReturnToPoolFront),
            "discard" => Ok(LoserTxPolicy::Discard),
            other => Err(format!(
                "unknown loser-tx policy '{other}' (expected 'return' or 'discard')"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub scenario: ScenarioParams,
    pub sim_time: f64,
    pub seed: u64,
    pub forks_enabled: bool,
    /// Seconds excluded from the delay and fork metrics.
    pub warmup: f64,
    pub loser_tx_policy: LoserTxPolicy,
}

impl Default for SimConfig {
    fn default() -> Self {
        let sim_time = 100_000.0;
        SimConfig {
            scenario: ScenarioParams::default(),
            sim_time,
            seed: 0,
            forks_enabled: true,
            warmup: default_warmup(sim_time),
            loser_tx_policy: LoserTxPolicy::default(),
        }
    }
}

/// Default warmup: the first 5% of the horizon.
pub fn default_warmup(sim_time: f64) -> f64 {
    0.05 * sim_time
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.warmup >= 0.0 && self.sim_time > self.warmup) {
            return Err(ModelError::InvalidParameter {
                violations: vec![format!(
                    "sim_time must exceed warmup >= 0 (got sim_time {}, warmup {})",
                    self.sim_time, self.warmup
                )],
            });
        }
        Ok(())
    }
}

/// Per-run metrics. Delay means and fork counts cover the post-warmup
/// window; the conservation counters cover the whole run.
#[derive(Debug, Clone, Serialize)]
pub struct SimResult {
    /// Arrival to mining completion of the committing block, seconds.
    pub mean_pool_delay: Option<f64>,
    /// Arrival to full propagation of the committing block, seconds.
    pub mean_confirmation_latency: Option<f64>,
    /// Forked blocks per committed block.
    pub fork_rate: f64,
    /// Transactions rejected at a full pool.
    pub drop_count: u64,
    pub blocks_mined: u64,
    /// Counts per batch size 0..=b.
    pub block_size_histogram: Vec<u64>,
    pub transactions_committed: u64,
    /// 95% half-width for `mean_pool_delay` from within-run samples.
    pub ci_half_width: Option<f64>,
    pub fork_count: u64,
    // whole-run conservation counters
    pub arrivals_accepted: u64,
    pub pool_residual: u64,
    /// Transactions inside the block being mined at the horizon (a subset
    /// of `pool_residual`).
    pub in_flight: u64,
    pub fork_discarded: u64,
    pub committed_total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    TxArrival,
    /// Candidate block assembled, by reaching the block size or by timer.
    BlockFormed { cycle: u64 },
    MiningDone { cycle: u64, miner: u32 },
    PropagationDone { block: u64 },
}

impl EventKind {
    fn label(&self) -> &'static str {
        match self {
            EventKind::TxArrival => "TX_ARRIVAL",
            EventKind::BlockFormed { .. } => "BLOCK_FORMED",
            EventKind::MiningDone { .. } => "MINING_DONE",
            EventKind::PropagationDone { .. } => "PROPAGATION_DONE",
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // reversed: BinaryHeap is a max-heap, we want earliest first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .partial_cmp(&self.time)
            .expect("finite event times")
            .then(other.seq.cmp(&self.seq))
    }
}

struct PendingBlock {
    size: usize,
    winner: usize,
    winner_delay: f64,
    /// Relative mining completion per miner, sampled at formation.
    draws: Vec<f64>,
    id: u64,
}

struct Engine<'a> {
    config: &'a SimConfig,
    rng: ChaCha8Rng,
    heap: BinaryHeap<Event>,
    seq: u64,
    pool: VecDeque<f64>,
    in_block: usize,
    cycle: u64,
    /// Timer will be armed by the first arrival of the current cycle.
    arm_on_arrival: bool,
    forming: bool,
    pending: Option<PendingBlock>,
    next_block_id: u64,
    // metrics
    pool_delays: Vec<f64>,
    confirmations: Vec<f64>,
    drop_count: u64,
    blocks_mined: u64,
    histogram: Vec<u64>,
    committed: u64,
    forks: u64,
    committed_blocks: u64,
    arrivals_accepted: u64,
    fork_discarded: u64,
    committed_total: u64,
    pending_confirmations: Vec<(u64, Vec<f64>)>,
    trace: Option<&'a mut dyn Write>,
}

impl<'a> Engine<'a> {
    fn new(config: &'a SimConfig, trace: Option<&'a mut dyn Write>) -> Self {
        let b = config.scenario.block_size_tx;
        Engine {
            config,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            heap: BinaryHeap::new(),
            seq: 0,
            pool: VecDeque::new(),
            in_block: 0,
            cycle: 0,
            arm_on_arrival: false,
            forming: true,
            pending: None,
            next_block_id: 0,
            pool_delays: Vec::new(),
            confirmations: Vec::new(),
            drop_count: 0,
            blocks_mined: 0,
            histogram: vec![0; b + 1],
            committed: 0,
            forks: 0,
            committed_blocks: 0,
            arrivals_accepted: 0,
            fork_discarded: 0,
            committed_total: 0,
            pending_confirmations: Vec::new(),
            trace,
        }
    }

    fn exp_sample(&mut self, rate: f64) -> f64 {
        -(1.0 - self.rng.gen::<f64>()).ln() / rate
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Event { time, seq, kind });
    }

    fn measured(&self, time: f64) -> bool {
        time > self.config.warmup
    }

    fn emit_trace(&mut self, time: f64, kind: &EventKind, block_id: Option<u64>) {
        if let Some(w) = self.trace.as_deref_mut() {
            let miner = match kind {
                EventKind::MiningDone { miner, .. } => miner.to_string(),
                _ => "-".to_string(),
            };
            let block = block_id.map_or_else(|| "-".to_string(), |b| b.to_string());
            let _ = writeln!(
                w,
                "{:.6}\t{}\t{}\t{}\t{}",
                time,
                kind.label(),
                miner,
                self.pool.len(),
                block
            );
        }
    }

    /// Called at t = 0 and after every mining completion.
    fn start_cycle(&mut self, now: f64) {
        self.forming = true;
        self.in_block = 0;
        self.arm_on_arrival = false;
        let b = self.config.scenario.block_size_tx;
        if self.pool.len() >= b {
            self.schedule(
                now,
                EventKind::BlockFormed { cycle: self.cycle },
            );
        } else if !self.pool.is_empty() {
            self.schedule(
                now + self.config.scenario.timer,
                EventKind::BlockFormed { cycle: self.cycle },
            );
        } else {
            // empty pool: the timer re-arms on the next arrival
            self.arm_on_arrival = true;
        }
    }

    fn on_arrival(&mut self, now: f64) {
        let scenario = &self.config.scenario;
        let next = now + self.exp_sample(scenario.mu);
        self.schedule(next, EventKind::TxArrival);
        if self.pool.len() >= scenario.queue_size {
            if self.measured(now) {
                self.drop_count += 1;
            }
            return;
        }
        self.pool.push_back(now);
        self.arrivals_accepted += 1;
        if self.forming {
            if self.pool.len() >= scenario.block_size_tx {
                self.schedule(
                    now,
                    EventKind::BlockFormed { cycle: self.cycle },
                );
            } else if self.arm_on_arrival {
                self.arm_on_arrival = false;
                self.schedule(
                    now + scenario.timer,
                    EventKind::BlockFormed { cycle: self.cycle },
                );
            }
        }
    }

    fn on_block_formed(&mut self, now: f64, cycle: u64) -> Option<u64> {
        // stale events from an earlier cycle or an already-formed block
        if cycle != self.cycle || !self.forming {
            return None;
        }
        let scenario = &self.config.scenario;
        let n = self.pool.len().min(scenario.block_size_tx);
        debug_assert!(n >= 1);
        self.forming = false;
        self.in_block = n;
        let m = scenario.miners as usize;
        let draws: Vec<f64> = (0..m).map(|_| self.exp_sample(scenario.lambda)).collect();
        let (winner, winner_delay) = draws
            .iter()
            .copied()
            .enumerate()
            .fold((0usize, f64::INFINITY), |best, (i, d)| {
                if d < best.1 {
                    (i, d)
                } else {
                    best
                }
            });
        let id = self.next_block_id;
        self.next_block_id += 1;
        self.pending = Some(PendingBlock {
            size: n,
            winner,
            winner_delay,
            draws,
            id,
        });
        self.schedule(
            now + winner_delay,
            EventKind::MiningDone {
                cycle,
                miner: winner as u32,
            },
        );
        Some(id)
    }

    fn on_mining_done(&mut self, now: f64) -> Option<u64> {
        let block = self.pending.take().expect("mining without a pending block");
        let scenario = &self.config.scenario;
        let prop_delay = scenario.block_bits_of(block.size as f64) / scenario.capacity_bps;
        let forked = self.config.forks_enabled
            && scenario.miners > 1
            && block
                .draws
                .iter()
                .enumerate()
                .any(|(i, d)| i != block.winner && *d < block.winner_delay + prop_delay);
        let measured = self.measured(now);
        if measured {
            self.blocks_mined += 1;
            self.histogram[block.size] += 1;
        }
        if forked {
            if measured {
                self.forks += 1;
            }
            match self.config.loser_tx_policy {
                LoserTxPolicy::ReturnToPoolFront => {
                    // transactions never left the pool; they get re-mined
                }
                LoserTxPolicy::Discard => {
                    for _ in 0..block.size {
                        self.pool.pop_front();
                    }
                    self.fork_discarded += block.size as u64;
                }
            }
        } else {
            let mut batch = Vec::with_capacity(block.size);
            for _ in 0..block.size {
                let arrival = self.pool.pop_front().expect("committed txs in pool");
                batch.push(arrival);
            }
            self.committed_total += block.size as u64;
            if measured {
                self.committed_blocks += 1;
                self.committed += block.size as u64;
                for &a in &batch {
                    self.pool_delays.push(now - a);
                }
            }
            self.confirm_later(now + prop_delay, block.id, batch);
        }
        self.cycle += 1;
        let id = block.id;
        self.start_cycle(now);
        Some(id)
    }

    fn confirm_later(&mut self, at: f64, block: u64, batch: Vec<f64>) {
        self.pending_confirmations.push((block, batch));
        self.schedule(at, EventKind::PropagationDone { block });
    }

    fn run(mut self) -> SimResult {
        let start = self.exp_sample(self.config.scenario.mu);
        self.schedule(start, EventKind::TxArrival);
        self.start_cycle(0.0);
        while let Some(event) = self.heap.pop() {
            if event.time > self.config.sim_time {
                break;
            }
            let block_id = match event.kind {
                EventKind::TxArrival => {
                    self.on_arrival(event.time);
                    None
                }
                EventKind::BlockFormed { cycle } => self.on_block_formed(event.time, cycle),
                EventKind::MiningDone { .. } => self.on_mining_done(event.time),
                EventKind::PropagationDone { block } => {
                    self.on_propagation_done(event.time, block);
                    Some(block)
                }
            };
            self.emit_trace(event.time, &event.kind, block_id);
        }
        self.finish()
    }

    fn on_propagation_done(&mut self, now: f64, block: u64) {
        if let Some(pos) = self
            .pending_confirmations
            .iter()
            .position(|(id, _)| *id == block)
        {
            let (_, batch) = self.pending_confirmations.remove(pos);
            if self.measured(now) {
                for a in batch {
                    self.confirmations.push(now - a);
                }
            }
        }
    }

    fn finish(self) -> SimResult {
        let mean = |xs: &[f64]| {
            if xs.is_empty() {
                None
            } else {
                Some(xs.iter().sum::<f64>() / xs.len() as f64)
            }
        };
        let mean_pool_delay = mean(&self.pool_delays);
        let ci_half_width = mean_pool_delay.and_then(|m| {
            let n = self.pool_delays.len();
            if n < 2 {
                return None;
            }
            let var = self
                .pool_delays
                .iter()
                .map(|x| (x - m) * (x - m))
                .sum::<f64>()
                / (n - 1) as f64;
            Some(1.96 * (var / n as f64).sqrt())
        });
        SimResult {
            mean_pool_delay,
            mean_confirmation_latency: mean(&self.confirmations),
            fork_rate: if self.committed_blocks == 0 {
                0.0
            } else {
                self.forks as f64 / self.committed_blocks as f64
            },
            drop_count: self.drop_count,
            blocks_mined: self.blocks_mined,
            block_size_histogram: self.histogram,
            transactions_committed: self.committed,
            ci_half_width,
            fork_count: self.forks,
            arrivals_accepted: self.arrivals_accepted,
            pool_residual: self.pool.len() as u64,
            in_flight: self.in_block as u64,
            fork_discarded: self.fork_discarded,
            committed_total: self.committed_total,
        }
    }
}

/// Runs a single replication.
pub fn run_simulation(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    Ok(Engine::new(config, None).run())
}

/// Runs a single replication, writing one tab-separated record per event:
/// time, event type, miner id, pool occupancy, block id.
pub fn run_simulation_traced(config: &SimConfig, trace: &mut dyn Write) -> Result<SimResult> {
    config.validate()?;
    Ok(Engine::new(config, Some(trace)).run())
}

/// Replication means with 95% confidence half-widths (Student t).
#[derive(Debug, Clone, Serialize)]
pub struct SimSummary {
    pub mean_pool_delay: Option<f64>,
    pub ci_pool_delay: Option<f64>,
    pub mean_confirmation_latency: Option<f64>,
    pub ci_confirmation_latency: Option<f64>,
    pub fork_rate: f64,
    pub ci_fork_rate: Option<f64>,
    pub mean_drop_count: f64,
    pub mean_blocks_mined: f64,
    pub mean_transactions_committed: f64,
}

#[derive(Debug, Clone)]
pub struct Aggregated {
    pub per_seed: Vec<(u64, SimResult)>,
    pub result: SimSummary,
}

fn mean_ci(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len();
    let m = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(m), None);
    }
    let var = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid dof")
        .inverse_cdf(0.975);
    (Some(m), Some(t * (var / n as f64).sqrt()))
}

/// Runs one replication per seed and aggregates.
pub fn run_replications(config: &SimConfig, seeds: &[u64]) -> Aggregated {
    let per_seed: Vec<(u64, SimResult)> = seeds
        .iter()
        .map(|&seed| {
            let mut cfg = config.clone();
            cfg.seed = seed;
            (seed, Engine::new(&cfg, None).run())
        })
        .collect();
    let collect = |f: &dyn Fn(&SimResult) -> Option<f64>| -> Vec<f64> {
        per_seed.iter().filter_map(|(_, r)| f(r)).collect()
    };
    let (mean_pool_delay, ci_pool_delay) = mean_ci(&collect(&|r| r.mean_pool_delay));
    let (mean_conf, ci_conf) = mean_ci(&collect(&|r| r.mean_confirmation_latency));
    let (fork_rate, ci_fork_rate) = mean_ci(&collect(&|r| Some(r.fork_rate)));
    let mean_of = |f: &dyn Fn(&SimResult) -> f64| -> f64 {
        per_seed.iter().map(|(_, r)| f(r)).sum::<f64>() / per_seed.len().max(1) as f64
    };
    Aggregated {
        result: SimSummary {
            mean_pool_delay,
            ci_pool_delay,
            mean_confirmation_latency: mean_conf,
            ci_confirmation_latency: ci_conf,
            fork_rate: fork_rate.unwrap_or(0.0),
            ci_fork_rate,
            mean_drop_count: mean_of(&|r| r.drop_count as f64),
            mean_blocks_mined: mean_of(&|r| r.blocks_mined as f64),
            mean_transactions_committed: mean_of(&|r| r.transactions_committed as f64),
        },
        per_seed,
    }
}
