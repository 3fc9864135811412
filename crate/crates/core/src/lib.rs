//! Transaction-confirmation latency of a PoW blockchain, modeled as a
//! finite batch-service queue with timers and forks, together with a
//! block size optimizer and a discrete-event simulator for validation.

pub mod error;
pub mod latency;
pub mod optimize;
pub mod params;
pub mod queue;
pub mod sim;

pub use error::{ModelError, Result};
pub use latency::{confirmation_latency, LatencyBreakdown, ModelOptions};
pub use optimize::{
    brute_force_block_size, lagrange_fit, optimize_block_size, BruteForceResult, Evaluator,
    OptimizationResult, Polynomial, SizeConvention,
};
pub use params::{block_bits, ScenarioParams, ServiceRateMode};
pub use queue::{
    solve_queue, SteadyStateVariant, QueueDiagnostics, QueueModelOptions, QueueSolution, TransitionMatrix,
};
pub use sim::{
    run_replications, run_simulation, run_simulation_traced, Aggregated, LoserTxPolicy, SimConfig,
    SimResult, SimSummary,
};
