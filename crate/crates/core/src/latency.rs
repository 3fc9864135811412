//! End-to-end confirmation latency: queue delay, block generation,
//! propagation, and fork inflation.

use serde::Serialize;

use crate::error::{ModelError, Result};
use crate::params::ScenarioParams;
use crate::queue::{solve_queue, QueueModelOptions, QueueSolution};

/// Latency components in seconds, plus the fork probability that
/// inflates their sum.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LatencyBreakdown {
    pub t_q: f64,
    pub t_bg: f64,
    pub t_bp: f64,
    pub p_fork: f64,
    pub t_bc: f64,
}

/// Model evaluation switches shared by the latency model and optimizer.
#[derive(Debug, Clone, Copy)]
pub struct ModelOptions {
    pub queue: QueueModelOptions,
    /// Force the fork probability to zero regardless of miner count.
    pub forks_enabled: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            queue: QueueModelOptions::default(),
            forks_enabled: true,
        }
    }
}

/// Time to push a block of `b` transactions through the P2P capacity.
pub fn propagation_delay(b: usize, params: &ScenarioParams) -> f64 {
    params.block_bits_of(b as f64) / params.capacity_bps
}

/// Expected mining time with `m` miners racing at rate `lambda` each.
pub fn mining_delay(m: u32, lambda: f64) -> f64 {
    1.0 / (m as f64 * lambda)
}

/// Probability that another miner completes before the winner's block has
/// fully propagated.
pub fn fork_probability(lambda: f64, m: u32, t_bp: f64) -> f64 {
    if m <= 1 {
        return 0.0;
    }
    1.0 - (-lambda * (m - 1) as f64 * t_bp).exp()
}

/// Composes the full confirmation latency for a validated scenario. The
/// fork probability depends only on the block size, so it is computed
/// first and fed into the queue model's served-batch reduction.
pub fn confirmation_latency(
    params: &ScenarioParams,
    options: ModelOptions,
) -> Result<(LatencyBreakdown, QueueSolution)> {
    let t_bp = propagation_delay(params.block_size_tx, params);
    let p_fork = if options.forks_enabled {
        fork_probability(params.lambda, params.miners, t_bp)
    } else {
        0.0
    };
    if p_fork >= 1.0 - 1e-12 {
        return Err(ModelError::ForkSaturated { p_fork });
    }
    let solution = solve_queue(params, p_fork, options.queue)?;
    let t_bg = mining_delay(params.miners, params.lambda);
    let t_bc = (solution.t_q + t_bg + t_bp) / (1.0 - p_fork);
    Ok((
        LatencyBreakdown {
            t_q: solution.t_q,
            t_bg,
            t_bp,
            p_fork,
            t_bc,
        },
        solution,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_scenario() -> ScenarioParams {
        ScenarioParams::default().validate().unwrap()
    }

    #[test]
    fn propagation_examples() {
        let p = table_scenario();
        assert!((propagation_delay(5, &p) - 0.009).abs() < 1e-15);
        assert!((propagation_delay(0, &p) - 0.004).abs() < 1e-15);
        let double_cap = ScenarioParams {
            capacity_bps: 1e7,
            ..p.clone()
        };
        assert!((propagation_delay(5, &double_cap) - 0.0045).abs() < 1e-15);
    }

    #[test]
    fn mining_examples() {
        assert!((mining_delay(10, 0.25) - 0.4).abs() < 1e-15);
        assert_eq!(mining_delay(1, 1.0), 1.0);
        assert!((mining_delay(1, 0.1) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn fork_probability_examples() {
        assert_eq!(fork_probability(0.25, 1, 0.009), 0.0);
        let p = fork_probability(0.25, 10, 0.009);
        assert!((p - (1.0 - (-0.02025f64).exp())).abs() < 1e-12);
        assert!((p - 0.020046).abs() < 1e-6);
        assert_eq!(fork_probability(0.25, 10, 0.0), 0.0);
    }

    #[test]
    fn single_miner_latency_is_plain_sum() {
        let params = table_scenario();
        let (lat, _) = confirmation_latency(&params, ModelOptions::default()).unwrap();
        assert_eq!(lat.p_fork, 0.0);
        assert!((lat.t_bc - (lat.t_q + lat.t_bg + lat.t_bp)).abs() < 1e-15);
    }

    #[test]
    fn fork_inflation_increases_latency() {
        let single = table_scenario();
        let multi = ScenarioParams {
            miners: 10,
            ..single.clone()
        }
        .validate()
        .unwrap();
        let (lm, _) = confirmation_latency(&multi, ModelOptions::default()).unwrap();
        assert!(lm.p_fork > 0.0);
        assert!(lm.t_bc > lm.t_q + lm.t_bg + lm.t_bp);
        let expected = (lm.t_q + lm.t_bg + lm.t_bp) / (1.0 - lm.p_fork);
        assert!((lm.t_bc - expected).abs() < 1e-12);
    }
}
