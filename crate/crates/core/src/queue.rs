//! Finite batch-service queue: embedded departure chain, timer/PASTA
//! correction, and expected queuing delay.
//!
//! States count transactions left in the pool at a departure (mining
//! completion). The departure chain transitions race exponential service
//! against Poisson arrivals; the steady-state (time-average) distribution
//! is then recovered from the departure distribution via PASTA.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{ModelError, Result};
use crate::params::ScenarioParams;

/// Row-stochasticity and fixed-point tolerance.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Steady-state mass below this (in absolute value) is clamped to zero;
/// anything more negative makes the solution an error.
pub const CLAMP_TOL: f64 = 1e-6;
/// Blocking probability at which the queue is flagged as saturated. Past
/// a few percent of dropped arrivals the departure chain stops describing
/// the real pool dynamics.
pub const SATURATION_BLOCKING_THRESHOLD: f64 = 0.025;

/// Which occupancy the served-batch size is evaluated at inside the
/// timer-expiry correction: the pool occupancy reached when the timer
/// fires, or the bare count of timer-window arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum SteadyStateVariant {
    #[default]
    FormationOccupancy,
    ArrivalCount,
}

impl std::str::FromStr for SteadyStateVariant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "occupancy" => Ok(SteadyStateVariant::FormationOccupancy),
            "arrivals" => Ok(SteadyStateVariant::ArrivalCount),
            other => Err(format!(
                "unknown variant '{other}' (expected 'occupancy' or 'arrivals')"
            )),
        }
    }
}

/// Knobs of the analytical queue solution.
#[derive(Debug, Clone, Copy, Default)]
pub struct QueueModelOptions {
    /// Disable the timer branch entirely: every block waits for a full
    /// batch of `b` transactions.
    pub timer_disabled: bool,
    pub steady_state_variant: SteadyStateVariant,
}

/// Embedded departure-chain transition matrix over states `0..=K`.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    /// K + 1.
    pub size: usize,
    /// Row-major entries.
    entries: Vec<f64>,
    /// Integer batch size used for state bookkeeping, per state.
    pub served: Vec<usize>,
    /// Unrounded fork-adjusted batch size, per state, kept for reporting.
    pub served_real: Vec<f64>,
}

impl TransitionMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.size..(i + 1) * self.size]
    }

    /// Sum of row `i` over columns `from..=K`; `from` may be negative.
    pub fn row_tail_sum(&self, i: usize, from: isize) -> f64 {
        let lo = from.max(0) as usize;
        if lo >= self.size {
            return 0.0;
        }
        self.row(i)[lo..].iter().sum()
    }
}

/// Diagnostic flags carried by a queue solution.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct QueueDiagnostics {
    /// Some steady-state entries in `[-CLAMP_TOL, 0)` were clamped to zero.
    pub negative_mass_clamped: bool,
    /// Blocking probability beyond `SATURATION_BLOCKING_THRESHOLD`.
    pub saturated: bool,
}

/// Departure and time-average distributions plus derived delays.
#[derive(Debug, Clone)]
pub struct QueueSolution {
    pub pi_departure: Vec<f64>,
    pub pi_steady: Vec<f64>,
    /// Expected inter-departure time, seconds.
    pub t_d: f64,
    /// Expected queue delay, seconds.
    pub t_q: f64,
    pub diagnostics: QueueDiagnostics,
}

impl QueueSolution {
    /// Blocking probability: the pool is full at a Poisson arrival.
    pub fn blocking_probability(&self) -> f64 {
        *self.pi_steady.last().expect("non-empty distribution")
    }
}

/// Poisson pmf `e^-mean mean^n / n!`, evaluated in log space.
pub fn poisson_pmf(n: u64, mean: f64) -> f64 {
    debug_assert!(mean >= 0.0);
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * mean.ln() - mean - ln_gamma(n as f64 + 1.0)).exp()
}

/// P(N <= n) for N ~ Poisson(mean).
pub fn poisson_cdf(n: u64, mean: f64) -> f64 {
    (0..=n).map(|m| poisson_pmf(m, mean)).sum::<f64>().min(1.0)
}

/// Probability that the timer fires before the pool refills to a full
/// batch, starting from departure state `i`: fewer than `b - i` arrivals
/// occur within `tau`.
pub fn timer_expiry_prob(i: usize, b: usize, mu: f64, tau: f64) -> f64 {
    if i >= b {
        return 0.0;
    }
    poisson_cdf((b - i - 1) as u64, mu * tau)
}

/// Expected block-formation time from departure state `i`:
/// `E[min(Erlang(b - i, mu), tau)]`. With the timer disabled this is the
/// bare Erlang mean `(b - i) / mu`.
pub fn expected_formation_time(
    i: usize,
    b: usize,
    mu: f64,
    tau: f64,
    timer_disabled: bool,
) -> f64 {
    if i >= b {
        return 0.0;
    }
    let n = b - i;
    if timer_disabled {
        return n as f64 / mu;
    }
    // integral of the Erlang survival function over [0, tau]
    let mean = mu * tau;
    (0..n)
        .map(|m| 1.0 - poisson_cdf(m as u64, mean))
        .sum::<f64>()
        / mu
}

/// Fork-adjusted expected batch size from occupancy `n`.
pub fn expected_served(n: usize, b: usize, fork_valid_tx: usize, p_fork: f64) -> f64 {
    (1.0 - p_fork) * n.min(b) as f64 + p_fork * fork_valid_tx as f64
}

/// Integer batch size used for state arithmetic: nearest integer, ties up.
pub fn served_count(n: usize, b: usize, fork_valid_tx: usize, p_fork: f64) -> usize {
    (expected_served(n, b, fork_valid_tx, p_fork) + 0.5).floor() as usize
}

/// Builds the embedded departure chain for pool size `k`, batch size `b`,
/// arrival rate `mu`, and service rate `lambda_s`, with the served batch
/// reduced by the fork probability.
pub fn build_transition_matrix(
    k: usize,
    b: usize,
    mu: f64,
    lambda_s: f64,
    fork_valid_tx: usize,
    p_fork: f64,
) -> Result<TransitionMatrix> {
    let size = k + 1;
    let mut entries = vec![0.0; size * size];
    let mut served = Vec::with_capacity(size);
    let mut served_real = Vec::with_capacity(size);
    let q = lambda_s / (lambda_s + mu);
    let r = mu / (lambda_s + mu);
    for i in 0..size {
        // the chain cannot clear more transactions than are present
        let s = served_count(i, b, fork_valid_tx, p_fork).min(i);
        served.push(s);
        served_real.push(expected_served(i, b, fork_valid_tx, p_fork));
        let base = i - s; // s <= min(i, b)
        let row = &mut entries[i * size..(i + 1) * size];
        let mut partial = 0.0;
        for j in base..(k - s) {
            let p = q * r.powi((j - base) as i32);
            row[j] = p;
            partial += p;
        }
        row[k - s] = 1.0 - partial;
        if row.iter().sum::<f64>() <= 0.0 {
            return Err(ModelError::DegenerateChain { row: i });
        }
    }
    Ok(TransitionMatrix {
        size,
        entries,
        served,
        served_real,
    })
}

/// Stationary distribution of the departure chain: solves the balance
/// equations directly, replacing one of them with the normalization
/// constraint.
pub fn solve_embedded_chain(matrix: &TransitionMatrix) -> Result<Vec<f64>> {
    let n = matrix.size;
    // A = P^T - I, last balance row swapped for sum-to-one
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(j, i)] = matrix.get(i, j);
        }
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = a.lu().solve(&rhs).ok_or(ModelError::SingularSystem)?;
    let pi: Vec<f64> = pi.iter().copied().collect();
    // reducible chains can slip past LU with a garbage solution
    let residual = fixed_point_residual(matrix, &pi);
    if !residual.is_finite() || residual > RESIDUAL_TOL || pi.iter().any(|p| *p < -RESIDUAL_TOL) {
        return Err(ModelError::SingularSystem);
    }
    Ok(pi)
}

/// `max_j |(pi P)_j - pi_j|`.
pub fn fixed_point_residual(matrix: &TransitionMatrix, pi: &[f64]) -> f64 {
    let n = matrix.size;
    (0..n)
        .map(|j| {
            let pj: f64 = (0..n).map(|i| pi[i] * matrix.get(i, j)).sum();
            (pj - pi[j]).abs()
        })
        .fold(0.0, f64::max)
}

/// Converts the departure distribution into the time-average steady state
/// and the expected queue delay.
///
/// The time spent at occupancy `k` per departure cycle is recovered from
/// the probability that the next departure clears level `k`. In the
/// no-expiry branch the batch forms at occupancy `>= b`, so the cleared
/// amount is the full fork-adjusted batch; in the timer branch it is the
/// batch available when the timer fires.
pub fn steady_state(
    params: &ScenarioParams,
    matrix: &TransitionMatrix,
    pi_departure: &[f64],
    p_fork: f64,
    options: QueueModelOptions,
) -> Result<QueueSolution> {
    let k = params.queue_size;
    let b = params.block_size_tx;
    let mu = params.mu;
    let tau = params.timer;
    let lambda_s = params.service_rate();

    let t_d: f64 = (0..=k)
        .map(|i| {
            pi_departure[i]
                * (expected_formation_time(i, b, mu, tau, options.timer_disabled) + 1.0 / lambda_s)
        })
        .sum();

    // batch cleared when the block forms on a full pool of >= b
    let s_full = served_count(b, b, params.fork_valid_tx, p_fork) as isize;
    let mut pi_steady = vec![0.0; k + 1];
    for (kk, slot) in pi_steady.iter_mut().enumerate().take(k) {
        let kk_i = kk as isize;
        let mut total = 0.0;
        for i in 0..=kk {
            let no_expiry = matrix.row_tail_sum(i, kk_i - s_full + 1);
            let sigma = if options.timer_disabled {
                0.0
            } else {
                timer_expiry_prob(i, b, mu, tau)
            };
            let timer_term = if sigma > 0.0 {
                (i..b)
                    .map(|j| {
                        let occupancy = match options.steady_state_variant {
                            SteadyStateVariant::FormationOccupancy => j,
                            SteadyStateVariant::ArrivalCount => j - i,
                        };
                        let s_j =
                            served_count(occupancy, b, params.fork_valid_tx, p_fork) as isize;
                        poisson_pmf((j - i) as u64, mu * tau)
                            * matrix.row_tail_sum(j, kk_i - s_j + 1)
                    })
                    .sum::<f64>()
            } else {
                0.0
            };
            total += pi_departure[i] * ((1.0 - sigma) * no_expiry + sigma * timer_term);
        }
        *slot = total / (mu * t_d);
    }

    let mut diagnostics = QueueDiagnostics::default();
    for p in pi_steady.iter_mut().take(k) {
        if *p < -CLAMP_TOL {
            return Err(ModelError::ModelUnstable {
                detail: format!("steady-state mass {p} below clamping tolerance"),
            });
        }
        if *p < 0.0 {
            *p = 0.0;
            diagnostics.negative_mass_clamped = true;
        }
    }
    let partial: f64 = pi_steady[..k].iter().sum();
    let blocking = 1.0 - partial;
    if blocking < -CLAMP_TOL {
        return Err(ModelError::ModelUnstable {
            detail: format!("blocking probability {blocking} below clamping tolerance"),
        });
    }
    pi_steady[k] = blocking.max(0.0);
    if blocking < 0.0 {
        diagnostics.negative_mass_clamped = true;
        let sum: f64 = pi_steady.iter().sum();
        for p in pi_steady.iter_mut() {
            *p /= sum;
        }
    }
    diagnostics.saturated = pi_steady[k] >= SATURATION_BLOCKING_THRESHOLD;

    let t_q = mean_queue_delay(&pi_steady, mu)?;
    Ok(QueueSolution {
        pi_departure: pi_departure.to_vec(),
        pi_steady,
        t_d,
        t_q,
        diagnostics,
    })
}

/// Expected time in the pool: mean occupancy over the accepted arrival rate.
pub fn mean_queue_delay(pi_steady: &[f64], mu: f64) -> Result<f64> {
    let k = pi_steady.len() - 1;
    let blocking = pi_steady[k];
    if 1.0 - blocking <= f64::EPSILON {
        return Err(ModelError::DivisionDegenerate);
    }
    let mean_occupancy: f64 = pi_steady
        .iter()
        .enumerate()
        .map(|(k, p)| k as f64 * p)
        .sum();
    Ok(mean_occupancy / (mu * (1.0 - blocking)))
}

/// Full pipeline: transition matrix, departure distribution, steady state.
pub fn solve_queue(
    params: &ScenarioParams,
    p_fork: f64,
    options: QueueModelOptions,
) -> Result<QueueSolution> {
    let matrix = build_transition_matrix(
        params.queue_size,
        params.block_size_tx,
        params.mu,
        params.service_rate(),
        params.fork_valid_tx,
        p_fork,
    )?;
    let pi_d = solve_embedded_chain(&matrix)?;
    steady_state(params, &matrix, &pi_d, p_fork, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_pmf_examples() {
        assert_eq!(poisson_pmf(0, 0.0), 1.0);
        assert!((poisson_pmf(2, 1.0) - (-1.0f64).exp() / 2.0).abs() < 1e-12);
        assert!((poisson_pmf(1, 2.5) - 2.5 * (-2.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn timer_expiry_examples() {
        assert_eq!(timer_expiry_prob(2, 2, 1.0, 1.0), 0.0);
        let p = timer_expiry_prob(0, 2, 1.0, 1.0);
        assert!((p - 2.0 * (-1.0f64).exp()).abs() < 1e-12);
        // effectively infinite timer: an arrival almost surely comes first
        assert!(timer_expiry_prob(0, 1, 1.0, 1e6) < 1e-12);
    }

    #[test]
    fn formation_time_examples() {
        assert_eq!(expected_formation_time(3, 2, 1.0, 1.0, false), 0.0);
        let e = expected_formation_time(1, 2, 1.0, 1.0, false);
        assert!((e - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert_eq!(expected_formation_time(0, 4, 2.0, 1.0, true), 2.0);
    }

    #[test]
    fn expected_served_examples() {
        assert_eq!(expected_served(7, 5, 0, 0.0), 5.0);
        assert_eq!(expected_served(7, 5, 0, 1.0), 0.0);
        assert!((expected_served(3, 5, 0, 0.02) - 2.94).abs() < 1e-12);
        assert_eq!(served_count(3, 5, 0, 0.02), 3); // 2.94 rounds up
    }

    #[test]
    fn equal_rate_race() {
        let m = build_transition_matrix(10, 5, 1.0, 1.0, 0, 0.0).unwrap();
        assert!((m.get(0, 0) - 0.5).abs() < 1e-12);
        assert!((m.get(0, 1) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rows_sum_to_one() {
        let m = build_transition_matrix(10, 3, 0.7, 0.4, 1, 0.05).unwrap();
        for i in 0..=10 {
            let sum: f64 = m.row(i).iter().sum();
            assert!((sum - 1.0).abs() < RESIDUAL_TOL, "row {i} sums to {sum}");
        }
    }

    #[test]
    fn symmetric_two_state_chain() {
        let m = TransitionMatrix {
            size: 2,
            entries: vec![0.5, 0.5, 0.5, 0.5],
            served: vec![0, 1],
            served_real: vec![0.0, 1.0],
        };
        let pi = solve_embedded_chain(&m).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-12);
        assert!((pi[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identity_chain_is_singular() {
        let m = TransitionMatrix {
            size: 2,
            entries: vec![1.0, 0.0, 0.0, 1.0],
            served: vec![0, 1],
            served_real: vec![0.0, 1.0],
        };
        assert!(matches!(
            solve_embedded_chain(&m),
            Err(ModelError::SingularSystem)
        ));
    }

    #[test]
    fn hand_evaluated_mean_delay() {
        let pi = vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        let t_q = mean_queue_delay(&pi, 1.0).unwrap();
        assert!((t_q - 1.5).abs() < 1e-12);
        assert_eq!(mean_queue_delay(&[1.0, 0.0, 0.0], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn full_blocking_is_degenerate() {
        assert!(matches!(
            mean_queue_delay(&[0.0, 0.0, 1.0], 1.0),
            Err(ModelError::DivisionDegenerate)
        ));
    }

    #[test]
    fn saturated_flag_under_heavy_load() {
        let params = ScenarioParams {
            mu: 0.25,
            lambda: 0.25,
            block_size_tx: 10,
            timer: 100.0,
            ..Default::default()
        }
        .validate()
        .unwrap();
        let sol = solve_queue(&params, 0.0, QueueModelOptions::default()).unwrap();
        assert!(sol.diagnostics.saturated);
    }

    #[test]
    fn poisson_pmf_normalizes() {
        for mean in [0.5, 1.0, 10.0, 50.0] {
            let total: f64 = (0..=200).map(|n| poisson_pmf(n, mean)).sum();
            assert!((total - 1.0).abs() < 1e-12, "mean {mean}: {total}");
        }
    }
}
