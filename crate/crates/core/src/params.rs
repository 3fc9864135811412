//! Scenario parameters shared by the analytical model, the optimizer,
//! and the simulator. All internal computation is in SI units (bits,
//! seconds); convenience kbit/Mbps inputs are converted exactly at parse
//! time.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Which rate drives the batch-service queue.
///
/// The mining-time expectation uses the aggregate rate `M*lambda`; whether
/// the queue's service transitions should use the same aggregate or the
/// per-miner rate is scenario-dependent, so both are exposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ServiceRateMode {
    #[default]
    Aggregate,
    PerMiner,
}

impl std::str::FromStr for ServiceRateMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "aggregate" => Ok(ServiceRateMode::Aggregate),
            "per-miner" => Ok(ServiceRateMode::PerMiner),
            other => Err(format!(
                "unknown service rate mode '{other}' (expected 'aggregate' or 'per-miner')"
            )),
        }
    }
}

/// All model/simulation inputs, validated and in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// Transaction arrival rate, transactions/second (Poisson process).
    pub mu: f64,
    /// Per-miner mining rate, Hz (exponential mining time).
    pub lambda: f64,
    /// Number of miners, M >= 1.
    pub miners: u32,
    /// K, maximum pool occupancy in transactions.
    pub queue_size: usize,
    /// b, transactions per block, 1 <= b <= K.
    pub block_size_tx: usize,
    /// tau, seconds. May be effectively infinite.
    pub timer: f64,
    /// h, bits.
    pub header_bits: f64,
    /// t, bits per transaction.
    pub tx_bits: f64,
    /// C, end-to-end P2P capacity in bits/second.
    pub capacity_bps: f64,
    /// |T_f|, non-conflicting transactions surviving a fork.
    pub fork_valid_tx: usize,
    pub service_rate_mode: ServiceRateMode,
}

impl Default for ScenarioParams {
    /// Table-style defaults: 20 kbit header, 5 kbit transactions, 5 Mbps
    /// capacity, pool of 10, blocks of 5.
    fn default() -> Self {
        ScenarioParams {
            mu: 0.1,
            lambda: 0.25,
            miners: 1,
            queue_size: 10,
            block_size_tx: 5,
            timer: 100.0,
            header_bits: 20_000.0,
            tx_bits: 5_000.0,
            capacity_bps: 5e6,
            fork_valid_tx: 0,
            service_rate_mode: ServiceRateMode::Aggregate,
        }
    }
}

impl ScenarioParams {
    /// Checks every invariant and returns the parameters unchanged, or an
    /// error naming every violated bound.
    pub fn validate(self) -> Result<Self> {
        let mut violations = Vec::new();
        if !(self.mu > 0.0) {
            violations.push(format!("mu must be > 0 (got {})", self.mu));
        }
        if !(self.lambda > 0.0) {
            violations.push(format!("lambda must be > 0 (got {})", self.lambda));
        }
        if self.miners < 1 {
            violations.push(format!("miners must be >= 1 (got {})", self.miners));
        }
        if !(self.capacity_bps > 0.0) {
            violations.push(format!(
                "capacity_bps must be > 0 (got {})",
                self.capacity_bps
            ));
        }
        if !(self.timer > 0.0) {
            violations.push(format!("timer must be > 0 (got {})", self.timer));
        }
        if !(self.header_bits >= 0.0) {
            violations.push(format!(
                "header_bits must be >= 0 (got {})",
                self.header_bits
            ));
        }
        if !(self.tx_bits >= 0.0) {
            violations.push(format!("tx_bits must be >= 0 (got {})", self.tx_bits));
        }
        if self.block_size_tx < 1 {
            violations.push(format!(
                "block_size_tx must be >= 1 (got {})",
                self.block_size_tx
            ));
        }
        if self.block_size_tx > self.queue_size {
            violations.push(format!(
                "block_size_tx must be <= queue_size (got {} > {})",
                self.block_size_tx, self.queue_size
            ));
        }
        if self.fork_valid_tx > self.block_size_tx {
            violations.push(format!(
                "fork_valid_tx must be <= block_size_tx (got {} > {})",
                self.fork_valid_tx, self.block_size_tx
            ));
        }
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(ModelError::InvalidParameter { violations })
        }
    }

    /// Queue service rate lambda_s, selected by `service_rate_mode`.
    pub fn service_rate(&self) -> f64 {
        match self.service_rate_mode {
            ServiceRateMode::Aggregate => self.miners as f64 * self.lambda,
            ServiceRateMode::PerMiner => self.lambda,
        }
    }

    /// Physical size in bits of a block carrying `b` transactions.
    pub fn block_bits_of(&self, b: f64) -> f64 {
        block_bits(b, self.header_bits, self.tx_bits)
    }

    /// Loads a scenario from a flat JSON object. Field names match the
    /// struct; `header_kbits`, `tx_kbits`, and `capacity_mbps` are accepted
    /// as convenience keys and converted exactly.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawScenario =
            serde_json::from_str(text).map_err(|e| ModelError::ScenarioFile(e.to_string()))?;
        raw.into_params()
    }
}

/// Block size in bits: header plus per-transaction payload.
pub fn block_bits(b: f64, header_bits: f64, tx_bits: f64) -> f64 {
    header_bits + b * tx_bits
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    mu: Option<f64>,
    lambda: Option<f64>,
    miners: Option<u32>,
    queue_size: Option<usize>,
    block_size_tx: Option<usize>,
    timer: Option<f64>,
    header_bits: Option<f64>,
    header_kbits: Option<f64>,
    tx_bits: Option<f64>,
    tx_kbits: Option<f64>,
    capacity_bps: Option<f64>,
    capacity_mbps: Option<f64>,
    fork_valid_tx: Option<usize>,
    service_rate_mode: Option<ServiceRateMode>,
}

impl RawScenario {
    fn into_params(self) -> Result<ScenarioParams> {
        let d = ScenarioParams::default();
        let pick = |si: Option<f64>, scaled: Option<f64>, factor: f64, name: &str| match (si, scaled)
        {
            (Some(_), Some(_)) => Err(ModelError::ScenarioFile(format!(
                "both SI and convenience keys given for {name}"
            ))),
            (Some(v), None) => Ok(Some(v)),
            (None, Some(v)) => Ok(Some(v * factor)),
            (None, None) => Ok(None),
        };
        let header = pick(self.header_bits, self.header_kbits, 1_000.0, "header size")?;
        let tx = pick(self.tx_bits, self.tx_kbits, 1_000.0, "transaction size")?;
        let cap = pick(self.capacity_bps, self.capacity_mbps, 1e6, "capacity")?;
        ScenarioParams {
            mu: self.mu.unwrap_or(d.mu),
            lambda: self.lambda.unwrap_or(d.lambda),
            miners: self.miners.unwrap_or(d.miners),
            queue_size: self.queue_size.unwrap_or(d.queue_size),
            block_size_tx: self.block_size_tx.unwrap_or(d.block_size_tx),
            timer: self.timer.unwrap_or(d.timer),
            header_bits: header.unwrap_or(d.header_bits),
            tx_bits: tx.unwrap_or(d.tx_bits),
            capacity_bps: cap.unwrap_or(d.capacity_bps),
            fork_valid_tx: self.fork_valid_tx.unwrap_or(d.fork_valid_tx),
            service_rate_mode: self.service_rate_mode.unwrap_or(d.service_rate_mode),
        }
        .validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values_accepted_and_converted() {
        let p = ScenarioParams::from_json(
            r#"{"mu": 0.1, "lambda": 0.25, "header_kbits": 20, "tx_kbits": 5,
                "capacity_mbps": 5, "queue_size": 10, "block_size_tx": 5}"#,
        )
        .unwrap();
        assert_eq!(p.header_bits, 20_000.0);
        assert_eq!(p.tx_bits, 5_000.0);
        assert_eq!(p.capacity_bps, 5e6);
        assert_eq!(p.queue_size, 10);
    }

    #[test]
    fn zero_block_size_rejected() {
        let err = ScenarioParams {
            block_size_tx: 0,
            ..Default::default()
        }
        .validate()
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("block_size_tx"), "{msg}");
    }

    #[test]
    fn block_larger_than_queue_rejected() {
        let err = ScenarioParams {
            block_size_tx: 11,
            queue_size: 10,
            ..Default::default()
        }
        .validate()
        .unwrap_err();
        assert!(err.to_string().contains("queue_size"));
    }

    #[test]
    fn all_violations_listed() {
        let err = ScenarioParams {
            mu: 0.0,
            lambda: -1.0,
            block_size_tx: 0,
            ..Default::default()
        }
        .validate()
        .unwrap_err();
        match err {
            ModelError::InvalidParameter { violations } => assert_eq!(violations.len(), 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn block_bits_direct() {
        assert_eq!(block_bits(5.0, 20_000.0, 5_000.0), 45_000.0);
        assert_eq!(block_bits(0.0, 20_000.0, 5_000.0), 20_000.0);
        assert_eq!(block_bits(10.0, 20_000.0, 5_000.0), 70_000.0);
    }

    #[test]
    fn conflicting_unit_keys_rejected() {
        let err = ScenarioParams::from_json(r#"{"header_bits": 20000, "header_kbits": 20}"#)
            .unwrap_err();
        assert!(err.to_string().contains("header"));
    }
}
