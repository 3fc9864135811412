//! Benchmark-only crate; see `benches/model.rs`.
