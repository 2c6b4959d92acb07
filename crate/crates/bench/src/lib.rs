//! Criterion benchmarks for `bcg-core`; see `benches/pipeline.rs`.
//!
//! ```text
//! cargo bench -p bcg-bench
//! ```
