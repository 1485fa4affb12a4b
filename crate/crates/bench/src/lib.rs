//! Benchmark-only crate; see `benches/hierarchy.rs`.
