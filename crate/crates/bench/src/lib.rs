//! Criterion benchmarks for the simulators live in `benches/`.
