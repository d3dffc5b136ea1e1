//! Criterion benchmarks for the fsmap library live in `benches/`.
