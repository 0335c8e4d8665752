//! Criterion benchmarks for the qLMPC solver live in `benches/`.
