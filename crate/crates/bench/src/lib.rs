//! Criterion benchmarks for the solvers and study pipelines; see `benches/`.
