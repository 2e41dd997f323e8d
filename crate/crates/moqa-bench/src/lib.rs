//! Criterion benchmarks for query-time scoring. See `benches/`.
