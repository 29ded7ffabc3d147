//! Criterion benchmarks for the kdoa kernels; see `benches/`.
