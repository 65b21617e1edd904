//! Criterion benchmarks for the leafsift kernels; see `benches/`.
