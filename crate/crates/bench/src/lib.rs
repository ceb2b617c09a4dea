//! Criterion benchmarks for the skewlab kernels; see `benches/kernels.rs`.
