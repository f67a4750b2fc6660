//! Criterion benchmarks for the training and analysis kernels; see
//! `benches/kernels.rs`.
