//! Criterion benchmarks for the density-evolution, threshold and decoding
//! kernels; see `benches/kernels.rs`.
