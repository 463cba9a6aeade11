//! Criterion benchmarks for robcal kernels live under `benches/`.
