//! Criterion benchmarks for the quadrature, special-function and sampling kernels live in `benches/`.
