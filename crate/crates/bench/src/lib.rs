//! Criterion benches for the hot kernels; see `benches/kernels.rs`.
