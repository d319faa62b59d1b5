//! Benchmark-only package; see the `benches/` directory.
