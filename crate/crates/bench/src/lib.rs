//! Criterion benchmarks for the hot loops of `sprlab-core`; see `benches/`.
