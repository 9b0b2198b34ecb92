//! Criterion benchmarks for `decoq-core`; see `benches/`.
