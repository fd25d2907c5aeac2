//! Criterion benchmarks for roomid-core live under `benches/`.
