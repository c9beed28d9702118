//! Criterion benches for the hot paths; see `benches/`.
