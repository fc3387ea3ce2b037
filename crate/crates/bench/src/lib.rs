//! Shared instance builders for the benchmark suite.
