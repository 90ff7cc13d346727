//! Operational shell around the `geoblocks` engine: the HTTP query service,
//! workload replay and amortization benchmarks, and the `geoblocks` CLI.

pub mod bench;
pub mod cli;
pub mod server;
pub mod workload;
