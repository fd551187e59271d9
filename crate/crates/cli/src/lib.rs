//! Library half of the CLI: configuration, file formats, task drivers and
//! the benchmark harness, kept importable for the integration suites.

pub mod bench;
pub mod config;
pub mod formats;
pub mod run;
