//! Configuration parsing and experiment drivers behind the `codedc` binary.

pub mod config;
pub mod experiments;
