//! Configuration resolution and result persistence for the `zdlab` binary.

pub mod config;
pub mod output;
