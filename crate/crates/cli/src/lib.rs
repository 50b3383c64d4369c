//! Library surface of the experiment harness: config parsing/validation and
//! bit-stable report emission. The `tarc-lab` binary is a thin shell over
//! these plus the core crate.

pub mod config;
pub mod report;
