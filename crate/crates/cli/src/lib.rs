//! Library surface of the experiment driver, split out so integration
//! tests can exercise the commands without spawning the binary.

pub mod config;
pub mod harness;
