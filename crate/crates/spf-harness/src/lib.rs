//! Benchmark and verification harness for the sketched pooling library.

pub mod bench;
pub mod cli;
pub mod experiments;
pub mod feature_file;
pub mod gen;
pub mod report;
pub mod trials;

/// Result of a command that may check a tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    ToleranceViolation,
}
