//! Experiment harness for the kinetic limit solvers: configuration,
//! experiment drivers and report output.

pub mod config;
pub mod experiments;
pub mod report;
