//! Command-line front end: configs, experiments, reports and the acceptance suite.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod experiments;
pub mod report;
