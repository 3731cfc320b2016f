//! Command-line front end for cooperative game abstractions.

pub mod commands;
pub mod experiments;
pub mod report;
