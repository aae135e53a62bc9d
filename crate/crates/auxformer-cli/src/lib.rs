//! Library surface of the auxformer CLI, shared with its test suites.

pub mod commands;
pub mod config;
