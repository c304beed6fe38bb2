//! Library surface of the experiment runner, exposed for integration tests.

pub mod commands;
pub mod config;
pub mod error;
