//! REST service and command-line tool around the core engine.

pub mod api;
pub mod cli;
pub mod clients;
pub mod config;
pub mod engine;
pub mod images;
