//! Dataset, file-format, CLI and HTTP layer over `wordspot-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod io;
pub mod pipeline;
pub mod report;
pub mod server;

pub use wordspot_core as core;
