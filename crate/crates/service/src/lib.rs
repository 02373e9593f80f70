//! HTTP service and batch CLI around `speaklabel-core`.

pub mod api;
pub mod cli;
pub mod config;

pub use api::{router, AppState};
pub use config::{Resources, ServiceConfig};
