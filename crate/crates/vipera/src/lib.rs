//! Files, manifests and the command line around `vipera-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod report;
pub mod source;
pub mod store;

pub use error::{Result, StoreError};
