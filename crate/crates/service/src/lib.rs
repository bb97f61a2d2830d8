//! Read-only HTTP API over a prepared collection.
//!
//! Everything is loaded once by [`AppState::load`]; handlers only read it, so
//! identical requests produce byte-identical JSON.

mod config;
mod error;
mod json;
mod routes;
mod state;

pub use config::{ConfigError, ServiceConfig, ViewConfig};
pub use error::ApiError;
pub use json::{canonical_json, round_sig, FLOAT_DIGITS};
pub use routes::{router, serve};
pub use state::{AppState, LoadError, ViewData};
