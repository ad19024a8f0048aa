//! HTTP gateway for the filtering engine: configuration, durable per-user
//! state, and the JSON API used by the console and test harnesses.

pub mod api;
pub mod backends;
pub mod config;
pub mod error;
pub mod state;
pub mod store;

pub use api::router;
pub use config::{load_config, parse_config, ServiceConfig};
pub use error::{ApiError, ErrorBody, StartupError};
pub use state::Service;
