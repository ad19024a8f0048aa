use std::path::PathBuf;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use feedwarden_core::agents::AgentError;
use feedwarden_core::profile::ProfileError;
use feedwarden_core::telemetry::LogError;

use crate::config::ConfigError;
use crate::store::StoreError;

/// Process exit codes of the `feedwarden` binary.
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_STORAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Telemetry(#[from] LogError),
    #[error("fixture {path}: {message}")]
    Fixture { path: PathBuf, message: String },
    #[error("backend setup: {0}")]
    Backend(String),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
}

impl StartupError {
    pub fn exit_code(&self) -> i32 {
        match self {
            StartupError::Config(_) | StartupError::Fixture { .. } | StartupError::Backend(_) => EXIT_CONFIG,
            StartupError::Store(_) | StartupError::Telemetry(_) | StartupError::Bind { .. } => EXIT_STORAGE,
        }
    }
}

/// Fixed error envelope for every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<AgentError> for ApiError {
    fn from(e: AgentError) -> Self {
        use AgentError::*;
        let (status, code) = match &e {
            EmptyUtterance | InvalidProposal(_) | InvalidRule(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
            UnknownProposal(_) | UnknownRule(_) | UnknownDossier(_) | UnknownAppeal(_) => {
                (StatusCode::NOT_FOUND, "not_found")
            }
            StaleProposal(_) => (StatusCode::CONFLICT, "stale_proposal"),
            DuplicateRule(_) | AlreadyAppealed(_) | AlreadyResolved(_) => (StatusCode::CONFLICT, "conflict"),
            NotABlock(_) => (StatusCode::UNPROCESSABLE_ENTITY, "not_a_block"),
            BackendFailure(_) => (StatusCode::BAD_GATEWAY, "backend_failure"),
            MalformedProposal(_) => (StatusCode::BAD_GATEWAY, "malformed_proposal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<ProfileError> for ApiError {
    fn from(e: ProfileError) -> Self {
        ApiError::bad_request(e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_error", e.to_string())
    }
}

impl From<LogError> for ApiError {
    fn from(e: LogError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_error", e.to_string())
    }
}
