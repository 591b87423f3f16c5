use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("missing or wrong bearer token")]
    Unauthorized,

    #[error("corrupt session log: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Core(#[from] steerbench_core::Error),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::Invalid { .. } => StatusCode::BAD_REQUEST,
            ServiceError::Core(steerbench_core::Error::Validation { .. } | steerbench_core::Error::Parse { .. }) => {
                StatusCode::BAD_REQUEST
            }
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
            ServiceError::Corrupt(_) | ServiceError::Core(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn field(&self) -> Option<&str> {
        match self {
            ServiceError::Invalid { field, .. } => Some(field),
            ServiceError::Core(steerbench_core::Error::Validation { field, .. }) => Some(field),
            ServiceError::Core(steerbench_core::Error::Parse { field, .. }) => field.as_deref(),
            _ => None,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let body = match self.field() {
            Some(f) => json!({"error": self.to_string(), "field": f}),
            None => json!({"error": self.to_string()}),
        };
        (status, Json(body)).into_response()
    }
}
