use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use cuegraph_core::engine::EngineError;
use cuegraph_core::metrics::MetricsError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Error body shared by every endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub details: Value,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                details: Value::Null,
            },
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.body.details = details;
        self
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "validation", message)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, &format!("unknown-{what}"), format!("no {what} `{id}`"))
    }

    pub fn provider_unavailable() -> Self {
        Self::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "provider-unavailable",
            "no text-generation provider is configured",
        )
    }
}

/// HTTP status for an engine error name.
pub fn engine_status(name: &str) -> StatusCode {
    match name {
        "unknown-prompt" | "unknown-cue" | "unknown-thread" | "unknown-revision" => StatusCode::NOT_FOUND,
        "illegal-action" | "locked-cue" | "thread-closed" | "thread-busy" | "pending-generation"
        | "already-answered" | "no-explorable-cues" | "not-explorable" => StatusCode::CONFLICT,
        "backend-unreachable" | "rate-limited" | "replay-miss" | "queue-exhausted" | "backend-error"
        | "response-too-long" | "configuration" => StatusCode::SERVICE_UNAVAILABLE,
        "schema-version-unknown" | "integrity-violation" => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let details = match &e {
            EngineError::IllegalAction { action, state } => json!({ "action": action, "state": state }),
            EngineError::PendingGeneration(prompts) => json!({ "prompts": prompts }),
            EngineError::ThreadBusy { thread, prompt } => json!({ "thread": thread, "prompt": prompt }),
            _ => Value::Null,
        };
        ApiError::new(engine_status(e.name()), e.name(), e.to_string()).with_details(details)
    }
}

impl From<MetricsError> for ApiError {
    fn from(e: MetricsError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.name(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::validation(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
