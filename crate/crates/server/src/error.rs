use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use fdconfig_core::model::ParseError;
use fdconfig_core::session::Rejected;
use fdconfig_core::translate::TranslateError;
use serde::Serialize;
use serde_json::{json, Value};

/// Error body: a stable machine-readable `code`, a message, and optional
/// structured details.
#[derive(Debug, Clone, Serialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into(), details: None }
    }

    fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn invalid_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    pub fn unknown_model(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_model", format!("no model `{id}`"))
    }

    pub fn unknown_session(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`"))
    }

    pub fn unknown_decision(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_decision", format!("no decision `{id}`"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

impl From<ParseError> for ApiError {
    fn from(e: ParseError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "parse_error", e.to_string()).with_details(json!({
            "line": e.line,
            "column": e.column,
            "kind": format!("{:?}", e.kind),
        }))
    }
}

impl From<TranslateError> for ApiError {
    fn from(e: TranslateError) -> Self {
        let status = StatusCode::UNPROCESSABLE_ENTITY;
        match &e {
            TranslateError::Invalid(ds) => ApiError::new(status, "invalid_model", e.to_string())
                .with_details(json!({ "diagnostics": ds.iter().map(|d| d.to_string()).collect::<Vec<_>>() })),
            TranslateError::Overflow(i) => {
                ApiError::new(status, "overflow", e.to_string()).with_details(json!({ "constraint": i }))
            }
            TranslateError::Solver(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        }
    }
}

impl From<Rejected> for ApiError {
    fn from(r: Rejected) -> Self {
        let status = match r {
            Rejected::UnknownVariable(_) => StatusCode::NOT_FOUND,
            Rejected::VariablePending(_) | Rejected::EmptyIntersection(_) => StatusCode::CONFLICT,
        };
        let variable = match &r {
            Rejected::UnknownVariable(v) | Rejected::VariablePending(v) | Rejected::EmptyIntersection(v) => v.clone(),
        };
        ApiError::new(status, r.code(), r.to_string()).with_details(json!({ "variable": variable }))
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::invalid_request(r.body_text())
    }
}
