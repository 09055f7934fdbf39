use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use penflow_core::Error;

use crate::report::ErrorBody;

/// An error as the HTTP client sees it: status, stable code, message.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "BadRequest", message)
    }

    pub fn unknown_dataset(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "UnknownDataset", format!("no dataset {id}"))
    }

    pub fn unknown_session(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "UnknownSession", format!("no session {id}"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

/// HTTP status for an engine error code.
pub fn status_for(code: &str) -> StatusCode {
    match code {
        "UnknownAuthor" | "UnknownCluster" => StatusCode::NOT_FOUND,
        "InvalidUtf8" | "MissingColumn" | "MalformedRow" | "UnknownCategory" | "NegativeDuration"
        | "RoleTurnMismatch" => StatusCode::BAD_REQUEST,
        "CorruptFile" | "SchemaVersionMismatch" => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = e.code();
        ApiError { status: status_for(code), code, message: e.to_string() }
    }
}

macro_rules! from_module_error {
    ($($t:ty),*) => {$(
        impl From<$t> for ApiError {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}

from_module_error!(
    penflow_core::ingest::IngestError,
    penflow_core::consensus::ConsensusError,
    penflow_core::session::SessionError,
    penflow_core::summarize::SummarizeError,
    penflow_core::patterns::PatternError
);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { code: self.code.to_string(), message: self.message };
        (self.status, Json(body)).into_response()
    }
}
