use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use zkmlops_core::artifact_store::StoreError;
use zkmlops_core::orchestrator::OrchestratorError;
use zkmlops_core::selection::SelectionError;
use zkmlops_core::workflow::WorkflowError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub http_status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(http_status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            http_status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.http_status, Json(&self)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let (status, code) = match &e {
            StoreError::EmptyContent => (StatusCode::BAD_REQUEST, "empty_content"),
            StoreError::UnknownArtifact(_) => (StatusCode::NOT_FOUND, "unknown_artifact"),
            StoreError::IntegrityError { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "integrity_error"),
            StoreError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage_io"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<OrchestratorError> for ApiError {
    fn from(e: OrchestratorError) -> Self {
        use OrchestratorError as E;
        let message = e.to_string();
        let (status, code) = match e {
            E::Store(inner) => return inner.into(),
            E::UnknownWorkflow(_) => (StatusCode::NOT_FOUND, "unknown_workflow"),
            E::UnknownAudit(_) => (StatusCode::NOT_FOUND, "unknown_audit"),
            E::UnknownArtifact(_) => (StatusCode::NOT_FOUND, "unknown_artifact"),
            E::UnknownStep(_) => (StatusCode::NOT_FOUND, "unknown_step"),
            E::InvalidKind(_) => (StatusCode::BAD_REQUEST, "invalid_kind"),
            E::TerminalAudit { .. } => (StatusCode::CONFLICT, "terminal_audit"),
            E::OutOfOrder { .. } => (StatusCode::CONFLICT, "out_of_order"),
            E::MissingPrecondition(_) => (StatusCode::CONFLICT, "missing_precondition"),
            E::Busy(_) => (StatusCode::CONFLICT, "busy"),
            E::NotCompliant { .. } => (StatusCode::CONFLICT, "not_compliant"),
            E::ExecutionFailure(_) => (StatusCode::INTERNAL_SERVER_ERROR, "execution_failure"),
            E::PostconditionViolation(_) => (StatusCode::INTERNAL_SERVER_ERROR, "postcondition_violation"),
            E::CorruptLog(_) => (StatusCode::INTERNAL_SERVER_ERROR, "corrupt_log"),
            E::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage_io"),
        };
        ApiError::new(status, code, message)
    }
}

impl From<WorkflowError> for ApiError {
    fn from(e: WorkflowError) -> Self {
        let (status, code) = match &e {
            WorkflowError::SchemaError(_) => (StatusCode::BAD_REQUEST, "schema_error"),
            WorkflowError::DuplicateWorkflow(_) => (StatusCode::CONFLICT, "duplicate_workflow"),
            WorkflowError::UnknownWorkflow(_) => (StatusCode::NOT_FOUND, "unknown_workflow"),
            WorkflowError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage_io"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<SelectionError> for ApiError {
    fn from(e: SelectionError) -> Self {
        let (status, code) = match &e {
            SelectionError::NoKnownMethod { .. } => (StatusCode::NOT_FOUND, "no_known_method"),
            SelectionError::ProtocolNotCandidate(_) => (StatusCode::BAD_REQUEST, "protocol_not_candidate"),
            SelectionError::UnknownRecord(_) => (StatusCode::NOT_FOUND, "unknown_record"),
            SelectionError::InvalidKnowledgeBase(_) => (StatusCode::INTERNAL_SERVER_ERROR, "invalid_knowledge_base"),
            SelectionError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage_io"),
        };
        ApiError::new(status, code, e.to_string())
    }
}
