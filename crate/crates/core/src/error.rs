use thiserror::Error;

use crate::eeml::EemlError;

/// Every failure a hub operation can report. Each variant maps to a stable
/// machine code used in HTTP error bodies.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HubError {
    #[error("invalid identifier: {0}")]
    InvalidId(String),
    #[error("invalid location: {0}")]
    InvalidLocation(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("feed {0} already exists")]
    DuplicateFeed(String),
    #[error("stream {0} already exists")]
    DuplicateStream(String),
    #[error("unknown feed {0}")]
    UnknownFeed(String),
    #[error("unknown stream {0}")]
    UnknownStream(String),
    #[error("unknown provider key {0}")]
    UnknownProvider(String),
    #[error("unknown key {0}")]
    UnknownKey(String),
    #[error("unknown subscription {0}")]
    UnknownSubscription(String),
    #[error("missing or unknown API key")]
    Unauthorized,
    #[error("access denied: {0}")]
    Forbidden(String),
    #[error("invalid scope: {0}")]
    InvalidScope(String),
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("invalid datapoint: {0}")]
    InvalidDatapoint(String),
    #[error("malformed document: {0}")]
    MalformedDocument(#[from] EemlError),
    #[error("feed {0} has no datapoints to snapshot")]
    EmptyFeed(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("corrupt log: {0}")]
    CorruptLog(String),
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("no route for {0}")]
    UnknownRoute(String),
    #[error("method not allowed")]
    MethodNotAllowed,
}

impl HubError {
    /// Stable machine code carried in error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            HubError::InvalidId(_) => "invalid-id",
            HubError::InvalidLocation(_) => "invalid-location",
            HubError::InvalidField(_) => "invalid-field",
            HubError::DuplicateFeed(_) => "duplicate-feed",
            HubError::DuplicateStream(_) => "duplicate-stream",
            HubError::UnknownFeed(_) => "unknown-feed",
            HubError::UnknownStream(_) => "unknown-stream",
            HubError::UnknownProvider(_) => "unknown-provider",
            HubError::UnknownKey(_) => "unknown-key",
            HubError::UnknownSubscription(_) => "unknown-subscription",
            HubError::Unauthorized => "unauthorized",
            HubError::Forbidden(_) => "forbidden",
            HubError::InvalidScope(_) => "invalid-scope",
            HubError::InvalidFilter(_) => "invalid-filter",
            HubError::InvalidRange(_) => "invalid-range",
            HubError::InvalidWindow(_) => "invalid-window",
            HubError::InvalidDatapoint(_) => "invalid-datapoint",
            HubError::MalformedDocument(_) => "malformed-document",
            HubError::EmptyFeed(_) => "empty-feed",
            HubError::BadRequest(_) => "bad-request",
            HubError::CorruptLog(_) => "corrupt-log",
            HubError::Storage(_) => "storage-failure",
            HubError::UnknownRoute(_) => "unknown-route",
            HubError::MethodNotAllowed => "method-not-allowed",
        }
    }

    /// The closed set of codes [`HubError::code`] can produce.
    pub const CODES: &'static [&'static str] = &[
        "invalid-id",
        "invalid-location",
        "invalid-field",
        "duplicate-feed",
        "duplicate-stream",
        "unknown-feed",
        "unknown-stream",
        "unknown-provider",
        "unknown-key",
        "unknown-subscription",
        "unauthorized",
        "forbidden",
        "invalid-scope",
        "invalid-filter",
        "invalid-range",
        "invalid-window",
        "invalid-datapoint",
        "malformed-document",
        "empty-feed",
        "bad-request",
        "corrupt-log",
        "storage-failure",
        "unknown-route",
        "method-not-allowed",
    ];
}

impl From<std::io::Error> for HubError {
    fn from(e: std::io::Error) -> Self {
        HubError::Storage(e.to_string())
    }
}
