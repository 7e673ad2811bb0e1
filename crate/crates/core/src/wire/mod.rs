//! Framed request/response protocol shared by environments, robot servers
//! and the server manager.

mod client;
mod frame;
mod server;
mod value;

use std::time::Duration;

pub use client::{call, resolve, Client};
pub use frame::{
    decode_body, decode_frame, encode_body, encode_frame, read_frame, write_frame, Kind, Message,
    MAX_BODY,
};
pub use server::{serve, Handler, ServerHandle, ServiceError};
pub use value::{format_number, from_text, payload, pretty, to_canonical_text, Payload, Value};

/// Deadline for every service except `send_action`.
pub const DEFAULT_DEADLINE: Duration = Duration::from_secs(1);

/// `send_action` blocks for the action execution time, so its deadline is
/// the action cycle plus the default.
pub fn send_action_deadline(action_cycle: Duration) -> Duration {
    action_cycle + DEFAULT_DEADLINE
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WireError {
    #[error("frame body of {0} bytes exceeds the 16 MiB limit")]
    PayloadTooLarge(usize),
    #[error("truncated frame: declared {declared:?} body bytes, {available} available")]
    TruncatedFrame {
        declared: Option<usize>,
        available: usize,
    },
    #[error("malformed frame body: {0}")]
    MalformedBody(String),
    #[error("unknown message kind {0:?}")]
    UnknownKind(String),
    #[error("deadline of {0:?} exceeded")]
    DeadlineExceeded(Duration),
    #[error("connection error: {0}")]
    Connection(String),
    #[error("remote error {code}: {message}")]
    Remote { code: String, message: String },
}

impl WireError {
    pub(crate) fn remote_from(p: &Payload) -> WireError {
        WireError::Remote {
            code: p
                .get("code")
                .and_then(Value::as_str)
                .unwrap_or("Unknown")
                .to_owned(),
            message: p
                .get("message")
                .and_then(Value::as_str)
                .unwrap_or("")
                .to_owned(),
        }
    }

    /// The remote error code, if this is a remote error.
    pub fn remote_code(&self) -> Option<&str> {
        match self {
            WireError::Remote { code, .. } => Some(code),
            _ => None,
        }
    }
}

/// Typed accessors for request payloads, mapping absence or a wrong type to a
/// `BadRequest` service error.
pub trait PayloadExt {
    fn req_f64(&self, key: &str) -> Result<f64, ServiceError>;
    fn req_str(&self, key: &str) -> Result<&str, ServiceError>;
    fn req_array(&self, key: &str) -> Result<&[f64], ServiceError>;
    fn opt_str(&self, key: &str) -> Option<&str>;
}

impl PayloadExt for Payload {
    fn req_f64(&self, key: &str) -> Result<f64, ServiceError> {
        self.get(key)
            .and_then(Value::as_f64)
            .ok_or_else(|| ServiceError::new("BadRequest", format!("missing number {key:?}")))
    }

    fn req_str(&self, key: &str) -> Result<&str, ServiceError> {
        self.get(key)
            .and_then(Value::as_str)
            .ok_or_else(|| ServiceError::new("BadRequest", format!("missing string {key:?}")))
    }

    fn req_array(&self, key: &str) -> Result<&[f64], ServiceError> {
        self.get(key)
            .and_then(Value::as_array)
            .ok_or_else(|| ServiceError::new("BadRequest", format!("missing array {key:?}")))
    }

    fn opt_str(&self, key: &str) -> Option<&str> {
        self.get(key).and_then(Value::as_str)
    }
}
