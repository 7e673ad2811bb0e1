//! Length-prefixed message frames.
//!
//! ```text
//! [u32 big-endian body length][UTF-8 body]
//! body = {"id":<u64>,"kind":"request"|"response"|"error","payload":{..},"service":"<name>"}
//! ```

use std::io::{self, Read, Write};

use super::value::{payload_from_json, write_payload, write_string, Payload};
use super::WireError;

/// Largest body accepted in either direction.
pub const MAX_BODY: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Request,
    Response,
    Error,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Request => "request",
            Kind::Response => "response",
            Kind::Error => "error",
        }
    }

    pub fn parse(s: &str) -> Option<Kind> {
        match s {
            "request" => Some(Kind::Request),
            "response" => Some(Kind::Response),
            "error" => Some(Kind::Error),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub id: u64,
    pub kind: Kind,
    pub service: String,
    pub payload: Payload,
}

impl Message {
    pub fn request(id: u64, service: impl Into<String>, payload: Payload) -> Self {
        Message {
            id,
            kind: Kind::Request,
            service: service.into(),
            payload,
        }
    }

    /// Response echoing the id and service of `req`.
    pub fn response_to(req: &Message, payload: Payload) -> Self {
        Message {
            id: req.id,
            kind: Kind::Response,
            service: req.service.clone(),
            payload,
        }
    }

    /// Error reply with a machine-readable `code` and free-text `message`.
    pub fn error_to(req: &Message, code: &str, message: &str) -> Self {
        Message {
            id: req.id,
            kind: Kind::Error,
            service: req.service.clone(),
            payload: super::value::payload([("code", code), ("message", message)]),
        }
    }
}

/// Canonical body text of a message (no length prefix).
pub fn encode_body(msg: &Message) -> String {
    let mut out = String::with_capacity(64);
    out.push_str("{\"id\":");
    out.push_str(&msg.id.to_string());
    out.push_str(",\"kind\":");
    write_string(&mut out, msg.kind.as_str());
    out.push_str(",\"payload\":");
    write_payload(&mut out, &msg.payload);
    out.push_str(",\"service\":");
    write_string(&mut out, &msg.service);
    out.push('}');
    out
}

pub fn encode_frame(msg: &Message) -> Result<Vec<u8>, WireError> {
    let body = encode_body(msg);
    if body.len() > MAX_BODY {
        return Err(WireError::PayloadTooLarge(body.len()));
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body.as_bytes());
    Ok(out)
}

/// Decodes one frame from the front of `bytes`, returning the message and the
/// number of bytes consumed (`4 + length`).
pub fn decode_frame(bytes: &[u8]) -> Result<(Message, usize), WireError> {
    if bytes.len() < 4 {
        return Err(WireError::TruncatedFrame {
            declared: None,
            available: bytes.len(),
        });
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if len > MAX_BODY {
        return Err(WireError::PayloadTooLarge(len));
    }
    let available = bytes.len() - 4;
    if available < len {
        return Err(WireError::TruncatedFrame {
            declared: Some(len),
            available,
        });
    }
    let msg = decode_body(&bytes[4..4 + len])?;
    Ok((msg, 4 + len))
}

pub fn decode_body(body: &[u8]) -> Result<Message, WireError> {
    let text = std::str::from_utf8(body).map_err(|e| WireError::MalformedBody(e.to_string()))?;
    let parsed: serde_json::Value =
        serde_json::from_str(text).map_err(|e| WireError::MalformedBody(e.to_string()))?;
    let serde_json::Value::Object(mut obj) = parsed else {
        return Err(WireError::MalformedBody("body is not an object".into()));
    };
    if obj.len() != 4 {
        return Err(WireError::MalformedBody(format!(
            "expected keys id, kind, payload, service; found {:?}",
            obj.keys().collect::<Vec<_>>()
        )));
    }
    let id = obj
        .remove("id")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| WireError::MalformedBody("missing or invalid \"id\"".into()))?;
    let kind = match obj.remove("kind") {
        Some(serde_json::Value::String(s)) => Kind::parse(&s).ok_or(WireError::UnknownKind(s))?,
        _ => return Err(WireError::MalformedBody("missing or invalid \"kind\"".into())),
    };
    let service = match obj.remove("service") {
        Some(serde_json::Value::String(s)) => s,
        _ => return Err(WireError::MalformedBody("missing or invalid \"service\"".into())),
    };
    let payload = match obj.remove("payload") {
        Some(serde_json::Value::Object(map)) => {
            payload_from_json(map).map_err(WireError::MalformedBody)?
        }
        _ => return Err(WireError::MalformedBody("missing or invalid \"payload\"".into())),
    };
    Ok(Message {
        id,
        kind,
        service,
        payload,
    })
}

/// Reads one frame from a stream. `Ok(None)` on a clean end-of-stream before
/// the first prefix byte.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Message>, WireError> {
    let mut prefix = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut prefix[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => {
                return Err(WireError::TruncatedFrame {
                    declared: None,
                    available: got,
                })
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(WireError::Connection(e.to_string())),
        }
    }
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_BODY {
        return Err(WireError::PayloadTooLarge(len));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            WireError::TruncatedFrame {
                declared: Some(len),
                available: 0,
            }
        } else {
            WireError::Connection(e.to_string())
        }
    })?;
    decode_body(&body).map(Some)
}

pub fn write_frame<W: Write>(w: &mut W, msg: &Message) -> Result<(), WireError> {
    let bytes = encode_frame(msg)?;
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| WireError::Connection(e.to_string()))
}
