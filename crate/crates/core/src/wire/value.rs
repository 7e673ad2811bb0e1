//! Payload values and their canonical text form.
//!
//! The canonical form is a JSON subset: object keys are emitted in
//! lexicographic byte order, numbers in shortest round-trip decimal form and
//! no insignificant whitespace. Non-finite numbers have no JSON spelling and
//! are written as `null`, which decodes back to NaN.

use std::collections::BTreeMap;
use std::fmt::Write as _;

/// A single named value inside a message payload.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Text(String),
    Bool(bool),
    Array(Vec<f64>),
}

/// Structured map of named values carried by every message.
pub type Payload = BTreeMap<String, Value>;

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Number(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_owned())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl From<Vec<f64>> for Value {
    fn from(v: Vec<f64>) -> Self {
        Value::Array(v)
    }
}

impl From<&[f64]> for Value {
    fn from(v: &[f64]) -> Self {
        Value::Array(v.to_vec())
    }
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&[f64]> {
        match self {
            Value::Array(a) => Some(a),
            _ => None,
        }
    }
}

/// Builds a payload from `(key, value)` pairs.
pub fn payload<I, K, V>(entries: I) -> Payload
where
    I: IntoIterator<Item = (K, V)>,
    K: Into<String>,
    V: Into<Value>,
{
    entries
        .into_iter()
        .map(|(k, v)| (k.into(), v.into()))
        .collect()
}

pub(crate) fn write_number(out: &mut String, v: f64) {
    if v.is_finite() {
        // serde_json formats finite floats with ryu: shortest round-trip.
        out.push_str(&serde_json::Number::from_f64(v).expect("finite").to_string());
    } else {
        out.push_str("null");
    }
}

pub(crate) fn write_string(out: &mut String, s: &str) {
    out.push_str(&serde_json::Value::String(s.to_owned()).to_string());
}

pub(crate) fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Number(n) => write_number(out, *n),
        Value::Text(s) => write_string(out, s),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Array(items) => {
            out.push('[');
            for (i, n) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_number(out, *n);
            }
            out.push(']');
        }
    }
}

/// Writes a payload as a canonical object. `BTreeMap` iteration order is the
/// lexicographic key order required by the canonical form.
pub(crate) fn write_payload(out: &mut String, p: &Payload) {
    out.push('{');
    for (i, (k, v)) in p.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_string(out, k);
        out.push(':');
        write_value(out, v);
    }
    out.push('}');
}

/// Canonical text of a bare payload (used for scene files, reports and logs).
pub fn to_canonical_text(p: &Payload) -> String {
    let mut s = String::new();
    write_payload(&mut s, p);
    s
}

/// Parses canonical (or any JSON) object text into a payload.
pub fn from_text(text: &str) -> Result<Payload, String> {
    let parsed: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    match parsed {
        serde_json::Value::Object(map) => payload_from_json(map),
        _ => Err("payload is not an object".into()),
    }
}

pub(crate) fn payload_from_json(
    map: serde_json::Map<String, serde_json::Value>,
) -> Result<Payload, String> {
    let mut out = Payload::new();
    for (k, v) in map {
        let value = match v {
            serde_json::Value::Null => Value::Number(f64::NAN),
            serde_json::Value::Bool(b) => Value::Bool(b),
            serde_json::Value::Number(n) => Value::Number(number_to_f64(&n)?),
            serde_json::Value::String(s) => Value::Text(s),
            serde_json::Value::Array(items) => {
                let mut nums = Vec::with_capacity(items.len());
                for item in items {
                    nums.push(match item {
                        serde_json::Value::Null => f64::NAN,
                        serde_json::Value::Number(n) => number_to_f64(&n)?,
                        other => return Err(format!("array element for {k:?} is not a number: {other}")),
                    });
                }
                Value::Array(nums)
            }
            serde_json::Value::Object(_) => return Err(format!("nested object under {k:?}")),
        };
        out.insert(k, value);
    }
    Ok(out)
}

fn number_to_f64(n: &serde_json::Number) -> Result<f64, String> {
    n.as_f64().ok_or_else(|| format!("number {n} not representable"))
}

/// Formats an f64 in the canonical decimal form.
pub fn format_number(v: f64) -> String {
    let mut s = String::new();
    write_number(&mut s, v);
    s
}

/// Human-oriented multi-line rendering, one key per line.
pub fn pretty(p: &Payload) -> String {
    let mut s = String::new();
    let width = p.keys().map(|k| k.len()).max().unwrap_or(0);
    for (k, v) in p {
        let mut rendered = String::new();
        write_value(&mut rendered, v);
        let _ = writeln!(s, "{k:width$}  {rendered}");
    }
    s
}
