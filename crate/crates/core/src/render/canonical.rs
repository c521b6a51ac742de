//! Canonical JSON text: `schema_version` first, other keys sorted, fixed decimals.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::notegen::scheme::{NoteScheme, SCHEMA_VERSION};

/// Keys whose numbers are times and print with 3 decimals; other reals get 6.
const TIME_KEYS: [&str; 6] = ["t_s", "t_e", "t", "timestamp", "duration", "boundary_time"];

fn number(n: &serde_json::Number, key: Option<&str>) -> String {
    if n.is_u64() || n.is_i64() {
        return n.to_string();
    }
    let x = n.as_f64().unwrap_or(0.0);
    let places = if key.is_some_and(|k| TIME_KEYS.contains(&k)) { 3 } else { 6 };
    let s = format!("{x:.places$}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn string(s: &str, out: &mut String) {
    out.push_str(&serde_json::to_string(s).expect("strings serialize"));
}

fn write(v: &Value, key: Option<&str>, depth: usize, out: &mut String) {
    let pad = |d: usize, out: &mut String| out.extend(std::iter::repeat_n("  ", d));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => out.push_str(&number(n, key)),
        Value::String(s) => string(s, out),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(depth + 1, out);
                write(item, key, depth + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(depth, out);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_by_key(|k| (k.as_str() != "schema_version", k.as_str()));
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(depth + 1, out);
                string(k, out);
                out.push_str(": ");
                write(&map[k.as_str()], Some(k), depth + 1, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(depth, out);
            out.push('}');
        }
    }
}

/// Canonical text of an arbitrary JSON value, newline-terminated.
pub fn canonical_text(v: &Value) -> String {
    let mut out = String::new();
    write(v, None, 0, &mut out);
    out.push('\n');
    out
}

pub fn to_canonical<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::InvalidArgument(format!("not serializable: {e}")))?;
    Ok(canonical_text(&v))
}

pub fn serialize_scheme(s: &NoteScheme) -> String {
    to_canonical(s).expect("schemes serialize")
}

/// Typed decode that reports the failing field as a dotted path.
pub fn decode_value<T: DeserializeOwned>(v: Value) -> Result<T> {
    serde_path_to_error::deserialize::<_, T>(v).map_err(|e| {
        let mut path = e.path().to_string();
        if path == "." {
            path.clear();
        }
        let message = e.inner().to_string();
        if let Some(field) = message.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
            path = if path.is_empty() { field.to_string() } else { format!("{path}.{field}") };
        }
        Error::validation(path, message)
    })
}

/// Parse and validate a scheme document.
pub fn parse_scheme(text: &str) -> Result<NoteScheme> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::validation("", format!("not JSON: {e}")))?;
    let Value::Object(map) = &v else {
        return Err(Error::validation("", "document is not an object"));
    };
    match map.get("schema_version") {
        None => return Err(Error::validation("schema_version", "missing field `schema_version`")),
        Some(Value::String(s)) if s == SCHEMA_VERSION => {}
        Some(other) => return Err(Error::SchemaVersionUnsupported(other.to_string())),
    }
    let scheme: NoteScheme = decode_value(v)?;
    scheme.validate()?;
    Ok(scheme)
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;

    #[test]
    fn formatting_rules() {
        let v = json!({"t_s": 1.23456, "similarity": 0.5, "count": 3, "b": [1.0], "schema_version": "1", "x": -0.0000001});
        assert_eq!(
            canonical_text(&v),
            "{\n  \"schema_version\": \"1\",\n  \"b\": [\n    1.000000\n  ],\n  \"count\": 3,\n  \"similarity\": 0.500000,\n  \"t_s\": 1.235,\n  \"x\": 0.000000\n}\n"
        );
    }

    #[test]
    fn missing_chapters_names_the_field() {
        let err = parse_scheme(r#"{"schema_version": "1", "video": {"title": "a", "duration": 1.0, "source_uri": "x"}}"#).unwrap_err();
        match err {
            Error::ValidationFailed { path, .. } => assert_eq!(path, "chapters"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn version_is_checked_first() {
        assert_eq!(parse_scheme(r#"{"schema_version": "2"}"#).unwrap_err().code(), "SCHEMA_VERSION_UNSUPPORTED");
        assert_eq!(parse_scheme(r#"{"chapters": []}"#).unwrap_err().code(), "VALIDATION_FAILED");
        assert_eq!(parse_scheme("[").unwrap_err().code(), "VALIDATION_FAILED");
    }
}
