//! Byte-stable JSON encoding and content digests.
//!
//! Persisted files use [`to_canonical_json`]: struct fields keep their
//! declaration order, map keys are sorted (every map in this crate is a
//! `BTreeMap`), and every floating-point number is written with exactly six
//! decimal digits. Request fingerprints use [`to_sorted_json`], which sorts
//! every object's keys recursively so the digest does not depend on field
//! declaration order.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;

/// Digits after the decimal point for every persisted float.
pub const FLOAT_DECIMALS: usize = 6;

/// Hex-encoded SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pretty, byte-stable JSON with a trailing newline.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let value = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &value, Some(0), false);
    out.push('\n');
    Ok(out)
}

/// Compact JSON with recursively sorted keys and fixed float formatting.
pub fn to_sorted_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let value = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &value, None, true);
    Ok(out)
}

/// SHA-256 over the sorted-key serialization of `value`.
pub fn fingerprint<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    Ok(sha256_hex(to_sorted_json(value)?.as_bytes()))
}

fn write_value(out: &mut String, value: &Value, indent: Option<usize>, sort: bool) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let f = n.as_f64().unwrap_or(0.0);
                // -0.000000 and 0.000000 must not differ
                let f = if f == 0.0 { 0.0 } else { f };
                let _ = write!(out, "{:.*}", FLOAT_DECIMALS, f);
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => write_string(out, s),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, indent.map(|d| d + 1));
                write_value(out, item, indent.map(|d| d + 1), sort);
            }
            newline(out, indent);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            if sort {
                entries.sort_by(|a, b| a.0.cmp(b.0));
            }
            out.push('{');
            for (i, (key, item)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, indent.map(|d| d + 1));
                write_string(out, key);
                out.push(':');
                if indent.is_some() {
                    out.push(' ');
                }
                write_value(out, item, indent.map(|d| d + 1), sort);
            }
            newline(out, indent);
            out.push('}');
        }
    }
}

fn newline(out: &mut String, indent: Option<usize>) {
    if let Some(depth) = indent {
        out.push('\n');
        for _ in 0..depth {
            out.push_str("  ");
        }
    }
}

fn write_string(out: &mut String, s: &str) {
    // serde_json's string escaping is already canonical
    out.push_str(&serde_json::to_string(s).unwrap_or_default());
}
