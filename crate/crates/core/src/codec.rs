//! Base-64 encoding of real buffers for the JSON model and result files.
//!
//! A buffer is stored as the little-endian IEEE-754 `f64` bytes of its
//! elements, base-64 encoded with the standard alphabet and padding.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Deserializer, Serializer};

use crate::scalar::Real;

pub fn encode<T: Real>(values: &[T]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode<T: Real>(text: &str) -> Result<Vec<T>, String> {
    let bytes = STANDARD.decode(text).map_err(|e| e.to_string())?;
    if bytes.len() % 8 != 0 {
        return Err(format!("base-64 payload of {} bytes is not a whole number of f64", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect())
}

/// `#[serde(with = "crate::codec::b64")]` adapter for `Vec<T>` fields.
pub mod b64 {
    use super::*;

    pub fn serialize<S: Serializer, T: Real>(values: &[T], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&encode(values))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, T: Real>(d: D) -> Result<Vec<T>, D::Error> {
        let text = String::deserialize(d)?;
        decode(&text).map_err(serde::de::Error::custom)
    }
}
