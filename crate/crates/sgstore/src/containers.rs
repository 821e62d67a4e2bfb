//! Small storable container types used throughout the tests, the book, and
//! the pipeline: a numeric sequence (positional indexing) and a string map
//! (keyed indexing).
//!
//! Floating-point values encode as shortest round-trip decimal strings, so
//! encodings are exact and byte-stable.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;

use crate::links::{KeyedMap, KeyedPolicy, LinkableContainer, PositionalPolicy, Sequence};
use crate::storable::{CodecError, Persistable, Storable};

/// A sequence of numbers; element links into it are positional.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NumberSequence(pub Vec<f64>);

impl Storable for NumberSequence {
    fn type_name() -> &'static str {
        "NumberSequence"
    }

    fn encode(&self) -> Vec<u8> {
        self.0
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(" ")
            .into_bytes()
    }
}

impl Persistable for NumberSequence {
    fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| CodecError::new(format!("sequence payload is not UTF-8: {e}")))?;
        let values = text
            .split_whitespace()
            .map(|tok| {
                tok.parse()
                    .map_err(|_| CodecError::new(format!("`{tok}` is not a number")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        Ok(NumberSequence(values))
    }
}

impl Sequence for NumberSequence {
    type Item = f64;
    fn items(&self) -> &[f64] {
        &self.0
    }
}

impl LinkableContainer for NumberSequence {
    type Element = f64;
    type Policy = PositionalPolicy;
}

impl FromIterator<f64> for NumberSequence {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        NumberSequence(iter.into_iter().collect())
    }
}

/// A string-keyed map of numbers; element links into it carry the map key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StringMap(pub BTreeMap<String, f64>);

impl StringMap {
    pub fn insert(&mut self, key: impl Into<String>, value: f64) {
        self.0.insert(key.into(), value);
    }
}

impl Storable for StringMap {
    fn type_name() -> &'static str {
        "StringMap"
    }

    /// One `base64(key) value` line per entry, in key order. Base64 keeps
    /// arbitrary key text (spaces, newlines) on a single token; the empty
    /// key is written as `-`, which no base64 encoding can produce.
    fn encode(&self) -> Vec<u8> {
        self.0
            .iter()
            .map(|(k, v)| format!("{} {}", encode_map_key(k), v))
            .collect::<Vec<_>>()
            .join("\n")
            .into_bytes()
    }
}

impl Persistable for StringMap {
    fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| CodecError::new(format!("map payload is not UTF-8: {e}")))?;
        let mut map = BTreeMap::new();
        for line in text.lines() {
            if line.is_empty() {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let (key_tok, value_tok) = match (tokens.next(), tokens.next(), tokens.next()) {
                (Some(k), Some(v), None) => (k, v),
                _ => return Err(CodecError::new(format!("malformed map line `{line}`"))),
            };
            let key = decode_map_key(key_tok)
                .ok_or_else(|| CodecError::new(format!("bad map key in `{line}`")))?;
            let value = value_tok
                .parse()
                .map_err(|_| CodecError::new(format!("bad map value in `{line}`")))?;
            map.insert(key, value);
        }
        Ok(StringMap(map))
    }
}

fn encode_map_key(key: &str) -> String {
    if key.is_empty() {
        "-".to_string()
    } else {
        BASE64.encode(key.as_bytes())
    }
}

fn decode_map_key(token: &str) -> Option<String> {
    if token == "-" {
        return Some(String::new());
    }
    let raw = BASE64.decode(token).ok()?;
    String::from_utf8(raw).ok()
}

impl KeyedMap for StringMap {
    type MapKey = String;
    type Value = f64;

    fn lookup(&self, key: &String) -> Option<&f64> {
        self.0.get(key)
    }

    fn entries(&self) -> impl Iterator<Item = (&String, &f64)> {
        self.0.iter()
    }
}

impl LinkableContainer for StringMap {
    type Element = f64;
    type Policy = KeyedPolicy;
}

impl FromIterator<(String, f64)> for StringMap {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        StringMap(iter.into_iter().collect())
    }
}
