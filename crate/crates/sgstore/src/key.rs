//! Store identifiers and the contract user key types must honor.
//!
//! A data object is addressed by a [`StoreKey`]: its type's [`ClassId`] plus
//! the canonical byte encoding of a user key. Plain strings encode as
//! themselves; any ordered type with a lossless encoding can serve as a key
//! by implementing [`KeyContract`]. The ordering the store exposes (range
//! traversal, `keys_of`) is ascending canonical encoding, not the key type's
//! own `Ord`.

use std::fmt;

use thiserror::Error;

use crate::clid::ClassId;

/// Key validation failure.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("key encoding must not be empty")]
    Empty,
    #[error("key does not survive its own encoding round trip: {0}")]
    RoundTrip(String),
    #[error("key decoding failed: {0}")]
    Decode(String),
}

/// Requirements on a user key type: total ordering, a canonical byte
/// encoding, and a decoding that inverts it.
///
/// The `Ord` supertrait is the compile-time half of the contract; the
/// encoding laws are checked at first use by [`validate_key`]. `encode_key`
/// must be injective on keys that compare unequal and must never produce an
/// empty byte string.
pub trait KeyContract: Ord + Sized {
    fn encode_key(&self) -> Vec<u8>;
    fn decode_key(bytes: &[u8]) -> Result<Self, KeyError>;
}

impl KeyContract for String {
    fn encode_key(&self) -> Vec<u8> {
        self.as_bytes().to_vec()
    }
    fn decode_key(bytes: &[u8]) -> Result<Self, KeyError> {
        String::from_utf8(bytes.to_vec()).map_err(|e| KeyError::Decode(e.to_string()))
    }
}

/// Integer keys encode as their decimal digits, so the key `42` is stored
/// under the bytes `"42"`.
impl KeyContract for u64 {
    fn encode_key(&self) -> Vec<u8> {
        self.to_string().into_bytes()
    }
    fn decode_key(bytes: &[u8]) -> Result<Self, KeyError> {
        let text = std::str::from_utf8(bytes).map_err(|e| KeyError::Decode(e.to_string()))?;
        text.parse()
            .map_err(|_| KeyError::Decode(format!("`{text}` is not a decimal integer")))
    }
}

/// Checks the key contract at run time and returns the canonical encoding.
///
/// Verifies that the encoding is non-empty and that `decode(encode(k))`
/// compares equal to `k`; a lossy adapter is rejected with
/// [`KeyError::RoundTrip`].
pub fn validate_key<K: KeyContract>(key: &K) -> Result<Vec<u8>, KeyError> {
    let encoded = key.encode_key();
    if encoded.is_empty() {
        return Err(KeyError::Empty);
    }
    let decoded = K::decode_key(&encoded).map_err(|e| KeyError::RoundTrip(e.to_string()))?;
    if decoded != *key {
        return Err(KeyError::RoundTrip(
            "decoded key compares unequal to the original".into(),
        ));
    }
    Ok(encoded)
}

/// Validates a plain string key. Strings encode as their UTF-8 bytes.
pub fn validate_str_key(key: &str) -> Result<Vec<u8>, KeyError> {
    if key.is_empty() {
        return Err(KeyError::Empty);
    }
    Ok(key.as_bytes().to_vec())
}

/// Identifier of one proxy in a store: the object's type plus the canonical
/// encoding of its key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StoreKey {
    class_id: ClassId,
    key: Vec<u8>,
}

impl StoreKey {
    pub fn new(class_id: ClassId, key: Vec<u8>) -> Self {
        StoreKey { class_id, key }
    }

    pub fn class_id(&self) -> ClassId {
        self.class_id
    }

    /// The canonical key encoding.
    pub fn key_bytes(&self) -> &[u8] {
        &self.key
    }

    /// The key as text: verbatim for UTF-8 encodings, lossy otherwise.
    pub fn key_string(&self) -> String {
        String::from_utf8_lossy(&self.key).into_owned()
    }
}

impl fmt::Display for StoreKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/\"{}\"", self.class_id, self.key_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn string_keys_encode_as_themselves() {
        let key = "MyTrackCollection".to_string();
        assert_eq!(validate_key(&key).unwrap(), b"MyTrackCollection".to_vec());
    }

    #[test]
    fn integer_keys_encode_as_decimal() {
        assert_eq!(validate_key(&42u64).unwrap(), b"42".to_vec());
    }

    #[test]
    fn empty_keys_are_rejected() {
        assert_eq!(validate_str_key(""), Err(KeyError::Empty));
        assert_eq!(validate_key(&String::new()), Err(KeyError::Empty));
    }

    /// An adapter whose decode loses information: every key decodes to 0.
    #[derive(PartialEq, Eq, PartialOrd, Ord)]
    struct LossyKey(u64);

    impl KeyContract for LossyKey {
        fn encode_key(&self) -> Vec<u8> {
            self.0.to_string().into_bytes()
        }
        fn decode_key(_bytes: &[u8]) -> Result<Self, KeyError> {
            Ok(LossyKey(0))
        }
    }

    #[test]
    fn lossy_adapter_fails_validation() {
        assert!(matches!(
            validate_key(&LossyKey(7)),
            Err(KeyError::RoundTrip(_))
        ));
        // The one key the adapter does preserve passes.
        assert!(validate_key(&LossyKey(0)).is_ok());
    }

    #[test]
    fn store_key_orders_by_class_then_encoding() {
        let c1 = ClassId::new(300).unwrap();
        let c2 = ClassId::new(400).unwrap();
        let a = StoreKey::new(c1, b"b".to_vec());
        let b = StoreKey::new(c1, b"a".to_vec());
        let c = StoreKey::new(c2, b"a".to_vec());
        assert!(b < a);
        assert!(a < c);
    }
}
