//! The contract a type must satisfy to live in an event store.
//!
//! A storable type exports a canonical single-token name and a deterministic
//! byte encoding. The store wraps each recorded value in a [`Bucket`], a
//! type-erased holder that keeps the encoding operation attached so the
//! store can compare and persist payloads it no longer knows the type of.

use std::any::Any;
use std::fmt;

use thiserror::Error;

use crate::clid::ClassId;

/// Error produced by a failed [`Persistable::decode`].
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct CodecError(pub String);

impl CodecError {
    pub fn new(message: impl Into<String>) -> Self {
        CodecError(message.into())
    }
}

/// A value the store can own.
///
/// `type_name` is the canonical spelling registered in the class-id
/// database: one token, no whitespace, stable across runs and platforms.
/// `encode` must be total and deterministic; two values are treated as equal
/// by the store exactly when their encodings are byte-identical.
pub trait Storable: Send + 'static {
    fn type_name() -> &'static str
    where
        Self: Sized;

    fn encode(&self) -> Vec<u8>;
}

/// A storable type that can also be reconstructed from its encoding.
///
/// Required for persistence: `decode(encode(x))` must re-encode to the same
/// bytes as `x`.
pub trait Persistable: Storable + Sized {
    fn decode(bytes: &[u8]) -> Result<Self, CodecError>;
}

/// Object-safe view of a storable value.
pub(crate) trait ErasedStorable: Any + Send {
    fn encode_payload(&self) -> Vec<u8>;
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

impl<T: Storable> ErasedStorable for T {
    fn encode_payload(&self) -> Vec<u8> {
        self.encode()
    }
    fn as_any(&self) -> &dyn Any {
        self
    }
    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Type-erased holder of one stored data object.
///
/// The class id is fixed at construction and always matches the registry id
/// of the payload's concrete type; the encoding operation rides along so a
/// bucket can be serialized and compared without downcasting.
pub struct Bucket {
    class_id: ClassId,
    payload: Box<dyn ErasedStorable>,
}

impl Bucket {
    pub fn new<T: Storable>(class_id: ClassId, value: T) -> Self {
        Bucket {
            class_id,
            payload: Box::new(value),
        }
    }

    pub fn class_id(&self) -> ClassId {
        self.class_id
    }

    /// Canonical byte encoding of the payload.
    pub fn encode(&self) -> Vec<u8> {
        self.payload.encode_payload()
    }

    /// Equality on canonical encodings.
    pub fn eq_encoding(&self, other: &Bucket) -> bool {
        self.class_id == other.class_id && self.encode() == other.encode()
    }

    pub fn downcast_ref<T: Storable>(&self) -> Option<&T> {
        self.payload.as_any().downcast_ref::<T>()
    }

    pub fn downcast_mut<T: Storable>(&mut self) -> Option<&mut T> {
        self.payload.as_any_mut().downcast_mut::<T>()
    }
}

impl fmt::Debug for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bucket")
            .field("class_id", &self.class_id)
            .field("payload_len", &self.encode().len())
            .finish()
    }
}
