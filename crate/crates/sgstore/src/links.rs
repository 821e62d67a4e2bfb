//! Persistable references to data objects and to elements inside them.
//!
//! An [`ObjectLink`] points at a whole data object by store key. An
//! [`ElementLink`] points into a stored container: it carries the
//! container's key plus a canonical index encoding computed by the
//! container's [`IndexingPolicy`]. Both resolve through the store's proxy
//! machinery, so a link into an unloaded container fires the same
//! cache-fault path as a retrieve.
//!
//! Indexing is a pluggable strategy. Sequence-like containers default to
//! [`PositionalPolicy`] (zero-based decimal positions), map-like containers
//! to [`KeyedPolicy`] (the element's map key, canonically encoded), and new
//! container kinds supply their own policy by implementing
//! [`LinkableContainer`] — the graph container in [`crate::graph`] shows the
//! extension point.

use std::any::Any;
use std::collections::BTreeMap;
use std::fmt;
use std::marker::PhantomData;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use thiserror::Error;

use crate::clid::ClassId;
use crate::key::{validate_str_key, KeyContract, StoreKey};
use crate::storable::Storable;
use crate::store::{EventStore, StoreError};

/// Link construction, resolution, and parsing errors.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinkError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("element is not in the target container")]
    ElementNotInContainer,
    #[error("index `{index}` is not valid for container {container}")]
    IndexOutOfRange { container: StoreKey, index: String },
    #[error("malformed link record: {0}")]
    Parse(String),
    #[error("no indexing policy registered for container kind {kind}; provide a matching indexing policy (implement LinkableContainer and register it)")]
    NoPolicyForKind { kind: String },
    #[error("value passed to policy `{policy}` is not a `{expected}`")]
    PolicyTypeMismatch {
        policy: &'static str,
        expected: &'static str,
    },
}

/// Strategy for mapping a container element to a persistable index encoding
/// and back.
///
/// Laws: `element_at(c, index_of(c, e))` compares equal to `e` for every
/// element of `c`, and the index encoding round-trips through persistence
/// byte-exactly.
pub trait IndexingPolicy<C> {
    type Element: PartialEq + 'static;

    fn policy_name() -> &'static str;

    /// Index encoding of `element` within `container`, or `None` when the
    /// element is not there.
    fn index_of(container: &C, element: &Self::Element) -> Option<Vec<u8>>;

    /// The element at a previously computed index, or `None` when the index
    /// is no longer valid.
    fn element_at<'c>(container: &'c C, index: &[u8]) -> Option<&'c Self::Element>;
}

/// A container that element links can point into, with its default policy.
///
/// This is the compile-time policy generator: naming the container type is
/// enough for the right link type to exist.
pub trait LinkableContainer: Storable + Sized {
    type Element: PartialEq + 'static;
    type Policy: IndexingPolicy<Self, Element = Self::Element>;
}

// ---- built-in policies ---------------------------------------------------

/// Sequence-like view: anything exposing its elements as a slice.
pub trait Sequence {
    type Item: PartialEq + 'static;
    fn items(&self) -> &[Self::Item];
}

impl<T: PartialEq + 'static> Sequence for Vec<T> {
    type Item = T;
    fn items(&self) -> &[T] {
        self
    }
}

/// Zero-based decimal positions. The default for sequence kinds.
pub struct PositionalPolicy;

impl<C: Sequence> IndexingPolicy<C> for PositionalPolicy {
    type Element = C::Item;

    fn policy_name() -> &'static str {
        "positional"
    }

    fn index_of(container: &C, element: &C::Item) -> Option<Vec<u8>> {
        container
            .items()
            .iter()
            .position(|item| item == element)
            .map(|pos| pos.to_string().into_bytes())
    }

    fn element_at<'c>(container: &'c C, index: &[u8]) -> Option<&'c C::Item> {
        let pos: usize = std::str::from_utf8(index).ok()?.parse().ok()?;
        container.items().get(pos)
    }
}

/// Map-like view keyed by a [`KeyContract`] type.
pub trait KeyedMap {
    type MapKey: KeyContract;
    type Value: PartialEq + 'static;

    fn lookup(&self, key: &Self::MapKey) -> Option<&Self::Value>;
    fn entries(&self) -> impl Iterator<Item = (&Self::MapKey, &Self::Value)>;
}

impl<K: KeyContract, V: PartialEq + 'static> KeyedMap for BTreeMap<K, V> {
    type MapKey = K;
    type Value = V;

    fn lookup(&self, key: &K) -> Option<&V> {
        self.get(key)
    }

    fn entries(&self) -> impl Iterator<Item = (&K, &V)> {
        self.iter()
    }
}

/// The element's map key, canonically encoded. The default for associative
/// kinds.
pub struct KeyedPolicy;

impl<C: KeyedMap> IndexingPolicy<C> for KeyedPolicy {
    type Element = C::Value;

    fn policy_name() -> &'static str {
        "keyed"
    }

    fn index_of(container: &C, element: &C::Value) -> Option<Vec<u8>> {
        container
            .entries()
            .find(|(_, value)| *value == element)
            .map(|(key, _)| key.encode_key())
    }

    fn element_at<'c>(container: &'c C, index: &[u8]) -> Option<&'c C::Value> {
        let key = C::MapKey::decode_key(index).ok()?;
        container.lookup(&key)
    }
}

/// Stable node ids, decimal-encoded. The policy of the toy graph container.
pub struct NodeIdPolicy;

// ---- element links ---------------------------------------------------------

/// Persistable reference to one element of a stored container.
pub struct ElementLink<C: LinkableContainer> {
    container: StoreKey,
    index: Vec<u8>,
    _marker: PhantomData<fn() -> C>,
}

impl<C: LinkableContainer> Clone for ElementLink<C> {
    fn clone(&self) -> Self {
        ElementLink {
            container: self.container.clone(),
            index: self.index.clone(),
            _marker: PhantomData,
        }
    }
}

impl<C: LinkableContainer> PartialEq for ElementLink<C> {
    fn eq(&self, other: &Self) -> bool {
        self.container == other.container && self.index == other.index
    }
}

impl<C: LinkableContainer> Eq for ElementLink<C> {}

impl<C: LinkableContainer> fmt::Debug for ElementLink<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ElementLink")
            .field("container", &self.container)
            .field("index", &String::from_utf8_lossy(&self.index))
            .finish()
    }
}

/// Builds an element link to `element` inside the container of type `C`
/// recorded under `container_key`.
pub fn make_element_link<C: LinkableContainer>(
    store: &EventStore,
    container_key: &str,
    element: &C::Element,
) -> Result<ElementLink<C>, LinkError> {
    let class_id = store
        .registry()
        .id_of::<C>()
        .ok_or_else(|| StoreError::UnregisteredType(C::type_name().to_owned()))?;
    let key = StoreKey::new(
        class_id,
        validate_str_key(container_key).map_err(StoreError::from)?,
    );
    ElementLink::for_container(store, &key, element)
}

impl<C: LinkableContainer> ElementLink<C> {
    /// Builds a link by locating `element` in the container at `container`.
    pub fn for_container(
        store: &EventStore,
        container: &StoreKey,
        element: &C::Element,
    ) -> Result<Self, LinkError> {
        let view: &C = store.retrieve_at(container)?;
        let index = C::Policy::index_of(view, element).ok_or(LinkError::ElementNotInContainer)?;
        Ok(ElementLink {
            container: container.clone(),
            index,
            _marker: PhantomData,
        })
    }

    /// Rebuilds a link from its stored parts. Performs no store access.
    pub fn from_parts(container: StoreKey, index: Vec<u8>) -> Self {
        ElementLink {
            container,
            index,
            _marker: PhantomData,
        }
    }

    pub fn container_key(&self) -> &StoreKey {
        &self.container
    }

    pub fn index(&self) -> &[u8] {
        &self.index
    }

    /// Resolves the link, faulting the container in if necessary.
    pub fn resolve<'s>(&self, store: &'s EventStore) -> Result<&'s C::Element, LinkError> {
        let view: &C = store.retrieve_at(&self.container)?;
        C::Policy::element_at(view, &self.index).ok_or_else(|| LinkError::IndexOutOfRange {
            container: self.container.clone(),
            index: String::from_utf8_lossy(&self.index).into_owned(),
        })
    }

    /// The persistent record: `LINK <class-id> <base64(key)> <base64(index)>`.
    /// Byte-identical across serializations of the same link.
    pub fn to_persistent(&self) -> String {
        encode_link_record(
            self.container.class_id(),
            self.container.key_bytes(),
            &self.index,
        )
    }

    /// Parses a persistent record. Does not resolve; resolution stays lazy.
    pub fn from_persistent(record: &str) -> Result<Self, LinkError> {
        let (class_id, key, index) = parse_link_record(record)?;
        Ok(Self::from_parts(StoreKey::new(class_id, key), index))
    }
}

// ---- object links -----------------------------------------------------------

/// Persistable reference to a whole data object.
pub struct ObjectLink<T: Storable> {
    target: StoreKey,
    _marker: PhantomData<fn() -> T>,
}

impl<T: Storable> Clone for ObjectLink<T> {
    fn clone(&self) -> Self {
        ObjectLink {
            target: self.target.clone(),
            _marker: PhantomData,
        }
    }
}

impl<T: Storable> PartialEq for ObjectLink<T> {
    fn eq(&self, other: &Self) -> bool {
        self.target == other.target
    }
}

impl<T: Storable> Eq for ObjectLink<T> {}

impl<T: Storable> fmt::Debug for ObjectLink<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObjectLink")
            .field("target", &self.target)
            .finish()
    }
}

impl<T: Storable> ObjectLink<T> {
    /// Link to the instance of `T` recorded under `key`. Touches only the
    /// type registry, never the store contents.
    pub fn new(store: &EventStore, key: &str) -> Result<Self, LinkError> {
        let class_id = store
            .registry()
            .id_of::<T>()
            .ok_or_else(|| StoreError::UnregisteredType(T::type_name().to_owned()))?;
        Ok(ObjectLink {
            target: StoreKey::new(class_id, validate_str_key(key).map_err(StoreError::from)?),
            _marker: PhantomData,
        })
    }

    pub fn to_key(target: StoreKey) -> Self {
        ObjectLink {
            target,
            _marker: PhantomData,
        }
    }

    pub fn target(&self) -> &StoreKey {
        &self.target
    }

    /// Resolves through the store's proxy machinery, so an unloaded target
    /// triggers the same cache-fault path as a retrieve.
    pub fn resolve<'s>(&self, store: &'s EventStore) -> Result<&'s T, LinkError> {
        Ok(store.retrieve_at(&self.target)?)
    }

    /// Persistent record; an object link is a link record with an empty
    /// index field.
    pub fn to_persistent(&self) -> String {
        encode_link_record(self.target.class_id(), self.target.key_bytes(), &[])
    }

    pub fn from_persistent(record: &str) -> Result<Self, LinkError> {
        let (class_id, key, index) = parse_link_record(record)?;
        if !index.is_empty() {
            return Err(LinkError::Parse(
                "object link record must not carry an index".into(),
            ));
        }
        Ok(Self::to_key(StoreKey::new(class_id, key)))
    }
}

// ---- persistent record grammar ---------------------------------------------

/// `LINK <decimal class-id> <base64(container-key)> <base64(index)>`, with
/// the index field omitted when the index encoding is empty.
pub(crate) fn encode_link_record(class_id: ClassId, key: &[u8], index: &[u8]) -> String {
    if index.is_empty() {
        format!("LINK {} {}", class_id, BASE64.encode(key))
    } else {
        format!(
            "LINK {} {} {}",
            class_id,
            BASE64.encode(key),
            BASE64.encode(index)
        )
    }
}

pub(crate) fn parse_link_record(record: &str) -> Result<(ClassId, Vec<u8>, Vec<u8>), LinkError> {
    let mut tokens = record.split_whitespace();
    let bad = |msg: &str| LinkError::Parse(format!("{msg} in `{record}`"));
    match tokens.next() {
        Some("LINK") => {}
        _ => return Err(bad("expected LINK tag")),
    }
    let class_id: u32 = tokens
        .next()
        .ok_or_else(|| bad("missing class id"))?
        .parse()
        .map_err(|_| bad("class id is not decimal"))?;
    let class_id = ClassId::new(class_id).map_err(|e| LinkError::Parse(e.to_string()))?;
    let key = BASE64
        .decode(tokens.next().ok_or_else(|| bad("missing container key"))?)
        .map_err(|e| bad(&format!("container key is not base64 ({e})")))?;
    if key.is_empty() {
        return Err(bad("container key must not be empty"));
    }
    let index = match tokens.next() {
        Some(tok) => BASE64
            .decode(tok)
            .map_err(|e| bad(&format!("index is not base64 ({e})")))?,
        None => Vec::new(),
    };
    if tokens.next().is_some() {
        return Err(bad("trailing tokens"));
    }
    Ok((class_id, key, index))
}

// ---- runtime policy registry -------------------------------------------------

/// Type-erased indexing policy, usable without naming the container type.
pub trait ErasedIndexingPolicy: Send + Sync {
    fn policy_name(&self) -> &'static str;
    fn index_of(&self, container: &dyn Any, element: &dyn Any) -> Result<Vec<u8>, LinkError>;
    fn element_at<'c>(
        &self,
        container: &'c dyn Any,
        index: &[u8],
    ) -> Result<&'c dyn Any, LinkError>;
}

struct TypedPolicy<C: LinkableContainer>(PhantomData<fn() -> C>);

impl<C: LinkableContainer + 'static> ErasedIndexingPolicy for TypedPolicy<C> {
    fn policy_name(&self) -> &'static str {
        C::Policy::policy_name()
    }

    fn index_of(&self, container: &dyn Any, element: &dyn Any) -> Result<Vec<u8>, LinkError> {
        let container = container
            .downcast_ref::<C>()
            .ok_or(LinkError::PolicyTypeMismatch {
                policy: C::Policy::policy_name(),
                expected: C::type_name(),
            })?;
        let element =
            element
                .downcast_ref::<C::Element>()
                .ok_or(LinkError::PolicyTypeMismatch {
                    policy: C::Policy::policy_name(),
                    expected: "container element",
                })?;
        C::Policy::index_of(container, element).ok_or(LinkError::ElementNotInContainer)
    }

    fn element_at<'c>(
        &self,
        container: &'c dyn Any,
        index: &[u8],
    ) -> Result<&'c dyn Any, LinkError> {
        let typed = container
            .downcast_ref::<C>()
            .ok_or(LinkError::PolicyTypeMismatch {
                policy: C::Policy::policy_name(),
                expected: C::type_name(),
            })?;
        match C::Policy::element_at(typed, index) {
            Some(element) => Ok(element as &dyn Any),
            None => Err(LinkError::Parse(format!(
                "index `{}` is not valid",
                String::from_utf8_lossy(index)
            ))),
        }
    }
}

/// Runtime registry of container kinds to their indexing policies.
///
/// The typed link API picks policies at compile time; this registry serves
/// code that only has a class id in hand, and is the run-time face of the
/// extension point: a container kind without a registered policy is
/// rejected with [`LinkError::NoPolicyForKind`].
#[derive(Default)]
pub struct PolicyRegistry {
    policies: BTreeMap<ClassId, Arc<dyn ErasedIndexingPolicy>>,
}

impl PolicyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers the default policy of container kind `C` under its class id.
    pub fn register<C: LinkableContainer + 'static>(&mut self, class_id: ClassId) {
        self.policies
            .insert(class_id, Arc::new(TypedPolicy::<C>(PhantomData)));
    }

    pub fn unregister(&mut self, class_id: ClassId) -> bool {
        self.policies.remove(&class_id).is_some()
    }

    /// The indexing policy for a container kind.
    pub fn default_indexing_for(
        &self,
        class_id: ClassId,
    ) -> Result<&dyn ErasedIndexingPolicy, LinkError> {
        self.policies
            .get(&class_id)
            .map(|p| p.as_ref())
            .ok_or_else(|| LinkError::NoPolicyForKind {
                kind: class_id.to_string(),
            })
    }
}
