//! A blackboard-style transient data store for event processing.
//!
//! Producer modules record data objects into an [`EventStore`]; consumer
//! modules retrieve them by type and key, never by naming the producer.
//! On top of that core, the crate provides:
//!
//! - lazy virtual proxies that fault objects in on first dereference
//!   ([`EventStore::register_loader`], [`DataHandle`]),
//! - an immutable-after-publish access policy ([`EventStore::lock_new`]),
//! - persistable references to whole objects and to container elements
//!   ([`ObjectLink`], [`ElementLink`]),
//! - a class-id registry backed by a text database ([`ClidDatabase`]),
//! - a line-oriented persistence format with lazy and eager read-back
//!   ([`persist`]),
//! - a toy event-processing harness that proves the decoupling
//!   ([`pipeline`]).
//!
//! The `book/` directory of this repository walks through each concept;
//! every code block there compiles and runs as a doc-test of this crate.
//!
//! # Quick start
//!
//! ```
//! use sgstore::{EventStore, Storable};
//!
//! #[derive(Clone, PartialEq, Debug)]
//! struct Temperatures(Vec<f64>);
//!
//! impl Storable for Temperatures {
//!     fn type_name() -> &'static str { "Temperatures" }
//!     fn encode(&self) -> Vec<u8> {
//!         self.0.iter().map(f64::to_string).collect::<Vec<_>>().join(" ").into_bytes()
//!     }
//! }
//!
//! let mut store = EventStore::new();
//! store.registry().register::<Temperatures>()?;
//!
//! store.record_as("readout", Temperatures(vec![21.5, 22.0]))?;
//! let view = store.retrieve::<Temperatures>()?;
//! assert_eq!(view.0.len(), 2);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod clid;
pub mod containers;
pub mod graph;
pub mod key;
pub mod links;
pub mod persist;
pub mod pipeline;
pub mod registry;
pub mod storable;
pub mod store;

pub use clid::{assign_id, ClassId, ClidDatabase, ClidError, Conflict, ConflictReport, TypeEntry};
pub use containers::{NumberSequence, StringMap};
pub use graph::{Graph, GraphNode};
pub use key::{validate_key, validate_str_key, KeyContract, KeyError, StoreKey};
pub use links::{
    ElementLink, IndexingPolicy, KeyedPolicy, LinkError, LinkableContainer, NodeIdPolicy,
    ObjectLink, PolicyRegistry, PositionalPolicy,
};
pub use persist::{Converter, ConverterRegistry, PersistError, StoreImage};
pub use registry::{global as global_registry, TypeRegistry};
pub use storable::{Bucket, CodecError, Persistable, Storable};
pub use store::{ClearScope, DataHandle, EventStore, Lifetime, LoadError, StoreError, StoreStats};

#[cfg(doctest)]
mod book;
