//! Process-wide runtime registry of storable types.
//!
//! A [`TypeRegistry`] binds Rust types to their [`ClassId`]s at run time and
//! rejects conflicting bindings as they appear. Stores share one registry —
//! usually [`global`] — so that every event store in a process agrees on
//! what an id means. Registration is internally serialized; lookups after
//! startup take a shared lock only.

use std::collections::BTreeMap;
use std::sync::{Arc, LazyLock, RwLock};

use crate::clid::{assign_id, ClassId, ClidDatabase, ClidError, TypeEntry};
use crate::storable::Storable;

#[derive(Default)]
struct Inner {
    by_id: BTreeMap<ClassId, String>,
    by_name: BTreeMap<String, ClassId>,
}

/// Runtime map between type names and class ids.
#[derive(Default)]
pub struct TypeRegistry {
    inner: RwLock<Inner>,
}

impl TypeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `T` under its canonical name, assigning the id with
    /// [`assign_id`]. Re-registration of the same type is a no-op; a hash
    /// collision with a previously registered name is an error.
    pub fn register<T: Storable>(&self) -> Result<ClassId, ClidError> {
        let name = T::type_name();
        let id = assign_id(name)?;
        self.register_entry(TypeEntry::new(id, name)?)?;
        Ok(id)
    }

    /// Registers an explicit `(id, name)` binding with the same conflict
    /// rules as [`ClidDatabase::register`].
    pub fn register_entry(&self, entry: TypeEntry) -> Result<ClassId, ClidError> {
        let mut inner = self.inner.write().expect("type registry poisoned");
        if let Some(existing) = inner.by_id.get(&entry.id) {
            if *existing != entry.type_name {
                return Err(ClidError::DuplicateId {
                    id: entry.id,
                    existing: existing.clone(),
                });
            }
        }
        if let Some(existing) = inner.by_name.get(&entry.type_name) {
            if *existing != entry.id {
                return Err(ClidError::DuplicateName {
                    name: entry.type_name,
                    existing: *existing,
                });
            }
        }
        inner.by_id.insert(entry.id, entry.type_name.clone());
        inner.by_name.insert(entry.type_name, entry.id);
        Ok(entry.id)
    }

    /// The id registered for `T`, if any.
    pub fn id_of<T: Storable>(&self) -> Option<ClassId> {
        self.id_for_name(T::type_name())
    }

    pub fn id_for_name(&self, name: &str) -> Option<ClassId> {
        self.inner
            .read()
            .expect("type registry poisoned")
            .by_name
            .get(name)
            .copied()
    }

    pub fn name_of(&self, id: ClassId) -> Option<String> {
        self.inner
            .read()
            .expect("type registry poisoned")
            .by_id
            .get(&id)
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.inner
            .read()
            .expect("type registry poisoned")
            .by_id
            .len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Snapshot of the current bindings as a database value, e.g. for
    /// saving next to a persisted store image.
    pub fn snapshot(&self) -> ClidDatabase {
        let inner = self.inner.read().expect("type registry poisoned");
        let entries = inner
            .by_id
            .iter()
            .map(|(id, name)| TypeEntry {
                id: *id,
                type_name: name.clone(),
            })
            .collect();
        ClidDatabase::from_entries(entries)
    }
}

static GLOBAL: LazyLock<Arc<TypeRegistry>> = LazyLock::new(|| Arc::new(TypeRegistry::new()));

/// The process-wide registry shared by default-constructed stores.
pub fn global() -> Arc<TypeRegistry> {
    Arc::clone(&GLOBAL)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Marker;

    impl Storable for Marker {
        fn type_name() -> &'static str {
            "RegistryTestMarker"
        }
        fn encode(&self) -> Vec<u8> {
            Vec::new()
        }
    }

    struct MarkerTwin;

    impl Storable for MarkerTwin {
        // Same canonical name as Marker: same id, same binding, no conflict.
        fn type_name() -> &'static str {
            "RegistryTestMarker"
        }
        fn encode(&self) -> Vec<u8> {
            Vec::new()
        }
    }

    #[test]
    fn register_is_idempotent() {
        let reg = TypeRegistry::new();
        let a = reg.register::<Marker>().unwrap();
        let b = reg.register::<Marker>().unwrap();
        let c = reg.register::<MarkerTwin>().unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(reg.len(), 1);
    }

    #[test]
    fn conflicting_entry_is_rejected() {
        let reg = TypeRegistry::new();
        let id = reg.register::<Marker>().unwrap();
        let clash = TypeEntry::new(id, "SomethingElse").unwrap();
        let err = reg.register_entry(clash).unwrap_err();
        assert!(matches!(err, ClidError::DuplicateId { .. }));
    }

    #[test]
    fn snapshot_contains_registered_types() {
        let reg = TypeRegistry::new();
        let id = reg.register::<Marker>().unwrap();
        let db = reg.snapshot();
        assert_eq!(db.id_of("RegistryTestMarker"), Some(id));
    }

    #[test]
    fn lookups_resolve_both_directions() {
        let reg = TypeRegistry::new();
        let id = reg.register::<Marker>().unwrap();
        assert_eq!(reg.id_of::<Marker>(), Some(id));
        assert_eq!(reg.name_of(id).as_deref(), Some("RegistryTestMarker"));
        assert_eq!(reg.id_for_name("NotRegistered"), None);
    }
}
