//! The blackboard: an event-scoped store of type-and-key identified objects.
//!
//! An [`EventStore`] owns every object recorded into it and hands out
//! read-only views. Entries are [`DataProxy`]s internally: either `Valid`
//! (holding a type-erased bucket) or `Virtual` (holding a loader that
//! materializes the object on first dereference — the cache-fault path).
//! Once a proxy is locked, downstream code can only read it.
//!
//! One store is single-writer: every `&mut self` operation must be
//! externally serialized, which the pipeline guarantees by running
//! algorithms in sequence. A quiescent store may be handed to another
//! thread, and independent stores run fully in parallel; only the shared
//! [`TypeRegistry`] coordinates across them.

use std::cell::{Cell, OnceCell, RefCell};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::marker::PhantomData;
use std::sync::Arc;

use thiserror::Error;

use crate::clid::ClassId;
use crate::key::{validate_key, validate_str_key, KeyContract, KeyError, StoreKey};
use crate::registry::{self, TypeRegistry};
use crate::storable::{Bucket, CodecError, Storable};

/// How long a recorded object survives: until the next event boundary, or
/// for the whole job.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lifetime {
    Event,
    Job,
}

/// What [`EventStore::clear`] removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClearScope {
    /// Event-lifetime proxies only; job-lifetime proxies survive.
    EventOnly,
    /// Everything.
    All,
}

/// Failure reported by a proxy loader.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct LoadError(pub String);

impl LoadError {
    pub fn new(message: impl Into<String>) -> Self {
        LoadError(message.into())
    }
}

impl From<CodecError> for LoadError {
    fn from(e: CodecError) -> Self {
        LoadError(e.0)
    }
}

/// Store operation errors.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("no `{type_name}` in store (key {key:?})")]
    NotFound {
        type_name: String,
        key: Option<String>,
    },
    #[error("{count} instances of `{type_name}` and none at the default key")]
    Ambiguous { type_name: String, count: usize },
    #[error("an object is already recorded at {0}")]
    DuplicateKey(StoreKey),
    #[error("type `{0}` is not registered")]
    UnregisteredType(String),
    #[error(transparent)]
    InvalidKey(#[from] KeyError),
    #[error("object at {0} is published and read-only")]
    Locked(StoreKey),
    #[error("load failed: {0}")]
    LoadFailed(String),
    #[error("stored object has class id {found}, expected {expected}")]
    TypeMismatch { expected: ClassId, found: ClassId },
    #[error("handle from epoch {handle_epoch} dereferenced in epoch {store_epoch}")]
    StaleHandle { handle_epoch: u64, store_epoch: u64 },
}

pub(crate) type BoxedLoader = Box<dyn FnMut() -> Result<Bucket, LoadError> + Send>;

/// Store entry: a materialized bucket or a loader that will produce one.
///
/// `load_count` counts successful loader invocations and never exceeds one;
/// a failed load leaves the proxy virtual and retryable.
pub(crate) struct DataProxy {
    lifetime: Lifetime,
    bucket: OnceCell<Bucket>,
    loader: RefCell<Option<BoxedLoader>>,
    load_count: Cell<u32>,
    locked: Cell<bool>,
    provenance: String,
}

impl DataProxy {
    fn valid(bucket: Bucket, lifetime: Lifetime, provenance: String, locked: bool) -> Self {
        let cell = OnceCell::new();
        let _ = cell.set(bucket);
        DataProxy {
            lifetime,
            bucket: cell,
            loader: RefCell::new(None),
            load_count: Cell::new(0),
            locked: Cell::new(locked),
            provenance,
        }
    }

    fn virtual_(loader: BoxedLoader, lifetime: Lifetime) -> Self {
        DataProxy {
            lifetime,
            bucket: OnceCell::new(),
            loader: RefCell::new(Some(loader)),
            load_count: Cell::new(0),
            locked: Cell::new(false),
            provenance: String::new(),
        }
    }

    fn is_valid(&self) -> bool {
        self.bucket.get().is_some()
    }
}

/// Aggregate operation counters for one store.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StoreStats {
    /// Proxies installed (records plus persistence installs).
    pub records: u64,
    /// Retrieve-flavored lookups, including handle dereferences.
    pub retrieves: u64,
    /// Successful cache-fault loads.
    pub faults: u64,
}

/// Lazy, epoch-checked reference to one instance of `T`.
///
/// A handle is a detached token: dereferencing it goes back through the
/// store, materializes the proxy if it is still virtual, and fails with
/// [`StoreError::StaleHandle`] once the store has been cleared.
pub struct DataHandle<T> {
    key: StoreKey,
    epoch: u64,
    _marker: PhantomData<fn() -> T>,
}

impl<T> Clone for DataHandle<T> {
    fn clone(&self) -> Self {
        DataHandle {
            key: self.key.clone(),
            epoch: self.epoch,
            _marker: PhantomData,
        }
    }
}

impl<T> fmt::Debug for DataHandle<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DataHandle")
            .field("key", &self.key)
            .field("epoch", &self.epoch)
            .finish()
    }
}

impl<T: Storable> DataHandle<T> {
    pub fn store_key(&self) -> &StoreKey {
        &self.key
    }

    /// Dereferences the handle, faulting the object in if necessary.
    pub fn get<'s>(&self, store: &'s EventStore) -> Result<&'s T, StoreError> {
        if self.epoch != store.epoch {
            return Err(StoreError::StaleHandle {
                handle_epoch: self.epoch,
                store_epoch: store.epoch,
            });
        }
        store.retrieve_at(&self.key)
    }
}

/// The blackboard. See the module docs for the ownership and locking rules.
pub struct EventStore {
    registry: Arc<TypeRegistry>,
    proxies: BTreeMap<StoreKey, DataProxy>,
    type_index: BTreeMap<ClassId, BTreeSet<Vec<u8>>>,
    epoch: u64,
    records: Cell<u64>,
    retrieves: Cell<u64>,
    faults: Cell<u64>,
}

impl Default for EventStore {
    fn default() -> Self {
        Self::new()
    }
}

impl EventStore {
    /// A store backed by the process-wide type registry.
    pub fn new() -> Self {
        Self::with_registry(registry::global())
    }

    pub fn with_registry(registry: Arc<TypeRegistry>) -> Self {
        EventStore {
            registry,
            proxies: BTreeMap::new(),
            type_index: BTreeMap::new(),
            epoch: 0,
            records: Cell::new(0),
            retrieves: Cell::new(0),
            faults: Cell::new(0),
        }
    }

    pub fn registry(&self) -> &Arc<TypeRegistry> {
        &self.registry
    }

    /// Current event epoch; bumped by every [`EventStore::clear`].
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn len(&self) -> usize {
        self.proxies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proxies.is_empty()
    }

    pub fn stats(&self) -> StoreStats {
        StoreStats {
            records: self.records.get(),
            retrieves: self.retrieves.get(),
            faults: self.faults.get(),
        }
    }

    // ---- recording ----------------------------------------------------

    /// Records `obj` under the default key (the type's registered name).
    pub fn record<T: Storable>(&mut self, obj: T) -> Result<StoreKey, StoreError> {
        self.record_opts(obj, None, Lifetime::Event, "")
    }

    /// Records `obj` under an explicit string key.
    pub fn record_as<T: Storable>(&mut self, key: &str, obj: T) -> Result<StoreKey, StoreError> {
        self.record_opts(obj, Some(key), Lifetime::Event, "")
    }

    /// Records `obj` under a custom key type; the key is contract-checked
    /// and canonically encoded.
    pub fn record_with<T: Storable, K: KeyContract>(
        &mut self,
        key: &K,
        obj: T,
    ) -> Result<StoreKey, StoreError> {
        let bytes = validate_key(key)?;
        let class_id = self.class_id_of::<T>()?;
        let bucket = Bucket::new(class_id, obj);
        self.insert_proxy(
            StoreKey::new(class_id, bytes),
            DataProxy::valid(bucket, Lifetime::Event, String::new(), false),
        )
    }

    /// Full-control record: optional key, lifetime, and an initial
    /// provenance stamp. The store takes ownership of `obj`; the returned
    /// key is where later retrieves find it.
    pub fn record_opts<T: Storable>(
        &mut self,
        obj: T,
        key: Option<&str>,
        lifetime: Lifetime,
        provenance: &str,
    ) -> Result<StoreKey, StoreError> {
        let class_id = self.class_id_of::<T>()?;
        let bytes = match key {
            Some(k) => validate_str_key(k)?,
            None => T::type_name().as_bytes().to_vec(),
        };
        let bucket = Bucket::new(class_id, obj);
        self.insert_proxy(
            StoreKey::new(class_id, bytes),
            DataProxy::valid(bucket, lifetime, provenance.to_owned(), false),
        )
    }

    /// Installs a virtual proxy whose loader runs on first dereference.
    ///
    /// The loader runs at most once per successful materialization; on
    /// success the object arrives locked (on-demand objects are published
    /// by definition). A failed load leaves the proxy virtual so a later
    /// access can retry.
    pub fn register_loader<T, F>(&mut self, key: &str, loader: F) -> Result<StoreKey, StoreError>
    where
        T: Storable,
        F: FnMut() -> Result<T, LoadError> + Send + 'static,
    {
        let class_id = self.class_id_of::<T>()?;
        let bytes = validate_str_key(key)?;
        let mut loader = loader;
        let boxed: BoxedLoader = Box::new(move || loader().map(|v| Bucket::new(class_id, v)));
        self.insert_proxy(
            StoreKey::new(class_id, bytes),
            DataProxy::virtual_(boxed, Lifetime::Event),
        )
    }

    pub(crate) fn install_virtual(
        &mut self,
        key: StoreKey,
        lifetime: Lifetime,
        loader: BoxedLoader,
    ) -> Result<StoreKey, StoreError> {
        self.insert_proxy(key, DataProxy::virtual_(loader, lifetime))
    }

    pub(crate) fn install_valid(
        &mut self,
        key: StoreKey,
        lifetime: Lifetime,
        bucket: Bucket,
        locked: bool,
    ) -> Result<StoreKey, StoreError> {
        self.insert_proxy(
            key,
            DataProxy::valid(bucket, lifetime, String::new(), locked),
        )
    }

    fn insert_proxy(&mut self, key: StoreKey, proxy: DataProxy) -> Result<StoreKey, StoreError> {
        if self.proxies.contains_key(&key) {
            return Err(StoreError::DuplicateKey(key));
        }
        self.type_index
            .entry(key.class_id())
            .or_default()
            .insert(key.key_bytes().to_vec());
        self.proxies.insert(key.clone(), proxy);
        self.records.set(self.records.get() + 1);
        Ok(key)
    }

    // ---- retrieval ----------------------------------------------------

    /// Retrieves the default instance of `T`: the only one if exactly one
    /// exists, otherwise the one at the default key, otherwise an error.
    pub fn retrieve<T: Storable>(&self) -> Result<&T, StoreError> {
        let key = self.resolve_default::<T>()?;
        self.retrieve_at(&key)
    }

    /// Retrieves the instance of `T` recorded under `key`, faulting it in
    /// if the proxy is still virtual.
    pub fn retrieve_as<T: Storable>(&self, key: &str) -> Result<&T, StoreError> {
        let sk = self.typed_key::<T>(key.as_bytes());
        self.retrieve_at(&sk)
    }

    /// Keyed retrieve with a custom key type.
    pub fn retrieve_with<T: Storable, K: KeyContract>(&self, key: &K) -> Result<&T, StoreError> {
        let bytes = validate_key(key)?;
        let sk = self.typed_key::<T>(&bytes);
        self.retrieve_at(&sk)
    }

    /// Retrieve by exact store key.
    pub fn retrieve_at<T: Storable>(&self, key: &StoreKey) -> Result<&T, StoreError> {
        self.retrieves.set(self.retrieves.get() + 1);
        let proxy = self.proxies.get(key).ok_or_else(|| self.not_found(key))?;
        self.materialize(proxy, key)?;
        let bucket = proxy.bucket.get().expect("materialize guarantees a bucket");
        bucket
            .downcast_ref::<T>()
            .ok_or_else(|| StoreError::TypeMismatch {
                expected: key.class_id(),
                found: bucket.class_id(),
            })
    }

    /// Mutable access to the default instance; refused once published.
    pub fn retrieve_mut<T: Storable>(&mut self) -> Result<&mut T, StoreError> {
        let key = self.resolve_default::<T>()?;
        self.retrieve_mut_at(&key)
    }

    /// Mutable keyed access; refused once published.
    pub fn retrieve_mut_as<T: Storable>(&mut self, key: &str) -> Result<&mut T, StoreError> {
        let sk = self.typed_key::<T>(key.as_bytes());
        self.retrieve_mut_at(&sk)
    }

    fn retrieve_mut_at<T: Storable>(&mut self, key: &StoreKey) -> Result<&mut T, StoreError> {
        self.retrieves.set(self.retrieves.get() + 1);
        {
            let proxy = self.proxies.get(key).ok_or_else(|| self.not_found(key))?;
            self.materialize(proxy, key)?;
            if proxy.locked.get() {
                return Err(StoreError::Locked(key.clone()));
            }
        }
        let expected = key.class_id();
        let proxy = self.proxies.get_mut(key).expect("checked above");
        let bucket = proxy.bucket.get_mut().expect("materialized above");
        let found = bucket.class_id();
        bucket
            .downcast_mut::<T>()
            .ok_or(StoreError::TypeMismatch { expected, found })
    }

    /// One handle per instance of `T`, in ascending canonical key order.
    /// Virtual proxies are included and fault in only when dereferenced.
    pub fn retrieve_range<T: Storable>(&self) -> Vec<DataHandle<T>> {
        let Some(class_id) = self.registry.id_of::<T>() else {
            return Vec::new();
        };
        let Some(keys) = self.type_index.get(&class_id) else {
            return Vec::new();
        };
        keys.iter()
            .map(|bytes| DataHandle {
                key: StoreKey::new(class_id, bytes.clone()),
                epoch: self.epoch,
                _marker: PhantomData,
            })
            .collect()
    }

    /// Whether a proxy (valid or virtual) sits at `(T, key)`. Never loads.
    pub fn contains<T: Storable>(&self, key: &str) -> bool {
        match self.registry.id_of::<T>() {
            Some(class_id) => self
                .proxies
                .contains_key(&StoreKey::new(class_id, key.as_bytes().to_vec())),
            None => false,
        }
    }

    pub fn contains_key(&self, key: &StoreKey) -> bool {
        self.proxies.contains_key(key)
    }

    /// Key strings of every instance of `T`, ascending by canonical
    /// encoding; consistent with [`EventStore::retrieve_range`] order.
    pub fn keys_of<T: Storable>(&self) -> Vec<String> {
        let Some(class_id) = self.registry.id_of::<T>() else {
            return Vec::new();
        };
        self.keys_of_class(class_id)
            .map(|bytes| String::from_utf8_lossy(bytes).into_owned())
            .collect()
    }

    pub(crate) fn keys_of_class(&self, class_id: ClassId) -> impl Iterator<Item = &Vec<u8>> {
        self.type_index.get(&class_id).into_iter().flatten()
    }

    // ---- access control and lifetime -----------------------------------

    /// Marks one proxy published.
    pub fn lock(&mut self, key: &StoreKey) -> Result<(), StoreError> {
        let proxy = self.proxies.get(key).ok_or_else(|| self.not_found(key))?;
        proxy.locked.set(true);
        Ok(())
    }

    /// Marks every currently unlocked valid proxy published and stamps it
    /// with `provenance` (the publishing algorithm instance). Returns how
    /// many proxies were newly locked. The pipeline calls this at each
    /// algorithm boundary.
    pub fn lock_new(&mut self, provenance: &str) -> usize {
        let mut locked = 0;
        for proxy in self.proxies.values_mut() {
            if proxy.is_valid() && !proxy.locked.get() {
                proxy.locked.set(true);
                proxy.provenance = provenance.to_owned();
                locked += 1;
            }
        }
        locked
    }

    /// The provenance stamp of the proxy at `(T, key)`; empty if never
    /// stamped.
    pub fn provenance_of<T: Storable>(&self, key: &str) -> Result<&str, StoreError> {
        let sk = self.typed_key::<T>(key.as_bytes());
        let proxy = self.proxies.get(&sk).ok_or_else(|| self.not_found(&sk))?;
        Ok(&proxy.provenance)
    }

    /// Removes proxies per `scope`, bumps the epoch (invalidating every
    /// outstanding handle), and returns how many proxies were removed.
    pub fn clear(&mut self, scope: ClearScope) -> usize {
        let before = self.proxies.len();
        match scope {
            ClearScope::EventOnly => {
                self.proxies.retain(|_, p| p.lifetime == Lifetime::Job);
            }
            ClearScope::All => {
                self.proxies.clear();
            }
        }
        self.type_index.clear();
        for key in self.proxies.keys() {
            self.type_index
                .entry(key.class_id())
                .or_default()
                .insert(key.key_bytes().to_vec());
        }
        self.epoch += 1;
        before - self.proxies.len()
    }

    // ---- introspection --------------------------------------------------

    pub fn is_locked(&self, key: &StoreKey) -> Option<bool> {
        self.proxies.get(key).map(|p| p.locked.get())
    }

    pub fn is_virtual(&self, key: &StoreKey) -> Option<bool> {
        self.proxies.get(key).map(|p| !p.is_valid())
    }

    pub fn load_count(&self, key: &StoreKey) -> Option<u32> {
        self.proxies.get(key).map(|p| p.load_count.get())
    }

    pub fn lifetime_of(&self, key: &StoreKey) -> Option<Lifetime> {
        self.proxies.get(key).map(|p| p.lifetime)
    }

    /// Audits that the type index is exactly the projection of the proxy
    /// map.
    pub fn check_consistency(&self) -> bool {
        let mut projection: BTreeMap<ClassId, BTreeSet<Vec<u8>>> = BTreeMap::new();
        for key in self.proxies.keys() {
            projection
                .entry(key.class_id())
                .or_default()
                .insert(key.key_bytes().to_vec());
        }
        projection == self.type_index
    }

    pub(crate) fn valid_entries(&self) -> impl Iterator<Item = (&StoreKey, &Bucket)> {
        self.proxies
            .iter()
            .filter_map(|(key, proxy)| proxy.bucket.get().map(|b| (key, b)))
    }

    // ---- internals ------------------------------------------------------

    fn class_id_of<T: Storable>(&self) -> Result<ClassId, StoreError> {
        self.registry
            .id_of::<T>()
            .ok_or_else(|| StoreError::UnregisteredType(T::type_name().to_owned()))
    }

    fn typed_key<T: Storable>(&self, bytes: &[u8]) -> StoreKey {
        // An unregistered type cannot have instances; a sentinel id keeps
        // the lookup a plain miss instead of a separate error path.
        let class_id = self
            .registry
            .id_of::<T>()
            .unwrap_or_else(|| ClassId::new(crate::clid::MIN_CLASS_ID).expect("in range"));
        StoreKey::new(class_id, bytes.to_vec())
    }

    fn not_found(&self, key: &StoreKey) -> StoreError {
        StoreError::NotFound {
            type_name: self
                .registry
                .name_of(key.class_id())
                .unwrap_or_else(|| key.class_id().to_string()),
            key: Some(key.key_string()),
        }
    }

    fn resolve_default<T: Storable>(&self) -> Result<StoreKey, StoreError> {
        let type_name = T::type_name();
        let not_found = || StoreError::NotFound {
            type_name: type_name.to_owned(),
            key: None,
        };
        let class_id = self.registry.id_of::<T>().ok_or_else(not_found)?;
        let keys = self.type_index.get(&class_id).ok_or_else(not_found)?;
        match keys.len() {
            0 => Err(not_found()),
            1 => Ok(StoreKey::new(
                class_id,
                keys.iter().next().expect("len 1").clone(),
            )),
            n => {
                let default = type_name.as_bytes();
                if keys.contains(default) {
                    Ok(StoreKey::new(class_id, default.to_vec()))
                } else {
                    Err(StoreError::Ambiguous {
                        type_name: type_name.to_owned(),
                        count: n,
                    })
                }
            }
        }
    }

    /// Runs the cache-fault path for a virtual proxy. On success the proxy
    /// becomes valid and locked; on failure it stays virtual and retryable.
    fn materialize(&self, proxy: &DataProxy, key: &StoreKey) -> Result<(), StoreError> {
        if proxy.bucket.get().is_some() {
            return Ok(());
        }
        let mut slot = proxy.loader.borrow_mut();
        let loader = slot
            .as_mut()
            .ok_or_else(|| StoreError::LoadFailed("virtual proxy has no loader".into()))?;
        let bucket = loader().map_err(|e| StoreError::LoadFailed(e.0))?;
        if bucket.class_id() != key.class_id() {
            return Err(StoreError::TypeMismatch {
                expected: key.class_id(),
                found: bucket.class_id(),
            });
        }
        let _ = proxy.bucket.set(bucket);
        *slot = None;
        proxy.load_count.set(proxy.load_count.get() + 1);
        proxy.locked.set(true);
        self.faults.set(self.faults.get() + 1);
        Ok(())
    }
}

impl fmt::Debug for EventStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EventStore")
            .field("proxies", &self.proxies.len())
            .field("epoch", &self.epoch)
            .finish()
    }
}
