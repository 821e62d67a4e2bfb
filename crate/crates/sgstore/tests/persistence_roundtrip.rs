//! Randomized persistence checks: write→read→write byte identity, lazy and
//! eager convergence, and decode counts that track exactly what was
//! dereferenced.

use std::sync::Arc;

use sgstore::persist::{
    install_event_eager, install_event_lazy, write_store, ConverterRegistry, StoreImage,
};
use sgstore::pipeline::{self, Cluster, ClusterCollection, Track, TrackCollection};
use sgstore::{ClearScope, EventStore, Graph, NumberSequence, StringMap, TypeRegistry};

fn env() -> (Arc<TypeRegistry>, ConverterRegistry) {
    let registry = Arc::new(TypeRegistry::new());
    pipeline::register_types(&registry).unwrap();
    let mut converters = ConverterRegistry::new();
    pipeline::register_converters(&mut converters).unwrap();
    (registry, converters)
}

/// Small deterministic generator so the hundred random stores are the same
/// hundred on every run.
struct Mix(u64);

impl Mix {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn f64(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }
}

fn random_store(registry: &Arc<TypeRegistry>, rng: &mut Mix) -> EventStore {
    let mut store = EventStore::with_registry(Arc::clone(registry));
    for i in 0..rng.below(4) {
        let tracks = (0..rng.below(6))
            .map(|t| Track {
                id: t as u32,
                px: rng.f64() * 2.0 - 1.0,
                py: rng.f64() * 2.0 - 1.0,
                pz: rng.f64() * 2.0 - 1.0,
                quality: rng.f64(),
            })
            .collect();
        store
            .record_as(&format!("trk{i}"), TrackCollection(tracks))
            .unwrap();
    }
    for i in 0..rng.below(4) {
        let clusters = (0..rng.below(5))
            .map(|c| Cluster {
                id: c as u32,
                energy: rng.f64() * 10.0,
                width: rng.f64(),
            })
            .collect();
        store
            .record_as(&format!("cls{i}"), ClusterCollection(clusters))
            .unwrap();
    }
    for i in 0..rng.below(3) {
        let values = (0..rng.below(8)).map(|_| rng.f64() * 100.0).collect();
        store
            .record_as(&format!("seq{i}"), NumberSequence(values))
            .unwrap();
    }
    for i in 0..rng.below(3) {
        let mut map = StringMap::default();
        for k in 0..rng.below(5) {
            map.insert(format!("f{k}"), rng.f64());
        }
        store.record_as(&format!("map{i}"), map).unwrap();
    }
    for i in 0..rng.below(2) {
        let mut graph = Graph::new();
        for n in 0..rng.below(6) {
            graph.add_node(n as u32, rng.f64());
        }
        store.record_as(&format!("gr{i}"), graph).unwrap();
    }
    // Some runs publish before writing; bytes must not care.
    if rng.below(2) == 0 {
        store.lock_new("writer-test");
    }
    store
}

fn state_signature(store: &EventStore) -> Vec<(String, String, Vec<u8>, bool)> {
    // (class, key, payload encoding, locked) for every proxy — the state
    // the lazy/eager equivalence is judged on.
    let mut signature = Vec::new();
    macro_rules! collect {
        ($t:ty) => {
            for handle in store.retrieve_range::<$t>() {
                let view = handle.get(store).unwrap();
                signature.push((
                    <$t as sgstore::Storable>::type_name().to_string(),
                    handle.store_key().key_string(),
                    sgstore::Storable::encode(view),
                    store.is_locked(handle.store_key()).unwrap(),
                ));
            }
        };
    }
    collect!(TrackCollection);
    collect!(ClusterCollection);
    collect!(NumberSequence);
    collect!(StringMap);
    collect!(Graph);
    signature.sort();
    signature
}

#[test]
fn one_hundred_random_stores_round_trip_byte_identically() {
    let (registry, converters) = env();
    let db = registry.snapshot();
    let mut rng = Mix(7);

    for case in 0..100 {
        let store = random_store(&registry, &mut rng);
        let mut first = Vec::new();
        write_store(&store, &converters, &mut first).unwrap();

        let mut eager = EventStore::with_registry(Arc::clone(&registry));
        let image = StoreImage::parse(&first[..]).unwrap();
        install_event_eager(&image.events[0], &mut eager, &db, &converters).unwrap();
        let mut second = Vec::new();
        write_store(&eager, &converters, &mut second).unwrap();
        assert_eq!(first, second, "case {case}: eager round trip changed bytes");

        // Lazy read plus full materialization converges to the same bytes
        // and the same state.
        let mut lazy = EventStore::with_registry(Arc::clone(&registry));
        install_event_lazy(&image.events[0], &mut lazy, &db, &converters).unwrap();
        let lazy_sig = state_signature(&lazy);
        let eager_sig = state_signature(&eager);
        assert_eq!(lazy_sig, eager_sig, "case {case}: states diverged");

        let mut third = Vec::new();
        write_store(&lazy, &converters, &mut third).unwrap();
        assert_eq!(first, third, "case {case}: lazy round trip changed bytes");
    }
}

#[test]
fn decode_counts_equal_distinct_dereferences() {
    let (registry, converters) = env();
    let db = registry.snapshot();

    let mut store = EventStore::with_registry(Arc::clone(&registry));
    store
        .record_as("t0", TrackCollection(vec![Track::default()]))
        .unwrap();
    store.record_as("t1", TrackCollection(vec![])).unwrap();
    store
        .record_as("c0", ClusterCollection(vec![Cluster::default()]))
        .unwrap();
    let mut bytes = Vec::new();
    write_store(&store, &converters, &mut bytes).unwrap();

    let mut lazy = EventStore::with_registry(Arc::clone(&registry));
    let image = StoreImage::parse(&bytes[..]).unwrap();
    install_event_lazy(&image.events[0], &mut lazy, &db, &converters).unwrap();
    assert_eq!(converters.total_decodes(), 0);

    // Touch only the track collections, each of them several times.
    for _ in 0..4 {
        lazy.retrieve_as::<TrackCollection>("t0").unwrap();
        lazy.retrieve_as::<TrackCollection>("t1").unwrap();
    }
    let track_id = registry.id_of::<TrackCollection>().unwrap();
    let cluster_id = registry.id_of::<ClusterCollection>().unwrap();
    assert_eq!(converters.decode_count(track_id), Some(2));
    assert_eq!(converters.decode_count(cluster_id), Some(0));
    assert_eq!(lazy.stats().faults, 2);
}

#[test]
fn builtin_converters_round_trip_a_thousand_values_each() {
    let (registry, converters) = env();
    let mut rng = Mix(0xc0dec);

    macro_rules! check {
        ($t:ty, $make:expr) => {
            let class_id = registry.id_of::<$t>().unwrap();
            let converter = converters.get(class_id).unwrap();
            for _ in 0..1000 {
                let value: $t = $make(&mut rng);
                let encoded = sgstore::Storable::encode(&value);
                let bucket = converter.decode(&encoded).unwrap();
                assert_eq!(bucket.encode(), encoded);
                assert_eq!(bucket.downcast_ref::<$t>().unwrap(), &value);
            }
        };
    }

    check!(TrackCollection, |rng: &mut Mix| {
        TrackCollection(
            (0..rng.below(5))
                .map(|i| Track {
                    id: i as u32,
                    px: rng.f64() * 2.0 - 1.0,
                    py: rng.f64() * 2.0 - 1.0,
                    pz: rng.f64() * 2.0 - 1.0,
                    quality: rng.f64(),
                })
                .collect(),
        )
    });
    check!(ClusterCollection, |rng: &mut Mix| {
        ClusterCollection(
            (0..rng.below(5))
                .map(|i| Cluster {
                    id: i as u32,
                    energy: rng.f64() * 10.0,
                    width: rng.f64(),
                })
                .collect(),
        )
    });
    check!(NumberSequence, |rng: &mut Mix| {
        NumberSequence((0..rng.below(8)).map(|_| rng.f64() * 1e4 - 5e3).collect())
    });
    check!(StringMap, |rng: &mut Mix| {
        let mut map = StringMap::default();
        for i in 0..rng.below(6) {
            map.insert(format!("k{i}_{}", rng.below(1000)), rng.f64());
        }
        map
    });
    check!(Graph, |rng: &mut Mix| {
        let mut graph = Graph::new();
        let n = rng.below(8);
        for id in 0..n {
            graph.add_node(id as u32, rng.f64());
        }
        for _ in 0..rng.below(n + 1) {
            graph.add_edge(rng.below(n.max(1)) as u32, rng.below(n.max(1)) as u32);
        }
        graph
    });
}

#[test]
fn multi_event_files_replay_event_by_event() {
    let (registry, converters) = env();
    let db = registry.snapshot();

    // Produce a two-event file by hand with the incremental writer.
    let mut bytes = Vec::new();
    {
        let mut writer = sgstore::persist::StoreFileWriter::new(&mut bytes);
        for event in 0..2u64 {
            let mut store = EventStore::with_registry(Arc::clone(&registry));
            store
                .record_as(
                    "t",
                    TrackCollection(vec![Track {
                        id: event as u32,
                        ..Track::default()
                    }]),
                )
                .unwrap();
            writer.write_event(event, &store, &converters).unwrap();
        }
        writer.flush().unwrap();
    }

    let image = StoreImage::parse(&bytes[..]).unwrap();
    assert_eq!(image.events.len(), 2);
    let mut store = EventStore::with_registry(Arc::clone(&registry));
    for (idx, event) in image.events.iter().enumerate() {
        install_event_eager(event, &mut store, &db, &converters).unwrap();
        let tracks: &TrackCollection = store.retrieve_as("t").unwrap();
        assert_eq!(tracks.0[0].id, idx as u32);
        store.clear(ClearScope::All);
    }
}
