//! In-memory retrieval micro-benchmark.
//!
//! Populates one store with `objects` track collections under distinct keys
//! and times `retrieves` lookups of the chosen flavor. Reports medians and
//! tail latencies; the interesting property is how the median moves when
//! the store grows, not any absolute number.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use sgstore::pipeline::{Track, TrackCollection};
use sgstore::{EventStore, TypeRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchFlavor {
    /// Keyed retrieves cycling over every recorded key.
    Keyed,
    /// Default (type-only) retrieves, resolved via the default-key rule.
    Default,
    /// Range construction over all instances of the type.
    Range,
}

impl fmt::Display for BenchFlavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match self {
            BenchFlavor::Keyed => "keyed",
            BenchFlavor::Default => "default",
            BenchFlavor::Range => "range",
        };
        f.write_str(text)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BenchConfig {
    pub objects: u64,
    pub retrieves: u64,
    pub flavor: BenchFlavor,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub objects: u64,
    pub retrieves: u64,
    pub flavor: BenchFlavor,
    pub median_ns: u64,
    pub p99_ns: u64,
    pub total: Duration,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        format!(
            "{{\"objects\":{},\"retrieves\":{},\"mode\":\"{}\",\"median_ns\":{},\"p99_ns\":{},\"total_ms\":{:.3}}}",
            self.objects,
            self.retrieves,
            self.flavor,
            self.median_ns,
            self.p99_ns,
            self.total.as_secs_f64() * 1e3
        )
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "bench: objects={} retrieves={} mode={}",
            self.objects, self.retrieves, self.flavor
        )?;
        write!(
            f,
            "median_ns={} p99_ns={} total_ms={:.3}",
            self.median_ns,
            self.p99_ns,
            self.total.as_secs_f64() * 1e3
        )
    }
}

fn bench_key(i: u64) -> String {
    format!("key{i:08}")
}

/// Runs the benchmark. The store uses its own registry so repeated runs in
/// one process stay independent.
pub fn run_bench(config: &BenchConfig) -> BenchReport {
    let registry = Arc::new(TypeRegistry::new());
    registry
        .register::<TrackCollection>()
        .expect("fresh registry");
    let mut store = EventStore::with_registry(registry);

    let payload = |i: u64| {
        TrackCollection(vec![Track {
            id: i as u32,
            px: 0.5,
            py: -0.5,
            pz: 1.0,
            quality: 0.75,
        }])
    };
    // The default flavor needs one instance at the default key so that
    // type-only retrieves resolve deterministically however many objects
    // the store holds.
    let keyed_from = match config.flavor {
        BenchFlavor::Default => {
            store.record(payload(0)).expect("fresh store");
            1
        }
        _ => 0,
    };
    let mut keys = Vec::with_capacity(config.objects as usize);
    for i in keyed_from..config.objects {
        let key = bench_key(i);
        store.record_as(&key, payload(i)).expect("distinct keys");
        keys.push(key);
    }

    let mut samples = Vec::with_capacity(config.retrieves as usize);
    let started = Instant::now();
    for i in 0..config.retrieves {
        let t0 = Instant::now();
        match config.flavor {
            BenchFlavor::Keyed => {
                let key = &keys[(i % keys.len() as u64) as usize];
                std::hint::black_box(store.retrieve_as::<TrackCollection>(key).expect("recorded"));
            }
            BenchFlavor::Default => {
                std::hint::black_box(store.retrieve::<TrackCollection>().expect("recorded"));
            }
            BenchFlavor::Range => {
                std::hint::black_box(store.retrieve_range::<TrackCollection>().len());
            }
        }
        samples.push(t0.elapsed().as_nanos() as u64);
    }
    let total = started.elapsed();

    samples.sort_unstable();
    let median_ns = samples[samples.len() / 2];
    let p99_ns = samples[((samples.len() as u64 * 99 / 100) as usize).min(samples.len() - 1)];
    BenchReport {
        objects: config.objects,
        retrieves: config.retrieves,
        flavor: config.flavor,
        median_ns,
        p99_ns,
        total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_reports() {
        let report = run_bench(&BenchConfig {
            objects: 1,
            retrieves: 1,
            flavor: BenchFlavor::Keyed,
        });
        assert_eq!(report.objects, 1);
        assert_eq!(report.retrieves, 1);
        assert!(report.p99_ns >= report.median_ns);
    }

    #[test]
    fn json_contains_the_contract_fields() {
        let report = run_bench(&BenchConfig {
            objects: 4,
            retrieves: 16,
            flavor: BenchFlavor::Default,
        });
        let json = report.to_json();
        for field in [
            "\"objects\":",
            "\"retrieves\":",
            "\"median_ns\":",
            "\"p99_ns\":",
        ] {
            assert!(json.contains(field), "{json}");
        }
    }

    #[test]
    fn range_flavor_counts_every_instance() {
        let report = run_bench(&BenchConfig {
            objects: 8,
            retrieves: 2,
            flavor: BenchFlavor::Range,
        });
        assert_eq!(report.retrieves, 2);
    }
}
