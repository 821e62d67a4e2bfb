//! Built-in algorithm kinds. Every algorithm touches the store through
//! record/retrieve only; none holds a reference to another algorithm.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::Arc;

use crate::links::make_element_link;
use crate::persist::{ConverterRegistry, PersistError, StoreFileWriter};
use crate::store::{EventStore, Lifetime};

use super::data::{Cluster, ClusterCollection, LinkCollection, Track, TrackCollection};
use super::rng::SplitMix64;
use super::{AlgorithmError, AlgorithmSpec, PipelineError};

/// One processing step. Instances are stateful and live for the whole run;
/// `execute` is called once per event, `finish` once after the last event.
pub trait Algorithm: Send {
    fn name(&self) -> &str;
    fn execute(&mut self, store: &mut EventStore, event: u64) -> Result<(), AlgorithmError>;
    fn finish(&mut self) -> Result<(), AlgorithmError> {
        Ok(())
    }
}

/// Catalog entry describing one built-in kind and its parameters.
#[derive(Debug, Clone, Copy)]
pub struct AlgorithmInfo {
    pub kind: &'static str,
    pub summary: &'static str,
    pub params: &'static [(&'static str, &'static str)],
}

static CATALOG: [AlgorithmInfo; 5] = [
    AlgorithmInfo {
        kind: "TrackMaker",
        summary: "records a seeded pseudo-random track collection",
        params: &[
            ("seed", "generator seed (default 1)"),
            ("n", "tracks per event (default 10)"),
            ("out", "output key (default: instance name)"),
            ("lifetime", "event|job (default event)"),
        ],
    },
    AlgorithmInfo {
        kind: "ClusterMaker",
        summary: "records a seeded pseudo-random cluster collection",
        params: &[
            ("seed", "generator seed (default 1)"),
            ("n", "clusters per event (default 10)"),
            ("out", "output key (default: instance name)"),
            ("lifetime", "event|job (default event)"),
        ],
    },
    AlgorithmInfo {
        kind: "TrackSelector",
        summary: "records the tracks passing a quality threshold",
        params: &[
            ("threshold", "minimum quality (default 0.5)"),
            ("in", "input key (default: retrieve by type)"),
            ("out", "output key (default: instance name)"),
        ],
    },
    AlgorithmInfo {
        kind: "LinkBuilder",
        summary: "records element links from selected tracks into their source collection",
        params: &[
            ("source", "key of the source track collection (required)"),
            (
                "selected",
                "key of the selected track collection (required)",
            ),
            ("out", "output key (default: instance name)"),
        ],
    },
    AlgorithmInfo {
        kind: "StoreWriter",
        summary: "appends the store's valid objects to the output file each event",
        params: &[("path", "output file (default: the config OUT path)")],
    },
];

/// The built-in algorithm catalog.
pub fn builtin_algorithms() -> &'static [AlgorithmInfo] {
    &CATALOG
}

pub(super) fn known_kinds() -> Vec<&'static str> {
    CATALOG.iter().map(|info| info.kind).collect()
}

/// Instantiates one algorithm from its config line.
pub(super) fn build_algorithm(
    spec: &AlgorithmSpec,
    converters: &Arc<ConverterRegistry>,
    default_out: Option<&PathBuf>,
) -> Result<Box<dyn Algorithm>, PipelineError> {
    let info = CATALOG
        .iter()
        .find(|info| info.kind == spec.kind)
        .ok_or_else(|| {
            PipelineError::Config(format!(
                "unknown algorithm kind `{}` (known kinds: {})",
                spec.kind,
                known_kinds().join(", ")
            ))
        })?;
    for key in spec.params.keys() {
        if !info.params.iter().any(|(name, _)| name == key) {
            return Err(PipelineError::Config(format!(
                "unknown parameter `{key}` for {} `{}`",
                spec.kind, spec.name
            )));
        }
    }

    let alg: Box<dyn Algorithm> = match spec.kind.as_str() {
        "TrackMaker" => Box::new(TrackMaker {
            name: spec.name.clone(),
            seed: spec.param_u64("seed", 1)?,
            count: spec.param_u64("n", 10)? as usize,
            out: spec.param_or("out", &spec.name),
            lifetime: spec.param_lifetime()?,
        }),
        "ClusterMaker" => Box::new(ClusterMaker {
            name: spec.name.clone(),
            seed: spec.param_u64("seed", 1)?,
            count: spec.param_u64("n", 10)? as usize,
            out: spec.param_or("out", &spec.name),
            lifetime: spec.param_lifetime()?,
        }),
        "TrackSelector" => Box::new(TrackSelector {
            name: spec.name.clone(),
            threshold: spec.param_f64("threshold", 0.5)?,
            input: spec.param("in").map(str::to_owned),
            out: spec.param_or("out", &spec.name),
        }),
        "LinkBuilder" => Box::new(LinkBuilder {
            name: spec.name.clone(),
            source: spec.required_param("source")?,
            selected: spec.required_param("selected")?,
            out: spec.param_or("out", &spec.name),
        }),
        "StoreWriter" => {
            let path = match spec.param("path") {
                Some(p) => PathBuf::from(p),
                None => default_out.cloned().ok_or_else(|| {
                    PipelineError::Config(format!(
                        "StoreWriter `{}` needs a path= parameter or a config OUT line",
                        spec.name
                    ))
                })?,
            };
            Box::new(StoreWriter::new(
                spec.name.clone(),
                path,
                Arc::clone(converters),
            ))
        }
        _ => unreachable!("kind validated against the catalog"),
    };
    Ok(alg)
}

struct TrackMaker {
    name: String,
    seed: u64,
    count: usize,
    out: String,
    lifetime: Lifetime,
}

impl Algorithm for TrackMaker {
    fn name(&self) -> &str {
        &self.name
    }

    fn execute(&mut self, store: &mut EventStore, event: u64) -> Result<(), AlgorithmError> {
        let mut rng = SplitMix64::for_event(self.seed, event);
        let tracks = (0..self.count)
            .map(|i| Track {
                id: i as u32,
                px: rng.next_signed_unit(),
                py: rng.next_signed_unit(),
                pz: rng.next_signed_unit(),
                quality: rng.next_f64(),
            })
            .collect();
        store.record_opts(TrackCollection(tracks), Some(&self.out), self.lifetime, "")?;
        Ok(())
    }
}

struct ClusterMaker {
    name: String,
    seed: u64,
    count: usize,
    out: String,
    lifetime: Lifetime,
}

impl Algorithm for ClusterMaker {
    fn name(&self) -> &str {
        &self.name
    }

    fn execute(&mut self, store: &mut EventStore, event: u64) -> Result<(), AlgorithmError> {
        let mut rng = SplitMix64::for_event(self.seed ^ 0xc1u64, event);
        let clusters = (0..self.count)
            .map(|i| Cluster {
                id: i as u32,
                energy: rng.next_f64() * 10.0,
                width: rng.next_f64(),
            })
            .collect();
        store.record_opts(
            ClusterCollection(clusters),
            Some(&self.out),
            self.lifetime,
            "",
        )?;
        Ok(())
    }
}

struct TrackSelector {
    name: String,
    threshold: f64,
    input: Option<String>,
    out: String,
}

impl Algorithm for TrackSelector {
    fn name(&self) -> &str {
        &self.name
    }

    fn execute(&mut self, store: &mut EventStore, _event: u64) -> Result<(), AlgorithmError> {
        let selected = {
            let tracks: &TrackCollection = match &self.input {
                Some(key) => store.retrieve_as(key)?,
                None => store.retrieve()?,
            };
            TrackCollection(
                tracks
                    .0
                    .iter()
                    .filter(|t| t.quality >= self.threshold)
                    .cloned()
                    .collect(),
            )
        };
        store.record_as(&self.out, selected)?;
        Ok(())
    }
}

struct LinkBuilder {
    name: String,
    source: String,
    selected: String,
    out: String,
}

impl Algorithm for LinkBuilder {
    fn name(&self) -> &str {
        &self.name
    }

    fn execute(&mut self, store: &mut EventStore, _event: u64) -> Result<(), AlgorithmError> {
        let links = {
            let selected: &TrackCollection = store.retrieve_as(&self.selected)?;
            selected
                .0
                .iter()
                .map(|track| make_element_link::<TrackCollection>(store, &self.source, track))
                .collect::<Result<Vec<_>, _>>()?
        };
        store.record_as(&self.out, LinkCollection(links))?;
        Ok(())
    }
}

struct StoreWriter {
    name: String,
    path: PathBuf,
    converters: Arc<ConverterRegistry>,
    writer: Option<StoreFileWriter<BufWriter<File>>>,
}

impl StoreWriter {
    fn new(name: String, path: PathBuf, converters: Arc<ConverterRegistry>) -> Self {
        StoreWriter {
            name,
            path,
            converters,
            writer: None,
        }
    }
}

impl Algorithm for StoreWriter {
    fn name(&self) -> &str {
        &self.name
    }

    fn execute(&mut self, store: &mut EventStore, event: u64) -> Result<(), AlgorithmError> {
        if self.writer.is_none() {
            let file = File::create(&self.path).map_err(|e| {
                AlgorithmError::Persist(PersistError::Io(format!("{}: {e}", self.path.display())))
            })?;
            self.writer = Some(StoreFileWriter::new(BufWriter::new(file)));
        }
        let writer = self.writer.as_mut().expect("created above");
        writer.write_event(event, store, &self.converters)?;
        Ok(())
    }

    fn finish(&mut self) -> Result<(), AlgorithmError> {
        if let Some(writer) = self.writer.as_mut() {
            writer.flush()?;
        }
        Ok(())
    }
}
