//! A toy event-processing harness over the store.
//!
//! Algorithm instances, configured by name, run in a fixed order over a
//! sequence of events and communicate only through the store: a consumer
//! retrieves its input by type or key and never names the producer. After
//! each algorithm the harness calls [`EventStore::lock_new`] with the
//! instance name, making that algorithm the publisher of its outputs —
//! downstream access is read-only from then on. An algorithm may still
//! modify its own output between recording it and the end of its slot.
//!
//! # Configuration grammar
//!
//! Line-oriented text; `#` starts a comment.
//!
//! ```text
//! ALG <kind> <instance-name> [param=value ...]
//! EVENTS <n>
//! MODE produce|consume-lazy|consume-eager
//! OUT <path>
//! IN <path>
//! ```
//!
//! In produce mode each event ends with the store's records appended to
//! `OUT` (an explicit `StoreWriter` algorithm overrides the default one)
//! and an event-scope clear. In consume modes the events of `IN` are
//! installed one at a time — lazily or eagerly — and the configured
//! algorithms run against them.

mod algorithms;
mod data;
mod rng;

pub use algorithms::{builtin_algorithms, Algorithm, AlgorithmInfo};
pub use data::{
    register_converters, register_types, Cluster, ClusterCollection, LinkCollection, Track,
    TrackCollection,
};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::links::LinkError;
use crate::persist::{
    install_event_eager, install_event_lazy, ConverterRegistry, PersistError, StoreImage,
};
use crate::registry;
use crate::store::{ClearScope, EventStore, Lifetime, StoreError};

/// What a run does with persistence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Produce,
    ConsumeLazy,
    ConsumeEager,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match self {
            Mode::Produce => "produce",
            Mode::ConsumeLazy => "consume-lazy",
            Mode::ConsumeEager => "consume-eager",
        };
        f.write_str(text)
    }
}

/// One `ALG` line: kind, unique instance name, parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlgorithmSpec {
    pub kind: String,
    pub name: String,
    pub params: BTreeMap<String, String>,
}

impl AlgorithmSpec {
    pub fn new(kind: impl Into<String>, name: impl Into<String>) -> Self {
        AlgorithmSpec {
            kind: kind.into(),
            name: name.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }

    fn param(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(String::as_str)
    }

    fn param_or(&self, key: &str, default: &str) -> String {
        self.param(key).unwrap_or(default).to_owned()
    }

    fn required_param(&self, key: &str) -> Result<String, PipelineError> {
        self.param(key).map(str::to_owned).ok_or_else(|| {
            PipelineError::Config(format!(
                "{} `{}` is missing the required parameter `{key}`",
                self.kind, self.name
            ))
        })
    }

    fn param_u64(&self, key: &str, default: u64) -> Result<u64, PipelineError> {
        match self.param(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| self.bad_param(key, raw)),
        }
    }

    fn param_f64(&self, key: &str, default: f64) -> Result<f64, PipelineError> {
        match self.param(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| self.bad_param(key, raw)),
        }
    }

    fn param_lifetime(&self) -> Result<Lifetime, PipelineError> {
        match self.param("lifetime") {
            None | Some("event") => Ok(Lifetime::Event),
            Some("job") => Ok(Lifetime::Job),
            Some(raw) => Err(self.bad_param("lifetime", raw)),
        }
    }

    fn bad_param(&self, key: &str, raw: &str) -> PipelineError {
        PipelineError::Config(format!(
            "{} `{}`: bad value `{raw}` for parameter `{key}`",
            self.kind, self.name
        ))
    }
}

/// A parsed pipeline configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    pub algorithms: Vec<AlgorithmSpec>,
    /// Event count; defaults to 1 in produce mode and to the whole input
    /// file in consume modes.
    pub events: Option<u64>,
    pub mode: Mode,
    pub out: Option<PathBuf>,
    pub input: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            algorithms: Vec::new(),
            events: None,
            mode: Mode::Produce,
            out: None,
            input: None,
        }
    }
}

impl PipelineConfig {
    /// Parses the configuration grammar; see the module docs.
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut config = PipelineConfig::default();
        for (idx, raw_line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| PipelineError::Config(format!("line {lineno}: {message}"));
            let (directive, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            match directive {
                "ALG" => {
                    let mut tokens = rest.split_whitespace();
                    let kind = tokens
                        .next()
                        .ok_or_else(|| bad("ALG needs `<kind> <instance-name>`".into()))?;
                    let name = tokens
                        .next()
                        .ok_or_else(|| bad("ALG needs `<kind> <instance-name>`".into()))?;
                    if config.algorithms.iter().any(|a| a.name == name) {
                        return Err(bad(format!("duplicate algorithm instance name `{name}`")));
                    }
                    let mut spec = AlgorithmSpec::new(kind, name);
                    for token in tokens {
                        let (key, value) = token
                            .split_once('=')
                            .ok_or_else(|| bad(format!("expected `param=value`, got `{token}`")))?;
                        spec.params.insert(key.to_owned(), value.to_owned());
                    }
                    config.algorithms.push(spec);
                }
                "EVENTS" => {
                    config.events = Some(
                        rest.parse()
                            .map_err(|_| bad(format!("`{rest}` is not an event count")))?,
                    );
                }
                "MODE" => {
                    config.mode = match rest {
                        "produce" => Mode::Produce,
                        "consume-lazy" => Mode::ConsumeLazy,
                        "consume-eager" => Mode::ConsumeEager,
                        other => return Err(bad(format!("unknown mode `{other}`"))),
                    };
                }
                "OUT" => config.out = Some(PathBuf::from(rest)),
                "IN" => config.input = Some(PathBuf::from(rest)),
                other => return Err(bad(format!("unknown directive `{other}`"))),
            }
        }
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }
}

/// Failure inside one algorithm.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum AlgorithmError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("{0}")]
    Other(String),
}

/// Harness-level failure; store errors surface with the offending
/// algorithm and event named.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o on `{path}`: {message}")]
    Io { path: String, message: String },
    #[error("algorithm `{algorithm}` failed on event {event}: {source}")]
    Algorithm {
        algorithm: String,
        event: u64,
        source: AlgorithmError,
    },
    #[error(transparent)]
    Persist(#[from] PersistError),
}

/// Per-event counters, taken as deltas over the store and converter stats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventReport {
    pub event: u64,
    /// Proxies installed this event (records plus read-back installs).
    pub records: u64,
    pub retrieves: u64,
    /// Successful cache-fault loads.
    pub faults: u64,
    /// Converter decode invocations.
    pub decodes: u64,
    /// Valid objects present at the end of the event (what a writer emits).
    pub written: u64,
    pub wall: Duration,
}

/// Whole-run summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub mode: Mode,
    pub events: Vec<EventReport>,
    pub wall: Duration,
}

impl RunReport {
    pub fn total_records(&self) -> u64 {
        self.events.iter().map(|e| e.records).sum()
    }

    pub fn total_retrieves(&self) -> u64 {
        self.events.iter().map(|e| e.retrieves).sum()
    }

    pub fn total_faults(&self) -> u64 {
        self.events.iter().map(|e| e.faults).sum()
    }

    pub fn total_decodes(&self) -> u64 {
        self.events.iter().map(|e| e.decodes).sum()
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "pipeline report: mode={} events={}",
            self.mode,
            self.events.len()
        )?;
        for e in &self.events {
            writeln!(
                f,
                "  event {}: records={} retrieves={} faults={} decodes={} written={} wall_us={}",
                e.event,
                e.records,
                e.retrieves,
                e.faults,
                e.decodes,
                e.written,
                e.wall.as_micros()
            )?;
        }
        write!(
            f,
            "totals: records={} retrieves={} faults={} decodes={} wall_ms={:.3}",
            self.total_records(),
            self.total_retrieves(),
            self.total_faults(),
            self.total_decodes(),
            self.wall.as_secs_f64() * 1e3
        )
    }
}

/// Runs the configured algorithms once over `store` for `event`, calling
/// [`EventStore::lock_new`] after each one so its outputs are published
/// under its instance name.
pub fn run_event(
    store: &mut EventStore,
    algorithms: &mut [Box<dyn Algorithm>],
    event: u64,
) -> Result<(), PipelineError> {
    for algorithm in algorithms.iter_mut() {
        algorithm
            .execute(store, event)
            .map_err(|source| PipelineError::Algorithm {
                algorithm: algorithm.name().to_owned(),
                event,
                source,
            })?;
        store.lock_new(algorithm.name());
    }
    Ok(())
}

/// Builds the algorithm list for a config, appending the default
/// `StoreWriter` in produce mode when none is configured.
pub fn build_algorithms(
    config: &PipelineConfig,
    converters: &Arc<ConverterRegistry>,
) -> Result<Vec<Box<dyn Algorithm>>, PipelineError> {
    let mut algorithms = Vec::with_capacity(config.algorithms.len() + 1);
    for spec in &config.algorithms {
        algorithms.push(algorithms::build_algorithm(
            spec,
            converters,
            config.out.as_ref(),
        )?);
    }
    if config.mode == Mode::Produce && !config.algorithms.iter().any(|a| a.kind == "StoreWriter") {
        if config.out.is_none() {
            return Err(PipelineError::Config(
                "produce mode requires an OUT path or a StoreWriter algorithm".into(),
            ));
        }
        let spec = AlgorithmSpec::new("StoreWriter", "StoreWriter");
        algorithms.push(algorithms::build_algorithm(
            &spec,
            converters,
            config.out.as_ref(),
        )?);
    }
    Ok(algorithms)
}

fn setup_converters() -> Result<Arc<ConverterRegistry>, PipelineError> {
    let registry = registry::global();
    data::register_types(&registry)
        .map_err(|e| PipelineError::Config(format!("type registration failed: {e}")))?;
    let mut converters = ConverterRegistry::new();
    data::register_converters(&mut converters)?;
    Ok(Arc::new(converters))
}

/// Runs a pipeline per its mode: produce, or replay an input file.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport, PipelineError> {
    match config.mode {
        Mode::Produce => run_produce(config),
        Mode::ConsumeLazy | Mode::ConsumeEager => replay_consume(config),
    }
}

fn run_produce(config: &PipelineConfig) -> Result<RunReport, PipelineError> {
    let converters = setup_converters()?;
    let mut algorithms = build_algorithms(config, &converters)?;
    let mut store = EventStore::new();
    let events = config.events.unwrap_or(1);
    let started = Instant::now();
    let mut reports = Vec::with_capacity(events as usize);
    for event in 0..events {
        let event_started = Instant::now();
        let before = store.stats();
        let decodes_before = converters.total_decodes();
        run_event(&mut store, &mut algorithms, event)?;
        let written = store.valid_entries().count() as u64;
        let after = store.stats();
        reports.push(EventReport {
            event,
            records: after.records - before.records,
            retrieves: after.retrieves - before.retrieves,
            faults: after.faults - before.faults,
            decodes: converters.total_decodes() - decodes_before,
            written,
            wall: event_started.elapsed(),
        });
        store.clear(ClearScope::EventOnly);
    }
    for algorithm in algorithms.iter_mut() {
        algorithm
            .finish()
            .map_err(|source| PipelineError::Algorithm {
                algorithm: algorithm.name().to_owned(),
                event: events,
                source,
            })?;
    }
    Ok(RunReport {
        mode: config.mode,
        events: reports,
        wall: started.elapsed(),
    })
}

/// Replays a produced file against the configured consumer algorithms,
/// installing each event lazily or eagerly per the mode. In lazy mode the
/// report's fault count per event equals the number of distinct objects
/// actually dereferenced.
pub fn replay_consume(config: &PipelineConfig) -> Result<RunReport, PipelineError> {
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| PipelineError::Config("consume mode requires an IN path".into()))?;
    let file = std::fs::File::open(input).map_err(|e| PipelineError::Io {
        path: input.display().to_string(),
        message: e.to_string(),
    })?;
    let image = StoreImage::parse(std::io::BufReader::new(file))?;

    let converters = setup_converters()?;
    let db = registry::global().snapshot();
    let mut algorithms = build_algorithms(config, &converters)?;
    let mut store = EventStore::new();
    let limit = config
        .events
        .map(|n| n as usize)
        .unwrap_or(image.events.len());

    let started = Instant::now();
    let mut reports = Vec::new();
    for (idx, event_image) in image.events.iter().take(limit).enumerate() {
        let event = idx as u64;
        let event_started = Instant::now();
        let before = store.stats();
        let decodes_before = converters.total_decodes();
        match config.mode {
            Mode::ConsumeLazy => install_event_lazy(event_image, &mut store, &db, &converters)?,
            Mode::ConsumeEager => install_event_eager(event_image, &mut store, &db, &converters)?,
            Mode::Produce => unreachable!("guarded by run_pipeline"),
        };
        run_event(&mut store, &mut algorithms, event)?;
        let after = store.stats();
        reports.push(EventReport {
            event,
            records: after.records - before.records,
            retrieves: after.retrieves - before.retrieves,
            faults: after.faults - before.faults,
            decodes: converters.total_decodes() - decodes_before,
            written: 0,
            wall: event_started.elapsed(),
        });
        store.clear(ClearScope::All);
    }
    for algorithm in algorithms.iter_mut() {
        algorithm
            .finish()
            .map_err(|source| PipelineError::Algorithm {
                algorithm: algorithm.name().to_owned(),
                event: limit as u64,
                source,
            })?;
    }
    Ok(RunReport {
        mode: config.mode,
        events: reports,
        wall: started.elapsed(),
    })
}
