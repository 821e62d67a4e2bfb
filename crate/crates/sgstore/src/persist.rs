//! Conversion of stored objects to and from a documented text format, and
//! read-back that installs cache-fault loaders instead of decoding eagerly.
//!
//! # File format
//!
//! UTF-8, `\n` line endings, no trailing whitespace, bit-exact:
//!
//! ```text
//! SGSTORE v1
//! EVENT <decimal event number>
//! REC <decimal class-id> <base64(key-encoding)> <type-name> <base64(payload)>
//! LINK <decimal class-id> <base64(container-key)> <base64(index)>
//! ```
//!
//! Within an event, `REC` lines are sorted ascending by `(class-id, key
//! encoding)`. A field whose byte string is empty (a `REC` payload, a
//! `LINK` index) is omitted together with its separating space, since the
//! base64 of an empty string is empty. Key encodings are never empty.
//!
//! Reading back is lazy by default: [`read_store_lazy`] installs one
//! virtual proxy per record and decodes nothing until a proxy is
//! dereferenced. [`read_store_eager`] is the baseline that decodes
//! everything up front; both converge to the same store state after full
//! materialization.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use thiserror::Error;

use crate::clid::{ClassId, ClidDatabase};
use crate::key::StoreKey;
use crate::links::parse_link_record;
use crate::storable::{Bucket, CodecError, Persistable};
use crate::store::{EventStore, Lifetime, LoadError, StoreError};

/// First line of every store file.
pub const FORMAT_HEADER: &str = "SGSTORE v1";

/// Persistence errors.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum PersistError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("class id {0} is not in the class-id database")]
    UnknownClassId(ClassId),
    #[error("no converter registered for class id {0}")]
    MissingConverter(ClassId),
    #[error("record {class_id}/\"{key}\": decode failed: {message}")]
    DecodeFailed {
        class_id: ClassId,
        key: String,
        message: String,
    },
    #[error("converter conflict for class id {0}: encodings differ on the probe value")]
    ConverterConflict(ClassId),
    #[error("invalid type name: {0}")]
    InvalidType(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<io::Error> for PersistError {
    fn from(e: io::Error) -> Self {
        PersistError::Io(e.to_string())
    }
}

// ---- converters ------------------------------------------------------------

type DecodeFn = Arc<dyn Fn(&[u8]) -> Result<Bucket, CodecError> + Send + Sync>;

/// Encoder/decoder pair for one class id, with an invocation counter so
/// laziness is observable.
#[derive(Clone)]
pub struct Converter {
    class_id: ClassId,
    type_name: String,
    decode: DecodeFn,
    probe_encoding: Vec<u8>,
    decode_count: Arc<AtomicU64>,
}

impl Converter {
    /// Converter for `T` bound to an explicit class id.
    ///
    /// The probe encoding — used to detect conflicting re-registrations —
    /// is the encoding of `T::default()`.
    pub fn with_class_id<T: Persistable + Default>(class_id: ClassId) -> Self {
        let count = Arc::new(AtomicU64::new(0));
        let counter = Arc::clone(&count);
        let decode: DecodeFn = Arc::new(move |bytes| {
            let value = T::decode(bytes)?;
            counter.fetch_add(1, Ordering::SeqCst);
            Ok(Bucket::new(class_id, value))
        });
        Converter {
            class_id,
            type_name: T::type_name().to_owned(),
            decode,
            probe_encoding: T::default().encode(),
            decode_count: count,
        }
    }

    /// Converter for `T` under its hash-assigned class id.
    pub fn of<T: Persistable + Default>() -> Result<Self, PersistError> {
        let class_id = crate::clid::assign_id(T::type_name())
            .map_err(|e| PersistError::InvalidType(e.to_string()))?;
        Ok(Self::with_class_id::<T>(class_id))
    }

    pub fn class_id(&self) -> ClassId {
        self.class_id
    }

    pub fn type_name(&self) -> &str {
        &self.type_name
    }

    /// Decodes a payload, counting the invocation.
    pub fn decode(&self, bytes: &[u8]) -> Result<Bucket, CodecError> {
        (self.decode)(bytes)
    }

    /// Successful decode invocations so far.
    pub fn decode_count(&self) -> u64 {
        self.decode_count.load(Ordering::SeqCst)
    }
}

/// Registry of converters keyed by class id. Written during startup,
/// read-only afterwards.
#[derive(Default, Clone)]
pub struct ConverterRegistry {
    converters: BTreeMap<ClassId, Converter>,
}

impl ConverterRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a converter. Re-registering the same class id is accepted
    /// only when the encodings agree on the probe value.
    pub fn register(&mut self, converter: Converter) -> Result<(), PersistError> {
        if let Some(existing) = self.converters.get(&converter.class_id) {
            if existing.probe_encoding != converter.probe_encoding {
                return Err(PersistError::ConverterConflict(converter.class_id));
            }
        }
        self.converters.insert(converter.class_id, converter);
        Ok(())
    }

    /// Builds and registers the converter for `T`.
    pub fn register_type<T: Persistable + Default>(&mut self) -> Result<ClassId, PersistError> {
        let converter = Converter::of::<T>()?;
        let class_id = converter.class_id;
        self.register(converter)?;
        Ok(class_id)
    }

    pub fn get(&self, class_id: ClassId) -> Option<&Converter> {
        self.converters.get(&class_id)
    }

    pub fn decode_count(&self, class_id: ClassId) -> Option<u64> {
        self.get(class_id).map(Converter::decode_count)
    }

    /// Decode invocations summed over all converters.
    pub fn total_decodes(&self) -> u64 {
        self.converters.values().map(Converter::decode_count).sum()
    }
}

// ---- store image -------------------------------------------------------------

/// One parsed `REC` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectRecord {
    pub class_id: ClassId,
    pub key: Vec<u8>,
    pub type_name: String,
    pub payload: Vec<u8>,
}

/// One parsed `LINK` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkRecord {
    pub class_id: ClassId,
    pub key: Vec<u8>,
    pub index: Vec<u8>,
}

/// One `EVENT` section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventImage {
    pub number: u64,
    pub records: Vec<ObjectRecord>,
    pub links: Vec<LinkRecord>,
}

/// Parsed store file: the persistent form of a sequence of events.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StoreImage {
    pub events: Vec<EventImage>,
}

impl StoreImage {
    pub fn record_count(&self) -> usize {
        self.events.iter().map(|e| e.records.len()).sum()
    }

    pub fn link_count(&self) -> usize {
        self.events.iter().map(|e| e.links.len()).sum()
    }

    /// Parses a store file. Errors carry 1-based line numbers.
    pub fn parse(reader: impl BufRead) -> Result<Self, PersistError> {
        let mut lines = reader.lines().enumerate();
        let parse_err = |line: usize, message: String| PersistError::Parse { line, message };

        match lines.next() {
            Some((_, Ok(first))) if first == FORMAT_HEADER => {}
            Some((_, Ok(first))) => {
                return Err(parse_err(
                    1,
                    format!("expected `{FORMAT_HEADER}`, got `{first}`"),
                ))
            }
            Some((_, Err(e))) => return Err(PersistError::Io(e.to_string())),
            None => {
                return Err(parse_err(
                    1,
                    format!("empty file, expected `{FORMAT_HEADER}`"),
                ))
            }
        }

        let mut image = StoreImage::default();
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line.map_err(|e| PersistError::Io(e.to_string()))?;
            if line.is_empty() {
                return Err(parse_err(lineno, "blank line in store file".into()));
            }
            let mut tokens = line.split_whitespace();
            match tokens.next() {
                Some("EVENT") => {
                    let number = tokens
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| parse_err(lineno, "EVENT needs a decimal number".into()))?;
                    if tokens.next().is_some() {
                        return Err(parse_err(lineno, "trailing tokens after EVENT".into()));
                    }
                    image.events.push(EventImage {
                        number,
                        records: Vec::new(),
                        links: Vec::new(),
                    });
                }
                Some("REC") => {
                    let record = parse_rec_line(&line, lineno)?;
                    image
                        .events
                        .last_mut()
                        .ok_or_else(|| parse_err(lineno, "REC before any EVENT".into()))?
                        .records
                        .push(record);
                }
                Some("LINK") => {
                    let (class_id, key, index) =
                        parse_link_record(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
                    image
                        .events
                        .last_mut()
                        .ok_or_else(|| parse_err(lineno, "LINK before any EVENT".into()))?
                        .links
                        .push(LinkRecord {
                            class_id,
                            key,
                            index,
                        });
                }
                Some(other) => {
                    return Err(parse_err(lineno, format!("unknown record tag `{other}`")))
                }
                None => return Err(parse_err(lineno, "blank line in store file".into())),
            }
        }
        Ok(image)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PersistError> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| PersistError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(io::BufReader::new(file))
    }

    /// Writes the image back verbatim: `parse(write(image))` is identity.
    pub fn write(&self, mut sink: impl Write) -> Result<(), PersistError> {
        writeln!(sink, "{FORMAT_HEADER}")?;
        for event in &self.events {
            writeln!(sink, "EVENT {}", event.number)?;
            for rec in &event.records {
                writeln!(sink, "{}", format_rec_line(rec))?;
            }
            for link in &event.links {
                writeln!(
                    sink,
                    "{}",
                    crate::links::encode_link_record(link.class_id, &link.key, &link.index)
                )?;
            }
        }
        Ok(())
    }
}

fn format_rec_line(rec: &ObjectRecord) -> String {
    if rec.payload.is_empty() {
        format!(
            "REC {} {} {}",
            rec.class_id,
            BASE64.encode(&rec.key),
            rec.type_name
        )
    } else {
        format!(
            "REC {} {} {} {}",
            rec.class_id,
            BASE64.encode(&rec.key),
            rec.type_name,
            BASE64.encode(&rec.payload)
        )
    }
}

fn parse_rec_line(line: &str, lineno: usize) -> Result<ObjectRecord, PersistError> {
    let parse_err = |message: String| PersistError::Parse {
        line: lineno,
        message,
    };
    let tokens: Vec<&str> = line.split_whitespace().collect();
    let (class_tok, key_tok, name_tok, payload_tok) = match tokens.as_slice() {
        ["REC", c, k, n] => (*c, *k, *n, None),
        ["REC", c, k, n, p] => (*c, *k, *n, Some(*p)),
        _ => {
            return Err(parse_err(format!(
            "expected `REC <class-id> <base64-key> <type-name> [<base64-payload>]`, got {} tokens",
            tokens.len()
        )))
        }
    };
    let raw: u32 = class_tok
        .parse()
        .map_err(|_| parse_err(format!("`{class_tok}` is not a decimal class id")))?;
    let class_id = ClassId::new(raw).map_err(|e| parse_err(e.to_string()))?;
    let key = BASE64
        .decode(key_tok)
        .map_err(|e| parse_err(format!("key is not base64 ({e})")))?;
    if key.is_empty() {
        return Err(parse_err("key encoding must not be empty".into()));
    }
    let payload = match payload_tok {
        Some(p) => BASE64
            .decode(p)
            .map_err(|e| parse_err(format!("payload is not base64 ({e})")))?,
        None => Vec::new(),
    };
    Ok(ObjectRecord {
        class_id,
        key,
        type_name: name_tok.to_owned(),
        payload,
    })
}

// ---- writing -----------------------------------------------------------------

/// Incremental writer for multi-event files: the header once, then one
/// `EVENT` section per call.
pub struct StoreFileWriter<W: Write> {
    sink: W,
    started: bool,
}

impl<W: Write> StoreFileWriter<W> {
    pub fn new(sink: W) -> Self {
        StoreFileWriter {
            sink,
            started: false,
        }
    }

    /// Appends one event section with the store's current valid proxies,
    /// sorted ascending by `(class id, key encoding)`. Virtual never-loaded
    /// proxies are skipped: writing must not trigger faults. Returns the
    /// record count written.
    pub fn write_event(
        &mut self,
        event_number: u64,
        store: &EventStore,
        converters: &ConverterRegistry,
    ) -> Result<usize, PersistError> {
        if !self.started {
            writeln!(self.sink, "{FORMAT_HEADER}")?;
            self.started = true;
        }
        writeln!(self.sink, "EVENT {event_number}")?;
        let mut written = 0;
        for (key, bucket) in store.valid_entries() {
            let converter = converters
                .get(key.class_id())
                .ok_or(PersistError::MissingConverter(key.class_id()))?;
            let record = ObjectRecord {
                class_id: key.class_id(),
                key: key.key_bytes().to_vec(),
                type_name: converter.type_name().to_owned(),
                payload: bucket.encode(),
            };
            writeln!(self.sink, "{}", format_rec_line(&record))?;
            written += 1;
        }
        Ok(written)
    }

    pub fn flush(&mut self) -> Result<(), PersistError> {
        self.sink.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.sink
    }
}

/// Writes the store as a single-event file (`EVENT 0`); see
/// [`StoreFileWriter::write_event`]. Deterministic byte output for a given
/// store state.
pub fn write_store(
    store: &EventStore,
    converters: &ConverterRegistry,
    sink: impl Write,
) -> Result<usize, PersistError> {
    let mut writer = StoreFileWriter::new(sink);
    let written = writer.write_event(0, store, converters)?;
    writer.flush()?;
    Ok(written)
}

// ---- reading -----------------------------------------------------------------

fn check_record(
    record: &ObjectRecord,
    db: &ClidDatabase,
    converters: &ConverterRegistry,
) -> Result<(), PersistError> {
    if !db.contains(record.class_id) {
        return Err(PersistError::UnknownClassId(record.class_id));
    }
    if converters.get(record.class_id).is_none() {
        return Err(PersistError::MissingConverter(record.class_id));
    }
    Ok(())
}

/// Installs one virtual proxy per record of `event`; payloads are decoded
/// only when a proxy is first dereferenced. Returns the proxy count.
pub fn install_event_lazy(
    event: &EventImage,
    store: &mut EventStore,
    db: &ClidDatabase,
    converters: &ConverterRegistry,
) -> Result<usize, PersistError> {
    for record in &event.records {
        check_record(record, db, converters)?;
    }
    let mut installed = 0;
    for record in &event.records {
        let converter = converters
            .get(record.class_id)
            .expect("checked above")
            .clone();
        let key = StoreKey::new(record.class_id, record.key.clone());
        let payload = record.payload.clone();
        let context = key.to_string();
        let loader = Box::new(move || {
            converter
                .decode(&payload)
                .map_err(|e| LoadError::new(format!("record {context}: {e}")))
        });
        store.install_virtual(key, Lifetime::Event, loader)?;
        installed += 1;
    }
    Ok(installed)
}

/// Decodes every record of `event` now and installs valid, locked proxies
/// (read-back objects arrive published). Returns the proxy count.
pub fn install_event_eager(
    event: &EventImage,
    store: &mut EventStore,
    db: &ClidDatabase,
    converters: &ConverterRegistry,
) -> Result<usize, PersistError> {
    for record in &event.records {
        check_record(record, db, converters)?;
    }
    let mut installed = 0;
    for record in &event.records {
        let converter = converters.get(record.class_id).expect("checked above");
        let bucket = converter
            .decode(&record.payload)
            .map_err(|e| PersistError::DecodeFailed {
                class_id: record.class_id,
                key: String::from_utf8_lossy(&record.key).into_owned(),
                message: e.to_string(),
            })?;
        let key = StoreKey::new(record.class_id, record.key.clone());
        store.install_valid(key, Lifetime::Event, bucket, true)?;
        installed += 1;
    }
    Ok(installed)
}

/// Parses `source` and lazily installs its first event into `store`.
pub fn read_store_lazy(
    source: impl BufRead,
    store: &mut EventStore,
    db: &ClidDatabase,
    converters: &ConverterRegistry,
) -> Result<usize, PersistError> {
    let image = StoreImage::parse(source)?;
    match image.events.first() {
        Some(event) => install_event_lazy(event, store, db, converters),
        None => Ok(0),
    }
}

/// Parses `source` and eagerly installs its first event into `store`.
pub fn read_store_eager(
    source: impl BufRead,
    store: &mut EventStore,
    db: &ClidDatabase,
    converters: &ConverterRegistry,
) -> Result<usize, PersistError> {
    let image = StoreImage::parse(source)?;
    match image.events.first() {
        Some(event) => install_event_eager(event, store, db, converters),
        None => Ok(0),
    }
}
