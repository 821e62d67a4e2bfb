//! Numeric class identifiers and the text database that tracks them.
//!
//! Every storable type carries a process-stable [`ClassId`] derived from its
//! canonical type name. A [`ClidDatabase`] is the on-disk record of known
//! `(id, name)` pairs: a line-oriented text file that can be regenerated,
//! diffed, and checked for conflicts with [`ClidDatabase::verify`].

use std::fmt;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Ids below this value are reserved for framework internals.
pub const MIN_CLASS_ID: u32 = 256;
/// Exclusive upper bound of the valid id range (2^31).
pub const MAX_CLASS_ID: u32 = 1 << 31;

/// Numeric identifier of a storable type.
///
/// Valid ids live in `[256, 2^31)`. Within one registry an id maps to
/// exactly one type name and vice versa; [`ClidDatabase::verify`] reports
/// violations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassId(u32);

impl ClassId {
    /// Wraps a raw id, rejecting values outside `[256, 2^31)`.
    pub fn new(value: u32) -> Result<Self, ClidError> {
        if (MIN_CLASS_ID..MAX_CLASS_ID).contains(&value) {
            Ok(ClassId(value))
        } else {
            Err(ClidError::OutOfRange(value))
        }
    }

    /// The raw numeric value.
    pub fn value(self) -> u32 {
        self.0
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One `(id, type name)` row of a class-id database.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeEntry {
    pub id: ClassId,
    pub type_name: String,
}

impl TypeEntry {
    /// Builds an entry, validating that the name is a single non-empty token.
    pub fn new(id: ClassId, type_name: impl Into<String>) -> Result<Self, ClidError> {
        let type_name = type_name.into();
        validate_type_name(&type_name)?;
        Ok(TypeEntry { id, type_name })
    }
}

fn validate_type_name(name: &str) -> Result<(), ClidError> {
    if name.is_empty() {
        return Err(ClidError::EmptyName);
    }
    if name.chars().any(|c| c.is_whitespace()) {
        return Err(ClidError::InvalidName(name.to_owned()));
    }
    Ok(())
}

/// Errors from id assignment, database parsing, and registration.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClidError {
    #[error("type name must not be empty")]
    EmptyName,
    #[error("type name `{0}` must be a single token without whitespace")]
    InvalidName(String),
    #[error("class id {0} is outside the valid range [256, 2^31)")]
    OutOfRange(u32),
    #[error("id {id} is already bound to type `{existing}`")]
    DuplicateId { id: ClassId, existing: String },
    #[error("type `{name}` is already bound to id {existing}")]
    DuplicateName { name: String, existing: ClassId },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<io::Error> for ClidError {
    fn from(e: io::Error) -> Self {
        ClidError::Io(e.to_string())
    }
}

/// Assigns the class id for a type name.
///
/// Deterministic across runs and platforms: the FNV-1a 32-bit hash of the
/// name's bytes, folded into `[256, 2^31)` by clearing the top bit and
/// adding 256 if the result lands below 256. Collisions between distinct
/// names are possible; [`ClidDatabase::verify`] and runtime registration
/// exist to catch them.
pub fn assign_id(type_name: &str) -> Result<ClassId, ClidError> {
    validate_type_name(type_name)?;
    let mut hash: u32 = 0x811c9dc5;
    for byte in type_name.as_bytes() {
        hash ^= u32::from(*byte);
        hash = hash.wrapping_mul(0x0100_0193);
    }
    let mut folded = hash & 0x7fff_ffff;
    if folded < MIN_CLASS_ID {
        folded += MIN_CLASS_ID;
    }
    Ok(ClassId(folded))
}

/// A single conflict found by [`ClidDatabase::verify`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Conflict {
    /// One id bound to several distinct names.
    DuplicateId { id: ClassId, names: Vec<String> },
    /// One name bound to several distinct ids.
    DuplicateName { name: String, ids: Vec<ClassId> },
}

impl fmt::Display for Conflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Conflict::DuplicateId { id, names } => {
                write!(f, "id {} bound to multiple types: {}", id, names.join(", "))
            }
            Conflict::DuplicateName { name, ids } => {
                let ids: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
                write!(
                    f,
                    "type `{}` bound to multiple ids: {}",
                    name,
                    ids.join(", ")
                )
            }
        }
    }
}

/// Outcome of a database consistency check. Conflicts are data, not errors.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConflictReport {
    pub conflicts: Vec<Conflict>,
}

impl ConflictReport {
    pub fn is_empty(&self) -> bool {
        self.conflicts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.conflicts.len()
    }
}

impl fmt::Display for ConflictReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.conflicts.is_empty() {
            write!(f, "no conflicts")
        } else {
            for (i, c) in self.conflicts.iter().enumerate() {
                if i > 0 {
                    writeln!(f)?;
                }
                write!(f, "{c}")?;
            }
            Ok(())
        }
    }
}

/// In-memory image of a class-id database.
///
/// Values are immutable once built; [`ClidDatabase::register`] returns a new
/// database rather than mutating in place.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClidDatabase {
    entries: Vec<TypeEntry>,
    source_path: Option<PathBuf>,
}

impl ClidDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<TypeEntry>) -> Self {
        ClidDatabase {
            entries,
            source_path: None,
        }
    }

    pub fn entries(&self) -> &[TypeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn source_path(&self) -> Option<&Path> {
        self.source_path.as_deref()
    }

    /// Looks up the name bound to an id, if any.
    pub fn name_of(&self, id: ClassId) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.id == id)
            .map(|e| e.type_name.as_str())
    }

    /// Looks up the id bound to a name, if any.
    pub fn id_of(&self, type_name: &str) -> Option<ClassId> {
        self.entries
            .iter()
            .find(|e| e.type_name == type_name)
            .map(|e| e.id)
    }

    pub fn contains(&self, id: ClassId) -> bool {
        self.entries.iter().any(|e| e.id == id)
    }

    /// Parses a database from a reader. Lines are `<decimal-id> <type-name>`;
    /// blank lines and `#` comments are ignored. Line numbers in errors are
    /// 1-based.
    pub fn parse(reader: impl BufRead) -> Result<Self, ClidError> {
        let mut entries = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut tokens = trimmed.split_whitespace();
            let (id_tok, name_tok) = match (tokens.next(), tokens.next(), tokens.next()) {
                (Some(id), Some(name), None) => (id, name),
                _ => {
                    return Err(ClidError::Parse {
                        line: lineno,
                        message: format!("expected `<decimal-id> <type-name>`, got `{trimmed}`"),
                    })
                }
            };
            let raw: u32 = id_tok.parse().map_err(|_| ClidError::Parse {
                line: lineno,
                message: format!("`{id_tok}` is not a decimal id"),
            })?;
            let id = ClassId::new(raw).map_err(|e| ClidError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            let entry = TypeEntry::new(id, name_tok).map_err(|e| ClidError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            entries.push(entry);
        }
        Ok(ClidDatabase {
            entries,
            source_path: None,
        })
    }

    /// Loads a database file from disk.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClidError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let mut db = Self::parse(io::BufReader::new(file))?;
        db.source_path = Some(path.to_path_buf());
        Ok(db)
    }

    /// Reports every id bound to more than one name and every name bound to
    /// more than one id. An empty report means both mappings are injective.
    pub fn verify(&self) -> ConflictReport {
        use std::collections::BTreeMap;
        let mut by_id: BTreeMap<ClassId, Vec<&str>> = BTreeMap::new();
        let mut by_name: BTreeMap<&str, Vec<ClassId>> = BTreeMap::new();
        for e in &self.entries {
            let names = by_id.entry(e.id).or_default();
            if !names.contains(&e.type_name.as_str()) {
                names.push(&e.type_name);
            }
            let ids = by_name.entry(&e.type_name).or_default();
            if !ids.contains(&e.id) {
                ids.push(e.id);
            }
        }
        let mut conflicts = Vec::new();
        for (id, names) in &by_id {
            if names.len() > 1 {
                conflicts.push(Conflict::DuplicateId {
                    id: *id,
                    names: names.iter().map(|s| s.to_string()).collect(),
                });
            }
        }
        for (name, ids) in &by_name {
            if ids.len() > 1 {
                conflicts.push(Conflict::DuplicateName {
                    name: name.to_string(),
                    ids: ids.clone(),
                });
            }
        }
        ConflictReport { conflicts }
    }

    /// Returns a new database with `entry` appended if it is consistent.
    ///
    /// An exact duplicate (same id, same name) is an idempotent no-op; an id
    /// or name already bound differently is an error.
    pub fn register(&self, entry: TypeEntry) -> Result<ClidDatabase, ClidError> {
        for existing in &self.entries {
            if existing.id == entry.id && existing.type_name == entry.type_name {
                return Ok(self.clone());
            }
            if existing.id == entry.id {
                return Err(ClidError::DuplicateId {
                    id: entry.id,
                    existing: existing.type_name.clone(),
                });
            }
            if existing.type_name == entry.type_name {
                return Err(ClidError::DuplicateName {
                    name: entry.type_name,
                    existing: existing.id,
                });
            }
        }
        let mut next = self.clone();
        next.entries.push(entry);
        Ok(next)
    }

    /// Writes the database as `<decimal-id> <type-name>` lines in ascending
    /// id order (name-tiebreak), deduplicating exact duplicates, so the
    /// on-disk form is canonical and `load(save(db))` reproduces the entry
    /// set exactly.
    pub fn write(&self, mut sink: impl Write) -> Result<(), ClidError> {
        let mut sorted: Vec<&TypeEntry> = self.entries.iter().collect();
        sorted.sort();
        sorted.dedup();
        for entry in sorted {
            writeln!(sink, "{} {}", entry.id, entry.type_name)?;
        }
        Ok(())
    }

    /// Saves the database to a file; see [`ClidDatabase::write`].
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClidError> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}
