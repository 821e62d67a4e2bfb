//! Command-line front end: pipeline runs, store-file inspection, class-id
//! database tools, and the retrieval benchmark.
//!
//! Every command exits 0 on success and nonzero with a single
//! machine-parsable line on standard error:
//!
//! ```text
//! error: <category>: <detail>
//! ```
//!
//! Exit codes: 1 i/o, 2 configuration or bad arguments, 3 runtime or parse
//! failure, 4 class-id conflict.

pub mod bench;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgGroup, Parser, Subcommand};

use sgstore::pipeline::{run_pipeline, PipelineConfig, PipelineError};
use sgstore::{assign_id, ClidDatabase, ClidError, PersistError, StoreImage, TypeEntry};

use bench::{run_bench, BenchConfig, BenchFlavor};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_CONFLICT: i32 = 4;

#[derive(Parser)]
#[command(
    name = "sgstore",
    version,
    about = "Blackboard-style event data store: run pipelines, inspect store files, manage class ids, benchmark retrieves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a pipeline configuration (produce or consume per its MODE).
    Run {
        /// Pipeline configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured event count.
        #[arg(long)]
        events: Option<u64>,
        /// Override the configured output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the records of a store file.
    Dump {
        /// Store file to read.
        #[arg(long = "in")]
        input: PathBuf,
        /// Only list this event.
        #[arg(long)]
        event: Option<u64>,
    },
    /// Class-id database tools.
    Clid {
        #[command(subcommand)]
        action: ClidAction,
    },
    /// Populate a store with --objects entries and time --retrieves lookups.
    #[command(group(ArgGroup::new("flavor").args(["keyed", "default", "range"])))]
    Bench {
        #[arg(long)]
        objects: u64,
        #[arg(long)]
        retrieves: u64,
        /// Keyed retrieves cycling over all keys (the default flavor).
        #[arg(long)]
        keyed: bool,
        /// Type-only retrieves through the default-key rule.
        #[arg(long)]
        default: bool,
        /// Range construction over all instances.
        #[arg(long)]
        range: bool,
        /// Emit the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum ClidAction {
    /// Assign an id for a type name and append it to the database.
    Gen {
        #[arg(long)]
        name: String,
        #[arg(long)]
        db: PathBuf,
    },
    /// Check the database for duplicate ids and duplicate names.
    Verify {
        #[arg(long)]
        db: PathBuf,
    },
}

fn fail(code: i32, category: &str, message: impl std::fmt::Display) -> i32 {
    let message = message.to_string();
    let line = message.lines().find(|l| !l.is_empty()).unwrap_or("failed");
    eprintln!("error: {category}: {line}");
    code
}

/// Parses `args` and runs the selected command, returning the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    EXIT_OK
                }
                _ => fail(EXIT_CONFIG, "args", e),
            };
        }
    };
    match cli.command {
        Command::Run {
            config,
            events,
            out,
        } => cmd_run(&config, events, out),
        Command::Dump { input, event } => cmd_dump(&input, event),
        Command::Clid { action } => match action {
            ClidAction::Gen { name, db } => cmd_clid_gen(&name, &db),
            ClidAction::Verify { db } => cmd_clid_verify(&db),
        },
        Command::Bench {
            objects,
            retrieves,
            default,
            range,
            json,
            ..
        } => cmd_bench(objects, retrieves, default, range, json),
    }
}

fn pipeline_exit(err: &PipelineError) -> (i32, &'static str) {
    match err {
        PipelineError::Config(_) => (EXIT_CONFIG, "config"),
        PipelineError::Io { .. } => (EXIT_IO, "io"),
        PipelineError::Persist(PersistError::Io(_)) => (EXIT_IO, "io"),
        PipelineError::Persist(_) => (EXIT_RUNTIME, "runtime"),
        PipelineError::Algorithm { .. } => (EXIT_RUNTIME, "runtime"),
    }
}

fn cmd_run(config_path: &PathBuf, events: Option<u64>, out: Option<PathBuf>) -> i32 {
    let mut config = match PipelineConfig::load(config_path) {
        Ok(config) => config,
        Err(err) => {
            let (code, category) = pipeline_exit(&err);
            return fail(code, category, err);
        }
    };
    if let Some(n) = events {
        config.events = Some(n);
    }
    if let Some(path) = out {
        config.out = Some(path);
    }
    match run_pipeline(&config) {
        Ok(report) => {
            println!("{report}");
            EXIT_OK
        }
        Err(err) => {
            let (code, category) = pipeline_exit(&err);
            fail(code, category, err)
        }
    }
}

fn cmd_dump(input: &PathBuf, event: Option<u64>) -> i32 {
    let image = match StoreImage::load(input) {
        Ok(image) => image,
        Err(PersistError::Io(message)) => return fail(EXIT_IO, "io", message),
        Err(err) => return fail(EXIT_RUNTIME, "parse", err),
    };
    println!(
        "SGSTORE v1 events={} records={} links={}",
        image.events.len(),
        image.record_count(),
        image.link_count()
    );
    for ev in &image.events {
        if event.is_some_and(|wanted| wanted != ev.number) {
            continue;
        }
        for rec in &ev.records {
            println!(
                "event={} rec class={} type={} key=\"{}\" payload={}B",
                ev.number,
                rec.class_id,
                rec.type_name,
                String::from_utf8_lossy(&rec.key),
                rec.payload.len()
            );
        }
        for link in &ev.links {
            println!(
                "event={} link class={} key=\"{}\" index=\"{}\"",
                ev.number,
                link.class_id,
                String::from_utf8_lossy(&link.key),
                String::from_utf8_lossy(&link.index)
            );
        }
    }
    EXIT_OK
}

fn load_db_or_empty(path: &PathBuf) -> Result<ClidDatabase, i32> {
    if !path.exists() {
        return Ok(ClidDatabase::new());
    }
    ClidDatabase::load(path).map_err(|err| match err {
        ClidError::Io(message) => fail(EXIT_IO, "io", message),
        other => fail(EXIT_IO, "parse", other),
    })
}

fn cmd_clid_gen(name: &str, db_path: &PathBuf) -> i32 {
    let id = match assign_id(name) {
        Ok(id) => id,
        Err(err) => return fail(EXIT_CONFIG, "args", err),
    };
    let db = match load_db_or_empty(db_path) {
        Ok(db) => db,
        Err(code) => return code,
    };
    let entry = match TypeEntry::new(id, name) {
        Ok(entry) => entry,
        Err(err) => return fail(EXIT_CONFIG, "args", err),
    };
    let updated = match db.register(entry) {
        Ok(db) => db,
        Err(err) => return fail(EXIT_CONFLICT, "conflict", err),
    };
    if let Err(err) = updated.save(db_path) {
        return fail(EXIT_IO, "io", err);
    }
    println!("{id} {name}");
    EXIT_OK
}

fn cmd_clid_verify(db_path: &PathBuf) -> i32 {
    let db = match ClidDatabase::load(db_path) {
        Ok(db) => db,
        Err(ClidError::Io(message)) => return fail(EXIT_IO, "io", message),
        Err(err) => return fail(EXIT_IO, "parse", err),
    };
    let report = db.verify();
    if report.is_empty() {
        println!("ok: {} entries, no conflicts", db.len());
        EXIT_OK
    } else {
        println!("{report}");
        fail(
            EXIT_CONFLICT,
            "conflict",
            format!("{} conflict(s)", report.len()),
        )
    }
}

fn cmd_bench(objects: u64, retrieves: u64, default: bool, range: bool, json: bool) -> i32 {
    if objects < 1 || retrieves < 1 {
        return fail(
            EXIT_CONFIG,
            "args",
            "bench requires --objects >= 1 and --retrieves >= 1",
        );
    }
    let flavor = if default {
        BenchFlavor::Default
    } else if range {
        BenchFlavor::Range
    } else {
        BenchFlavor::Keyed
    };
    let report = run_bench(&BenchConfig {
        objects,
        retrieves,
        flavor,
    });
    if json {
        println!("{}", report.to_json());
    } else {
        println!("{report}");
    }
    EXIT_OK
}
