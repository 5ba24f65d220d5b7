//! Command-line front end for `paneldid`.
//!
//! Five subcommands share one flat configuration ([`config::RunConfig`]):
//! `inspect`, `estimate`, `diagnose`, `sensitivity` and `simulate`. Each
//! writes a JSON report (and figures) into `output-dir`. Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O failure |
//! | 2 | schema, configuration or usage error |
//! | 3 | estimator precondition failure |
//! | 4 | bootstrap hard failure (more than 20% of replicates failed) |

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::{Arg, ArgAction, ArgMatches, Command};

pub mod commands;
pub mod config;
pub mod report;
pub mod svg;

use config::{RunConfig, KEYS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;
pub const EXIT_HARD_FAILURE: i32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_SCHEMA, message)
    }
}

impl From<paneldid::Error> for CliError {
    fn from(e: paneldid::Error) -> Self {
        let code = if e.is_schema() {
            EXIT_SCHEMA
        } else if e.is_hard_failure() {
            EXIT_HARD_FAILURE
        } else if matches!(e, paneldid::Error::Io(_)) {
            EXIT_IO
        } else {
            EXIT_PRECONDITION
        };
        Self::new(code, e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

/// Files and terminal text produced by one command.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(String, Vec<u8>)>,
    pub stdout: String,
    pub warnings: Vec<String>,
}

const SUBCOMMANDS: [(&str, &str); 5] = [
    ("inspect", "summarize the panel and draw its treatment pattern"),
    ("estimate", "run the requested estimators with bootstrap inference"),
    ("diagnose", "pretrend F, placebo and carryover tests"),
    ("sensitivity", "robust confidence sets and the breakdown value"),
    ("simulate", "write a synthetic panel and its true estimands"),
];

pub fn cli() -> Command {
    let mut cmd = Command::new("paneldid")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Difference-in-differences and counterfactual estimators for binary-treatment panels")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("flat key = value configuration file; flags override it")
                .global(true)
                .action(ArgAction::Set),
        );
    for (key, help) in KEYS {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(*key)
                .value_name("VALUE")
                .help(*help)
                .global(true)
                .allow_hyphen_values(true)
                .action(ArgAction::Set),
        );
    }
    for (name, about) in SUBCOMMANDS {
        cmd = cmd.subcommand(Command::new(name).about(about));
    }
    cmd
}

/// Resolves the configuration: defaults, then the config file, then flags.
pub fn resolve_config(m: &ArgMatches) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = m.get_one::<String>("config") {
        let text = fs::read_to_string(path).map_err(|e| CliError::new(EXIT_IO, format!("cannot read config {path}: {e}")))?;
        cfg.apply_file(&text).map_err(|e| CliError::config(format!("{path}: {e}")))?;
    }
    for (key, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v).map_err(CliError::config)?;
        }
    }
    cfg.validate().map_err(CliError::config)?;
    Ok(cfg)
}

fn write_outputs(dir: &Path, outcome: &Outcome) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::new(EXIT_IO, format!("cannot create {}: {e}", dir.display())))?;
    for (name, bytes) in &outcome.files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::new(EXIT_IO, format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn dispatch(name: &str, cfg: &RunConfig) -> Result<Outcome, CliError> {
    match name {
        "inspect" => commands::inspect(cfg),
        "estimate" => commands::estimate(cfg),
        "diagnose" => commands::diagnose(cfg),
        "sensitivity" => commands::sensitivity(cfg),
        "simulate" => commands::simulate(cfg),
        other => Err(CliError::config(format!("unknown command {other:?}"))),
    }
}

/// Runs one command and writes its outputs; returns the report files.
pub fn execute(name: &str, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::config(format!("threads: {e}")))?;
    let outcome = pool.install(|| dispatch(name, cfg))?;
    write_outputs(Path::new(&cfg.output_dir), &outcome)?;
    Ok(outcome)
}

/// Process entry point; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match cli().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_SCHEMA } else { EXIT_OK };
        }
    };
    let Some((name, sub)) = matches.subcommand() else {
        return EXIT_SCHEMA;
    };
    let result = resolve_config(sub).and_then(|cfg| execute(name, &cfg).map(|o| (o, cfg)));
    match result {
        Ok((outcome, cfg)) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", outcome.stdout);
            for (file, _) in &outcome.files {
                println!("wrote {}", Path::new(&cfg.output_dir).join(file).display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
