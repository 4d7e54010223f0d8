use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::cli::Format;

/// Failures sorted by exit code: bad invocation (1) or bad data/numerics (2).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl From<obsopt::Error> for CliError {
    fn from(e: obsopt::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses an option value, reporting failures as usage errors.
pub fn parse_opt<T>(name: &str, value: Option<&str>, default: &str) -> CliResult<T>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    let raw = value.unwrap_or(default);
    raw.parse::<T>().map_err(|e| usage(format!("--{name} {raw}: {e}")))
}

/// Reads a `--config` file. A metadata record from an earlier run is
/// accepted too, in which case its resolved options are used.
pub fn load_config(path: &Path, command: &str) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(usage(format!("config {} must hold a JSON object", path.display())));
    };
    match (map.get("command"), map.get("options")) {
        (Some(Value::String(c)), Some(options)) if c == command => Ok(options.clone()),
        (Some(Value::String(c)), Some(_)) => Err(usage(format!("metadata record is for `{c}`, not `{command}`"))),
        _ => Ok(Value::Object(map)),
    }
}

/// Overlays the options given as flags on those from the config file.
///
/// Unset flags (`null`, or `false` for switches) leave the file's value in
/// place. Keys the subcommand does not know are usage errors.
pub fn resolve<T>(flags: &T, file: Option<Value>) -> CliResult<T>
where
    T: Serialize + DeserializeOwned + Default,
{
    let known = match serde_json::to_value(T::default())? {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    let mut merged = match file {
        Some(Value::Object(m)) => m,
        Some(_) => return Err(usage("config must be a JSON object")),
        None => Map::new(),
    };
    if let Some(bad) = merged.keys().find(|k| !known.contains_key(*k)) {
        return Err(usage(format!("unknown config option `{bad}`")));
    }
    if let Value::Object(given) = serde_json::to_value(flags)? {
        for (k, v) in given {
            if !(v.is_null() || v == Value::Bool(false)) {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("config: {e}")))
}

fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Writes rows as CSV with a header, or as a JSON array.
pub fn write_table<S: Serialize>(rows: &[S], path: Option<&Path>, format: Format) -> CliResult<()> {
    let mut out = sink(path)?;
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<S: Serialize>(value: &S, path: Option<&Path>) -> CliResult<()> {
    let mut out = sink(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Everything needed to rerun a command: the resolved options plus
/// versions. Contains no timestamps, so identical runs give identical records.
#[derive(Debug, Serialize)]
pub struct Metadata {
    pub command: &'static str,
    pub version: &'static str,
    pub format: Format,
    pub seed: Option<u64>,
    pub options: Value,
    pub outputs: Vec<PathBuf>,
    pub notices: Vec<String>,
}

impl Metadata {
    pub fn new<T: Serialize>(command: &'static str, format: Format, seed: Option<u64>, options: &T) -> CliResult<Self> {
        Ok(Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            format,
            seed,
            options: serde_json::to_value(options)?,
            outputs: Vec::new(),
            notices: Vec::new(),
        })
    }

    pub fn output(&mut self, path: Option<&Path>) {
        if let Some(p) = path {
            self.outputs.push(p.to_path_buf());
        }
    }

    /// Writes `<first output>.meta.json`, or to standard error when every
    /// result went to standard output.
    pub fn emit(&self) -> CliResult<()> {
        for n in &self.notices {
            eprintln!("notice: {n}");
        }
        match self.outputs.first() {
            Some(first) => {
                let mut name = first.clone().into_os_string();
                name.push(".meta.json");
                write_json(self, Some(Path::new(&name)))
            }
            None => {
                eprintln!("{}", serde_json::to_string(self)?);
                Ok(())
            }
        }
    }
}
