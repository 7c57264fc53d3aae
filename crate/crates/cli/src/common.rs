use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_ASSERTION: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    pub fn assertion(message: impl Into<String>) -> Self {
        Self { code: EXIT_ASSERTION, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<slopkit::Error> for CliError {
    fn from(e: slopkit::Error) -> Self {
        let code = match e {
            slopkit::Error::Divergence { .. } => EXIT_DIVERGENCE,
            slopkit::Error::Io(_) => EXIT_IO,
            _ => EXIT_CONFIG,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self { code: EXIT_IO, message: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "slopkit-out")]
    pub out: PathBuf,
}

impl CommonArgs {
    pub fn load<T: DeserializeOwned + Default>(&self) -> CliResult<T> {
        match &self.config {
            None => Ok(T::default()),
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::config(format!("{}: line {}: {e}", path.display(), e.line()))
                })
            }
        }
    }

    pub fn prepare_out(&self) -> CliResult<&Path> {
        fs::create_dir_all(&self.out)?;
        Ok(&self.out)
    }
}

/// Writes `resolved_config.json`, the exact configuration the run used.
pub fn write_resolved<T: Serialize>(out: &Path, config: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(config).expect("config serializes");
    text.push('\n');
    fs::write(out.join("resolved_config.json"), text)?;
    Ok(())
}

pub fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}

pub fn parse_usizes(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}

/// `Some(v)` overrides the target.
pub fn set<T>(target: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *target = v;
    }
}

/// Parses a kebab-case enum name through its serde representation.
pub fn parse_name<T: DeserializeOwned>(what: &str, s: &str) -> CliResult<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| CliError::config(format!("unknown {what} {s:?}")))
}

pub fn floats_flag(what: &str, s: &Option<String>) -> CliResult<Option<Vec<f64>>> {
    s.as_deref()
        .map(|v| parse_floats(v).map_err(|e| CliError::config(format!("--{what}: {e}"))))
        .transpose()
}

pub fn usizes_flag(what: &str, s: &Option<String>) -> CliResult<Option<Vec<usize>>> {
    s.as_deref()
        .map(|v| parse_usizes(v).map_err(|e| CliError::config(format!("--{what}: {e}"))))
        .transpose()
}

pub fn write_text(out: &Path, name: &str, text: &str) -> CliResult<()> {
    fs::write(out.join(name), text)?;
    Ok(())
}
