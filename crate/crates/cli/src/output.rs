use std::fs;
use std::path::Path;
use std::process::ExitCode;

use nahmlab::config::RunConfig;
use nahmlab::NahmError;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RESOLUTION: u8 = 3;
pub const EXIT_INCONCLUSIVE: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError { code: 1, message: format!("{}: {e}", path.display()) }
    }

    pub fn report(&self) -> ExitCode {
        eprintln!("{}", serde_json::json!({ "exit_code": self.code, "reason": self.message }));
        ExitCode::from(self.code)
    }
}

impl From<NahmError> for CliError {
    fn from(e: NahmError) -> Self {
        let code = match &e {
            NahmError::InvalidParameter { .. }
            | NahmError::InvalidAxis(_)
            | NahmError::OutsideBall(_)
            | NahmError::CoincidentPoints
            | NahmError::NotFredholm(_) => EXIT_CONFIG,
            NahmError::ResolutionGate(_) => EXIT_RESOLUTION,
            NahmError::NoSpectralGap { .. } => EXIT_INCONCLUSIVE,
            _ => 1,
        };
        CliError { code, message: e.to_string() }
    }
}

/// What a command produced and how the process should exit.
pub struct Outcome {
    pub code: u8,
    pub reason: Option<String>,
    pub files: Vec<String>,
}

impl Outcome {
    pub fn ok(files: Vec<String>) -> Self {
        Outcome { code: 0, reason: None, files }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    RunConfig::from_json(&text).map_err(|e| CliError::config(e.to_string()))
}

/// SHA-256 of the compact JSON of the normalized config.
pub fn config_hash(config: &RunConfig) -> String {
    let canon = serde_json::to_string(config).expect("config serializes");
    Sha256::digest(canon.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub library_version: String,
    pub config_hash: Option<String>,
    pub config: Option<RunConfig>,
    pub wall_time_s: f64,
    pub exit_code: u8,
    pub reason: Option<String>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: Option<&RunConfig>, wall: f64, exit_code: u8, reason: Option<String>, files: Vec<String>) -> Self {
        Manifest {
            command: command.into(),
            library_version: nahmlab::VERSION.into(),
            config_hash: config.map(config_hash),
            config: config.cloned(),
            wall_time_s: wall,
            exit_code,
            reason,
            files,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        write_json(dir, "manifest.json", self).map(|_| ())
    }
}

pub fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> Result<String, CliError> {
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError { code: 1, message: e.to_string() })?;
    fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(name.to_owned())
}

pub fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<String, CliError> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError { code: 1, message: format!("{}: {e}", path.display()) })?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError { code: 1, message: e.to_string() })?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(name.to_owned())
}
