//! Output directories, run manifests and the error contract.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use hierattr_core::dataio::{self, FormatDescriptor};
use hierattr_core::scenarios::CODE_VERSION;
use hierattr_core::Error;
use serde::Serialize;
use serde_json::Value;

/// Environment variable naming the directory runs are written under.
pub const OUT_ENV: &str = "HIERATTR_OUT";

pub const MANIFEST_FORMAT: &str = "run-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Data => "data",
            ErrorKind::Numerical => "numerical-guard",
        }
    }

    pub fn of(e: &Error) -> Self {
        if matches!(e, Error::NumericalGuard(_) | Error::UndefinedCorrelation(_)) {
            ErrorKind::Numerical
        } else if e.is_data_error() {
            ErrorKind::Data
        } else {
            ErrorKind::Config
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: ErrorKind,
    pub error: Error,
}

impl Failure {
    pub fn config(error: Error) -> Self {
        Failure {
            kind: ErrorKind::Config,
            error,
        }
    }

    /// Print the machine-readable record on stderr and return the exit code.
    pub fn report(&self) -> ExitCode {
        let record = serde_json::json!({
            "error": {
                "kind": self.kind.name(),
                "exit_code": self.kind.exit_code(),
                "message": self.error.to_string(),
            }
        });
        eprintln!("{record}");
        ExitCode::from(self.kind.exit_code())
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure {
            kind: ErrorKind::of(&error),
            error,
        }
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

/// `--out` when given, else `<$HIERATTR_OUT or results>/<run>`.
pub fn out_dir(explicit: Option<&Path>, run: &str) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let base = std::env::var_os(OUT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("results"));
            base.join(run)
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub format: &'static str,
    pub version: u32,
    pub code_version: &'static str,
    pub command: String,
    pub args: Vec<String>,
    pub inputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub seeds: Vec<u64>,
    pub formats: Vec<FormatDescriptor>,
}

impl Manifest {
    pub fn new(command: &str, formats: &[FormatDescriptor]) -> Self {
        Manifest {
            format: MANIFEST_FORMAT,
            version: MANIFEST_VERSION,
            code_version: CODE_VERSION,
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            inputs: BTreeMap::new(),
            config: None,
            config_hash: None,
            seeds: Vec::new(),
            formats: formats.to_vec(),
        }
    }

    pub fn input(mut self, name: &str, path: &Path) -> Self {
        self.inputs.insert(name.to_string(), path.display().to_string());
        self
    }

    pub fn seeds(mut self, seeds: &[u64]) -> Self {
        self.seeds = seeds.to_vec();
        self
    }

    pub fn write(&self, dir: &Path) -> CliResult {
        dataio::write_json(&dir.join("manifest.json"), self)?;
        Ok(())
    }
}

/// A seed list flag value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Seeds(pub Vec<u64>);

/// A comma-separated list of reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Reals(pub Vec<f64>);

pub fn seeds_arg(raw: &str) -> Result<Seeds, String> {
    parse_seeds(raw).map(Seeds)
}

pub fn reals_arg(raw: &str) -> Result<Reals, String> {
    parse_reals(raw).map(Reals)
}

/// Parse `0..20`, `7`, or `1,2,5`.
pub fn parse_seeds(raw: &str) -> Result<Vec<u64>, String> {
    let raw = raw.trim();
    if let Some((a, b)) = raw.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range `{raw}`"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range `{raw}`"))?;
        if a >= b {
            return Err(format!("empty seed range `{raw}`"));
        }
        return Ok((a..b).collect());
    }
    raw.split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|_| format!("bad seed `{s}`")))
        .collect()
}

/// Parse comma-separated reals.
pub fn parse_reals(raw: &str) -> Result<Vec<f64>, String> {
    raw.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("bad number `{s}`")))
        .collect()
}

/// Split `key=value`.
pub fn parse_assignment(raw: &str) -> Result<(String, String), String> {
    match raw.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(format!("expected KEY=VALUE, found `{raw}`")),
    }
}
