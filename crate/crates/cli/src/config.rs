//! Config-file layering and the CLI's error/exit-code mapping.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use kbalign::textgen::GenError;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(kbalign::Error),
    Provider(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Provider(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "data error: {e}"),
            CliError::Provider(m) => write!(f, "provider error: {m}"),
        }
    }
}

impl From<kbalign::Error> for CliError {
    fn from(e: kbalign::Error) -> Self {
        CliError::Data(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        if e.is_transport() {
            CliError::Provider(e.to_string())
        } else {
            CliError::Data(kbalign::Error::Invalid(e.to_string()))
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Values from the optional JSON config file. Keys are long flag names
/// with `-` replaced by `_`; command-line flags always win.
#[derive(Debug, Default)]
pub struct FileConfig {
    values: Map<String, Value>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let body = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        match serde_json::from_str::<Value>(&body) {
            Ok(Value::Object(values)) => Ok(FileConfig { values }),
            Ok(_) => Err(CliError::Usage(format!("config {} must be a JSON object", path.display()))),
            Err(e) => Err(CliError::Usage(format!("config {}: {e}", path.display()))),
        }
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> CliResult<Option<T>> {
        match self.values.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key {key:?}: {e}"))),
        }
    }

    /// Flag value, else config value, else `default`.
    pub fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }

    pub fn pick_opt<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    /// Flag list when given, else the config's array, else `default`.
    pub fn pick_list<T: DeserializeOwned + Clone>(&self, flag: &[T], key: &str, default: Vec<T>) -> CliResult<Vec<T>> {
        if flag.is_empty() {
            Ok(self.get(key)?.unwrap_or(default))
        } else {
            Ok(flag.to_vec())
        }
    }

    pub fn require_path(&self, flag: Option<PathBuf>, key: &str) -> CliResult<PathBuf> {
        self.pick_opt(flag, key)?
            .ok_or_else(|| CliError::Usage(format!("--{} is required", key.replace('_', "-"))))
    }
}

pub fn positive_k(raw: &str) -> Result<usize, String> {
    match raw.trim().parse::<usize>() {
        Ok(k) if k > 0 => Ok(k),
        _ => Err(format!("k values must be positive integers, got {raw:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"seed": 9, "lr": 0.5}"#).unwrap();
        let c = FileConfig::load(Some(&p)).unwrap();
        assert_eq!(c.pick(Some(3u64), "seed", 0).unwrap(), 3);
        assert_eq!(c.pick(None, "seed", 0u64).unwrap(), 9);
        assert_eq!(c.pick(None, "epochs", 15usize).unwrap(), 15);
        assert!(matches!(c.pick::<u64>(None, "lr", 0), Err(CliError::Usage(_))));
    }

    #[test]
    fn k_parsing() {
        assert_eq!(positive_k(" 5").unwrap(), 5);
        assert!(positive_k("0").is_err());
        assert!(positive_k("a").is_err());
    }
}
