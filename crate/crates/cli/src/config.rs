//! Layered settings: command-line flags, then a TOML config file, then
//! built-in defaults.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use crate::error::CliError;

/// A parsed config file that tracks which keys were consumed, so that
/// misspelled keys are reported instead of silently ignored.
pub struct ConfigFile {
    pub path: Option<PathBuf>,
    table: toml::Table,
    used: RefCell<BTreeSet<String>>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let table = match path {
            None => toml::Table::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
        };
        Ok(ConfigFile {
            path: path.map(Path::to_path_buf),
            table,
            used: RefCell::new(BTreeSet::new()),
        })
    }

    pub fn value<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        let Some(v) = self.table.get(key) else {
            return Ok(None);
        };
        self.used.borrow_mut().insert(key.to_string());
        v.clone()
            .try_into()
            .map(Some)
            .map_err(|e| CliError::Config(format!("key `{key}`: {e}")))
    }

    /// Flag value if given, else the config value.
    pub fn layer<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        let file = self.value(key)?;
        Ok(flag.or(file))
    }

    /// Keys not yet consumed, removed from the file and returned as a table.
    pub fn take_rest(&self) -> toml::Table {
        let used = self.used.borrow();
        let rest: toml::Table = self
            .table
            .iter()
            .filter(|(k, _)| !used.contains(*k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        drop(used);
        self.used.borrow_mut().extend(rest.keys().cloned());
        rest
    }

    pub fn finish(self) -> Result<(), CliError> {
        let used = self.used.borrow();
        let unknown: Vec<&String> = self.table.keys().filter(|k| !used.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "unknown key(s) in {}: {}",
                self.path.as_deref().map_or("config".into(), |p| p.display().to_string()),
                unknown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            )))
        }
    }
}

/// Overlays a TOML table onto the JSON form of `base` key by key.
pub fn overlay<T>(base: &T, patch: toml::Table) -> Result<T, CliError>
where
    T: serde::Serialize + DeserializeOwned,
{
    let mut value = serde_json::to_value(base).map_err(|e| CliError::Config(e.to_string()))?;
    let obj = value.as_object_mut().ok_or_else(|| CliError::Config("settings are not a table".into()))?;
    for (k, v) in patch {
        if !obj.contains_key(&k) {
            return Err(CliError::Config(format!("unknown key `{k}`")));
        }
        obj.insert(k, serde_json::to_value(v).map_err(|e| CliError::Config(e.to_string()))?);
    }
    serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
}
