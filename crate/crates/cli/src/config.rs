//! `--config` handling: a TOML file whose values replace the parsed flags.
//!
//! Top-level keys apply to the subcommand being run. A table named after a
//! subcommand (`[train]`, `[gen-data]`, ...) applies only to that
//! subcommand and is read after the top-level keys. Keys are spelled like
//! the long flags (`continuity-weight`, `x0-min`).

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;

pub const SUBCOMMANDS: [&str; 6] = ["gen-data", "train", "simulate", "baseline", "compare", "reproduce"];

/// Keys that belong to the global options rather than to a subcommand.
const GLOBAL_KEYS: [&str; 2] = ["out-dir", "quiet"];

pub struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.message().to_string())?;
        Ok(ConfigFile { table })
    }

    pub fn out_dir(&self) -> Result<Option<PathBuf>, CliError> {
        match self.table.get("out-dir") {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(PathBuf::from(s))),
            Some(_) => Err(CliError::Usage("config key 'out-dir' must be a string".into())),
        }
    }

    pub fn quiet(&self) -> Result<Option<bool>, CliError> {
        match self.table.get("quiet") {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(CliError::Usage("config key 'quiet' must be a boolean".into())),
        }
    }

    /// Return `args` with every value from the file written over it.
    pub fn apply<T: Serialize + DeserializeOwned>(&self, args: &T, subcommand: &str) -> Result<T, CliError> {
        let usage = |e: String| CliError::Usage(format!("config: {e}"));
        let mut merged = toml::Table::try_from(args).map_err(|e| usage(e.to_string()))?;
        for (key, value) in &self.table {
            if GLOBAL_KEYS.contains(&key.as_str()) || SUBCOMMANDS.contains(&key.as_str()) {
                continue;
            }
            merged.insert(key.clone(), value.clone());
        }
        if let Some(section) = self.table.get(subcommand) {
            let section = section
                .as_table()
                .ok_or_else(|| usage(format!("[{subcommand}] must be a table")))?;
            for (key, value) in section {
                merged.insert(key.clone(), value.clone());
            }
        }
        toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| usage(e.message().to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    #[serde(rename_all = "kebab-case", deny_unknown_fields)]
    struct Demo {
        epochs: usize,
        lr: f64,
        hidden: Vec<usize>,
        out: Option<PathBuf>,
    }

    fn demo() -> Demo {
        Demo {
            epochs: 20,
            lr: 1e-3,
            hidden: vec![64, 64],
            out: None,
        }
    }

    #[test]
    fn file_values_override_flags() {
        let cfg = ConfigFile::parse("epochs = 5\nout = \"m.txt\"\n[train]\nhidden = [8]\n[simulate]\nx0 = [1.0]\n").unwrap();
        let d = cfg.apply(&demo(), "train").unwrap();
        assert_eq!(
            d,
            Demo {
                epochs: 5,
                lr: 1e-3,
                hidden: vec![8],
                out: Some("m.txt".into())
            }
        );
    }

    #[test]
    fn section_beats_top_level() {
        let cfg = ConfigFile::parse("epochs = 5\n[train]\nepochs = 7\n").unwrap();
        assert_eq!(cfg.apply(&demo(), "train").unwrap().epochs, 7);
    }

    #[test]
    fn unknown_and_mistyped_keys_are_usage_errors() {
        let cfg = ConfigFile::parse("epoch = 5\n").unwrap();
        assert!(matches!(cfg.apply(&demo(), "train"), Err(CliError::Usage(_))));
        let cfg = ConfigFile::parse("epochs = \"many\"\n").unwrap();
        assert!(matches!(cfg.apply(&demo(), "train"), Err(CliError::Usage(_))));
        assert!(ConfigFile::parse("epochs = ").is_err());
    }

    #[test]
    fn global_keys() {
        let cfg = ConfigFile::parse("out-dir = \"results\"\nquiet = true\n").unwrap();
        assert_eq!(cfg.out_dir().unwrap(), Some(PathBuf::from("results")));
        assert_eq!(cfg.quiet().unwrap(), Some(true));
        assert_eq!(cfg.apply(&demo(), "train").unwrap(), demo());
    }
}
