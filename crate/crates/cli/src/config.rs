//! `key = value` config files and flag/config/default resolution.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::failure::{Failure, Outcome};

#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    source: Option<PathBuf>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl Settings {
    pub fn load(path: &Path) -> Outcome<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::data(format!("cannot read config {}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Failure::data(format!(
                    "{}:{}: expected `key = value`",
                    path.display(),
                    n + 1
                )));
            };
            values.insert(normalize(key), value.trim().to_string());
        }
        Ok(Self {
            values,
            source: Some(path.to_path_buf()),
        })
    }

    /// Rejects any key that is not one of `allowed`.
    pub fn check_keys<'a>(&self, allowed: impl IntoIterator<Item = &'a str> + Clone) -> Outcome {
        for key in self.values.keys() {
            if !allowed.clone().into_iter().any(|a| a == key) {
                let known: Vec<_> = allowed.into_iter().collect();
                return Err(Failure::data(format!(
                    "unknown config key '{key}' in {} (known: {})",
                    self.describe(),
                    known.join(", ")
                )));
            }
        }
        Ok(())
    }

    fn describe(&self) -> String {
        self.source
            .as_ref()
            .map_or_else(|| "config".into(), |p| p.display().to_string())
    }

    pub fn get<T>(&self, key: &str) -> Outcome<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| Failure::data(format!("config key '{key}' in {}: {e}", self.describe())))
            })
            .transpose()
    }

    /// Flag value if given, else the config value.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Outcome<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    /// Flag, then config, then `default`.
    pub fn or<T>(&self, flag: Option<T>, key: &str, default: T) -> Outcome<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    /// Flag or config value that has no default.
    pub fn require<T>(&self, flag: Option<T>, key: &str) -> Outcome<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.pick(flag, key)?
            .ok_or_else(|| Failure::usage(format!("missing required option --{key}")))
    }
}
