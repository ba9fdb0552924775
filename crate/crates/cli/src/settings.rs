//! Settings resolution: clap defaults, then the config file, then flags.
//!
//! Config files are flat `key = value` lines grouped under `[section]`
//! headers. Keys before any header, or under `[common]`, apply to every
//! command; `[train]`, `[eval]`, ... apply to that command only. Keys are
//! long flag names (`horizon-ms`); `_` and `-` are interchangeable.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use clap::parser::ValueSource;
use clap::{ArgMatches, Command};
use skelnet_core::{Error, Result};

/// Keys that locate outputs or size thread pools; they never change results
/// and are kept out of the embedded configuration.
const LOCATION_KEYS: [&str; 3] = ["config", "out", "threads"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub settings: BTreeMap<String, String>,
    defaults: BTreeMap<String, String>,
    explicit: BTreeSet<String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

pub fn parse_config_file(text: &str, origin: &str, command: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut active = true;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(section) = line.strip_prefix('[') {
            let name = section
                .strip_suffix(']')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: unterminated section header", n + 1)))?
                .trim();
            active = name == "common" || name == command;
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| Error::Config(format!("{origin}:{}: expected `key = value`", n + 1)))?;
        if active {
            out.insert(normalize(k), v.trim().to_string());
        }
    }
    Ok(out)
}

impl RunConfig {
    /// `spec` is the subcommand definition; it lists every accepted key,
    /// including optional flags that `matches` omits when unset.
    pub fn resolve(command: &str, spec: &Command, matches: &ArgMatches) -> Result<Self> {
        let known: BTreeSet<String> = spec.get_arguments().map(|a| normalize(a.get_id().as_str())).collect();
        let mut defaults = BTreeMap::new();
        let mut flags = BTreeMap::new();
        for id in matches.ids() {
            let key = normalize(id.as_str());
            if !known.contains(&key) {
                continue;
            }
            let Some(source) = matches.value_source(id.as_str()) else { continue };
            let Ok(Some(raw)) = matches.try_get_raw(id.as_str()) else { continue };
            let value = raw.map(|v| v.to_string_lossy().into_owned()).collect::<Vec<_>>().join(",");
            match source {
                ValueSource::CommandLine => flags.insert(key, value),
                _ => defaults.insert(key, value),
            };
        }
        let file = match flags.get("config") {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read config file {path}: {e}")))?;
                parse_config_file(&text, path, command)?
            }
            None => BTreeMap::new(),
        };
        let mut settings = defaults.clone();
        let mut explicit = BTreeSet::new();
        for (k, v) in file.into_iter().chain(flags) {
            if k == "config" {
                continue;
            }
            if !known.contains(&k) {
                return Err(Error::Config(format!("unknown setting `{k}` for `{command}`")));
            }
            explicit.insert(k.clone());
            settings.insert(k, v);
        }
        Ok(RunConfig { command: command.to_string(), settings, defaults, explicit })
    }

    /// Whether the config file or a flag set `key` to something other than its
    /// default. Restating a default (as a written run_config.ini does) is not
    /// explicit.
    pub fn explicit(&self, key: &str) -> bool {
        self.explicit.contains(key) && self.settings.get(key) != self.defaults.get(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.settings.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| Error::Config(format!("invalid --{key} `{v}`: {e}"))))
            .transpose()
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.opt(key)?.ok_or_else(|| Error::Config(format!("--{key} is required")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<T>().map_err(|e| Error::Config(format!("invalid --{key} entry `{s}`: {e}"))))
                .collect(),
        }
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        Ok(self.opt::<bool>(key)?.unwrap_or(false))
    }

    /// The configuration embedded in artifacts.
    pub fn to_json(&self) -> serde_json::Value {
        let settings: serde_json::Map<String, serde_json::Value> = self
            .settings
            .iter()
            .filter(|(k, _)| !LOCATION_KEYS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
            .collect();
        serde_json::json!({ "command": self.command, "settings": settings })
    }

    /// Config-file form that reproduces this run when passed back via `--config`.
    pub fn to_config_text(&self) -> String {
        let mut out = format!("[{}]\n", self.command);
        for (k, v) in &self.settings {
            if !LOCATION_KEYS.contains(&k.as_str()) {
                out += &format!("{k} = {v}\n");
            }
        }
        out
    }

    pub fn write_files(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
        let path = dir.join("run_config.ini");
        std::fs::write(&path, self.to_config_text()).map_err(|e| Error::Io { path, source: e })
    }
}
