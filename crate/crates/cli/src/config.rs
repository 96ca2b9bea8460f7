//! Resolved per-command settings.
//!
//! Every command starts from built-in defaults, applies its section of the
//! optional TOML file (`[datagen]`, `[train]`, `[eval]`, `[plot]`) and then
//! the command-line flags that were actually given.

use std::path::{Path, PathBuf};

use objdyn::pipeline::{EvalMode, TrainConfig};
use objdyn::sim::Role;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatagenConfig {
    pub role: Role,
    pub count: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub out: Option<PathBuf>,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        DatagenConfig {
            role: Role::Train3,
            count: 20,
            seed: 0,
            width: 32,
            height: 24,
            out: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Continue after the latest stage checkpoint in `out`.
    pub resume: bool,
    #[serde(flatten)]
    pub train: TrainConfig,
}

/// Stand-in predictors for checking the evaluation plumbing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Stub {
    /// Echoes the recorded masks (mean IoU 1).
    Oracle,
    /// Predicts empty masks.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub checkpoint: Option<PathBuf>,
    pub stub: Option<Stub>,
    pub data: Vec<PathBuf>,
    pub horizon: usize,
    pub mode: EvalMode,
    /// Loop-back mode; `None` uses the variant default.
    pub reencode: Option<bool>,
    /// Recorded in the report to tell training seeds apart.
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            checkpoint: None,
            stub: None,
            data: Vec::new(),
            horizon: 1,
            mode: EvalMode::Sliding,
            reencode: None,
            seed: 0,
            out: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    pub inputs: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    /// Only plot rows of this horizon.
    pub horizon: Option<usize>,
    pub title: Option<String>,
}

/// The parsed TOML file, kept as raw tables until a command picks its
/// section.
#[derive(Debug, Default)]
pub struct ConfigFile {
    table: toml::Table,
    path: PathBuf,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table = text.parse().map_err(|e| {
            Failure::usage(format!("config {} is not valid TOML: {e}", path.display()))
        })?;
        for key in table.keys() {
            if !["datagen", "train", "eval", "plot"].contains(&key.as_str()) {
                return Err(Failure::usage(format!(
                    "config {}: unknown section `{key}`",
                    path.display()
                )));
            }
        }
        Ok(ConfigFile {
            table,
            path: path.to_owned(),
        })
    }

    /// Defaults overlaid with `[section]`.
    pub fn section<T: DeserializeOwned + Default>(&self, section: &str) -> Result<T, Failure> {
        match self.table.get(section) {
            None => Ok(T::default()),
            Some(v) => v.clone().try_into().map_err(|e| {
                Failure::usage(format!("config {} [{section}]: {e}", self.path.display()))
            }),
        }
    }
}

/// Overwrites `slot` when the flag was given.
pub fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

pub fn required<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, Failure> {
    value
        .as_deref()
        .ok_or_else(|| Failure::usage(format!("missing {what} (flag or config file)")))
}
