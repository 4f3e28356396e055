//! Run configuration files.
//!
//! A run file is TOML with an optional `preset` key and three sections:
//!
//! ```toml
//! preset = "tuned"            # or "paper-default" (the default)
//!
//! [train]                     # any TrainConfig key
//! total_batches = 20000
//! [train.arch]                # ArchConfig keys
//! dim = 32
//! [train.weights]             # LossWeights keys
//! gamma_id = 0.01
//! [train.toggles]             # LossToggles keys
//! cycle_mm = false
//!
//! [data]
//! x_embeddings = "x.txt"
//! y_embeddings = "y.txt"
//! constraints = "constraints.txt"
//! benchmarks = [{ path = "simlex.txt", format = "simlex", name = "SL" }]
//!
//! [synthetic]                 # SyntheticSpec keys, used by --synthetic
//! vocab_size = 2000
//! ```
//!
//! Keys given in `[train]` override the preset key by key; every table
//! rejects unknown keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::DatasetFormat;
use crate::synthetic::SyntheticSpec;
use crate::trainer::TrainConfig;

pub const DEFAULT_PRESET: &str = "paper-default";

/// A benchmark file and the layout it uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkEntry {
    pub path: PathBuf,
    /// Format preset name: simlex, simverb, card660 or tsv.
    #[serde(default = "default_format")]
    pub format: String,
    /// Report name; defaults to the file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

fn default_format() -> String {
    "tsv".into()
}

impl BenchmarkEntry {
    /// Parses `PATH` or `PATH:FORMAT`.
    pub fn from_arg(arg: &str) -> Result<Self> {
        let (path, format) = match arg.rsplit_once(':') {
            Some((p, f)) if DatasetFormat::preset(f).is_ok() => (p, f.to_string()),
            _ => (arg, default_format()),
        };
        Ok(BenchmarkEntry {
            path: PathBuf::from(path),
            format,
            name: None,
        })
    }

    pub fn dataset_format(&self) -> Result<DatasetFormat> {
        DatasetFormat::preset(&self.format)
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_embeddings: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_embeddings: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraints: Option<PathBuf>,
    pub benchmarks: Vec<BenchmarkEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub preset: String,
    pub train: TrainConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub synthetic: SyntheticSpec,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        RunConfigFile {
            preset: DEFAULT_PRESET.into(),
            train: TrainConfig::paper_default(),
            data: DataConfig::default(),
            synthetic: SyntheticSpec::default(),
        }
    }
}

/// Overlays `top` onto `base`, recursing into tables present in both.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfigFile {
    /// Built-in configuration for a preset name.
    pub fn from_preset(preset: &str) -> Result<Self> {
        Ok(RunConfigFile {
            preset: preset.to_string(),
            train: TrainConfig::preset(preset)?,
            ..Self::default()
        })
    }

    /// Parses a run file, layering its `[train]` keys over the preset it
    /// names (or over `fallback_preset` when it names none).
    pub fn parse_with_preset(text: &str, fallback_preset: &str) -> Result<Self> {
        Self::resolve(Some(text), fallback_preset, None)
    }

    /// Builds the effective configuration. The preset is `preset_override`
    /// if given, else the file's `preset` key, else `fallback_preset`; keys
    /// in the file's `[train]` table are then applied over it.
    pub fn resolve(
        text: Option<&str>,
        fallback_preset: &str,
        preset_override: Option<&str>,
    ) -> Result<Self> {
        let mut doc: toml::Table = match text {
            Some(t) => toml::from_str(t).map_err(|e| Error::Config(format!("run config: {e}")))?,
            None => toml::Table::new(),
        };
        let preset = match (preset_override, doc.remove("preset")) {
            (Some(p), _) => p.to_string(),
            (None, None) => fallback_preset.to_string(),
            (None, Some(toml::Value::String(s))) => s,
            (None, Some(_)) => return Err(Error::Config("`preset` must be a string".into())),
        };
        let base = TrainConfig::preset(&preset)?;
        let mut train = toml::Table::try_from(&base)
            .map_err(|e| Error::Config(format!("serializing preset: {e}")))?;
        match doc.remove("train") {
            None => {}
            Some(toml::Value::Table(t)) => merge(&mut train, t),
            Some(_) => return Err(Error::Config("`train` must be a table".into())),
        }
        doc.insert("train".into(), toml::Value::Table(train));
        doc.insert("preset".into(), toml::Value::String(preset));
        let cfg: RunConfigFile = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("run config: {e}")))?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_preset(text, DEFAULT_PRESET)
    }

    pub fn load(path: impl AsRef<Path>, fallback_preset: &str) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_with_preset(&text, fallback_preset)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("serializing run config: {e}")))
    }
}
