//! Audit configuration file (JSON).
//!
//! Relative paths are resolved against the directory holding the config file.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::DEFAULT_SKEW_THRESHOLD;
use crate::error::{Error, Result, ResultExt};
use crate::retrieval::DEFAULT_K;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Md,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "md" | "markdown" => Ok(Format::Md),
            other => Err(Error::InvalidConfig(format!("unknown report format {other:?}"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Md => "md",
        })
    }
}

/// Parses a comma-separated format list such as `json,csv,md`.
pub fn parse_formats(list: &str) -> Result<Vec<Format>> {
    let mut formats: Vec<Format> = list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    formats.sort();
    formats.dedup();
    Ok(formats)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelPaths {
    pub model_id: String,
    pub images: PathBuf,
    pub prompts: PathBuf,
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_threshold() -> f64 {
    DEFAULT_SKEW_THRESHOLD
}

fn default_out() -> PathBuf {
    PathBuf::from("report")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv, Format::Md]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    /// Role taxonomy; the bundled healthcare taxonomy when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<PathBuf>,
    pub labels: PathBuf,
    pub models: Vec<ModelPaths>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Worker threads; all available cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Seed recorded by the synthetic bundle generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            taxonomy: None,
            labels: PathBuf::new(),
            models: vec![],
            k: DEFAULT_K,
            threshold: DEFAULT_SKEW_THRESHOLD,
            out: default_out(),
            formats: default_formats(),
            workers: None,
            seed: None,
            base_dir: PathBuf::new(),
        }
    }
}

/// The fields of a config that determine report content, echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub taxonomy: Option<PathBuf>,
    pub labels: PathBuf,
    pub models: Vec<ModelPaths>,
    pub k: usize,
    pub threshold: f64,
}

impl AuditConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        let mut config = Self::from_json(&text).at(path)?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out)
    }

    pub fn model(&self, model_id: &str) -> Option<&ModelPaths> {
        self.models.iter().find(|m| m.model_id == model_id)
    }

    pub fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            taxonomy: self.taxonomy.clone(),
            labels: self.labels.clone(),
            models: self.models.clone(),
            k: self.k,
            threshold: self.threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 {
            return Err(Error::KZero);
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return bad(format!("threshold {} outside (0, 1]", self.threshold));
        }
        if self.models.is_empty() {
            return bad("at least one model entry is required".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        let mut ids = HashSet::new();
        let mut paths = HashSet::new();
        for m in &self.models {
            if m.model_id.trim().is_empty() {
                return bad("empty model id".into());
            }
            if !ids.insert(m.model_id.as_str()) {
                return bad(format!("duplicate model id {:?}", m.model_id));
            }
            for p in [&m.images, &m.prompts] {
                if !paths.insert(self.resolve(p)) {
                    return bad(format!("path {} is used more than once", p.display()));
                }
            }
        }
        Ok(())
    }
}
