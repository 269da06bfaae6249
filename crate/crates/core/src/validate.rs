//! Input bundle diagnostics. Every problem becomes a failed check; nothing panics
//! or aborts on malformed input.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::audit::{align_prompts, load_taxonomy};
use crate::config::AuditConfig;
use crate::corpus::embeddings::{load_embeddings, Kind, Manifest};
use crate::corpus::labels::LabelTable;
use crate::corpus::taxonomy::Taxonomy;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub target: String,
    pub check: String,
    /// `None` when the check passed, else the error kind and message.
    pub failure: Option<(String, String)>,
}

impl Check {
    fn new(target: &Path, check: &str, outcome: Result<()>) -> Self {
        Self {
            target: target.display().to_string(),
            check: check.to_string(),
            failure: outcome.err().map(|e| (e.kind().to_string(), e.to_string())),
        }
    }

    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Default)]
struct Session {
    checks: Vec<Check>,
    taxonomy: Option<(PathBuf, Taxonomy)>,
    labels: Vec<(PathBuf, LabelTable)>,
    images: Vec<(PathBuf, Manifest)>,
    prompts: Vec<(PathBuf, Manifest)>,
}

impl Session {
    fn record<T>(&mut self, target: &Path, check: &str, outcome: Result<T>) -> Option<T> {
        match outcome {
            Ok(v) => {
                self.checks.push(Check::new(target, check, Ok(())));
                Some(v)
            }
            Err(e) => {
                self.checks.push(Check::new(target, check, Err(e)));
                None
            }
        }
    }

    fn embedding(&mut self, path: &Path) -> Option<Manifest> {
        let (_, manifest) = self.record(path, "embedding file + manifest", load_embeddings(path))?;
        match manifest.kind {
            Kind::Image => self.images.push((path.to_path_buf(), manifest.clone())),
            Kind::Prompt => self.prompts.push((path.to_path_buf(), manifest.clone())),
        }
        Some(manifest)
    }

    fn labels(&mut self, path: &Path) {
        if let Some(t) = self.record(path, "label CSV", LabelTable::read_csv(path)) {
            self.labels.push((path.to_path_buf(), t));
        }
    }

    fn taxonomy(&mut self, path: &Path) {
        if let Some(t) = self.record(path, "taxonomy", Taxonomy::read(path)) {
            self.taxonomy = Some((path.to_path_buf(), t));
        }
    }

    fn config(&mut self, path: &Path) {
        let Some(config) = self.record(path, "audit config", AuditConfig::read(path).and_then(|c| c.validate().map(|_| c)))
        else {
            return;
        };
        match &config.taxonomy {
            Some(p) => self.taxonomy(&config.resolve(p)),
            None => {
                let t = load_taxonomy(&config).expect("bundled taxonomy loads");
                self.taxonomy = Some((PathBuf::from("<bundled taxonomy>"), t));
            }
        }
        self.labels(&config.resolve(&config.labels));
        for m in &config.models {
            let images = self.embedding(&config.resolve(&m.images));
            let prompts = self.embedding(&config.resolve(&m.prompts));
            let target = PathBuf::from(format!("{} (model {})", path.display(), m.model_id));
            if let (Some(i), Some(p)) = (images, prompts) {
                let consistent = model_consistency(&m.model_id, &i, &p, config.k);
                self.record(&target, "model manifests consistent", consistent);
            }
        }
    }

    fn json(&mut self, path: &Path) {
        let value = fs::read_to_string(path)
            .map_err(|e| Error::from(e).at(path))
            .and_then(|s| serde_json::from_str::<serde_json::Value>(&s).map_err(|e| Error::from(e).at(path)));
        let Some(value) = self.record(path, "JSON syntax", value) else {
            return;
        };
        if value.get("models").is_some() {
            self.config(path);
        } else if value.get("categories").is_some() {
            self.taxonomy(path);
        } else if value.get("checksum").is_some() && value.get("ids").is_some() {
            let binary = path.with_extension("");
            self.embedding(&binary);
        } else {
            self.record(
                path,
                "recognized JSON document",
                Err::<(), _>(Error::InvalidConfig("not an audit config, taxonomy or manifest".into())),
            );
        }
    }

    fn path(&mut self, path: &Path) {
        let mut magic = [0u8; 4];
        let head = fs::File::open(path).and_then(|mut f| f.read(&mut magic));
        let Some(read) = self.record(path, "readable", head.map_err(|e| Error::from(e).at(path))) else {
            return;
        };
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        if read == 4 && &magic == b"EMB1" || ext == "emb" {
            self.embedding(path);
        } else if ext == "csv" {
            self.labels(path);
        } else if ext == "json" {
            self.json(path);
        } else {
            self.record(
                path,
                "recognized file type",
                Err::<(), _>(Error::InvalidConfig("expected .emb, .csv or .json".into())),
            );
        }
    }

    fn cross_checks(&mut self) {
        let labels = std::mem::take(&mut self.labels);
        let images = std::mem::take(&mut self.images);
        let prompts = std::mem::take(&mut self.prompts);
        for (lpath, table) in &labels {
            for (ipath, manifest) in &images {
                let target = PathBuf::from(format!("{} vs {}", lpath.display(), ipath.display()));
                self.record(&target, "label totality", table.check_covers(manifest));
            }
        }
        let taxonomy = self
            .taxonomy
            .clone()
            .unwrap_or_else(|| (PathBuf::from("<bundled taxonomy>"), Taxonomy::default_healthcare()));
        for (ppath, manifest) in &prompts {
            let target = PathBuf::from(format!("{} vs {}", taxonomy.0.display(), ppath.display()));
            self.record(&target, "taxonomy/prompt alignment", align_prompts(&taxonomy.1, manifest).map(|_| ()));
        }
    }
}

fn model_consistency(model_id: &str, images: &Manifest, prompts: &Manifest, k: usize) -> Result<()> {
    for m in [images, prompts] {
        if m.model_id != model_id {
            return Err(Error::ManifestMismatch(format!(
                "manifest model_id {:?} differs from configured {:?}",
                m.model_id, model_id
            )));
        }
    }
    if images.kind != Kind::Image || prompts.kind != Kind::Prompt {
        return Err(Error::ManifestMismatch("images/prompts manifests have the wrong kind".into()));
    }
    if images.dim != prompts.dim {
        return Err(Error::DimMismatch {
            left: images.dim,
            right: prompts.dim,
        });
    }
    if k as u64 > images.count {
        return Err(Error::KExceedsCorpus {
            k,
            count: images.count as usize,
        });
    }
    Ok(())
}

/// Validates each path (embedding file, manifest, label CSV, taxonomy or audit
/// config), then cross-checks labels against image manifests and prompt
/// manifests against the taxonomy.
pub fn validate_paths(paths: &[PathBuf]) -> Vec<Check> {
    let mut session = Session::default();
    for p in paths {
        session.path(p);
    }
    session.cross_checks();
    session.checks
}

pub fn all_passed(checks: &[Check]) -> bool {
    !checks.is_empty() && checks.iter().all(Check::passed)
}

/// Plain-text table, one line per check.
pub fn render_checks(checks: &[Check]) -> String {
    let mut out = String::new();
    let width = checks.iter().map(|c| c.check.len()).max().unwrap_or(5).max(5);
    for c in checks {
        match &c.failure {
            None => out.push_str(&format!("PASS  {:width$}  {}\n", c.check, c.target)),
            Some((kind, msg)) => out.push_str(&format!(
                "FAIL  {:width$}  {}\n      {kind}: {msg}\n",
                c.check, c.target
            )),
        }
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    out.push_str(&format!("{} checks, {} failed\n", checks.len(), failed));
    out
}
