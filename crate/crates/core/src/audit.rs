//! End-to-end audit: load, normalize, retrieve, score, analyze, report.

use std::path::Path;

use crate::analysis::{DimensionScores, ModelRoleAudit, RoleAudit};
use crate::config::AuditConfig;
use crate::corpus::embeddings::{load_embeddings, EmbeddingMatrix, Kind, Manifest};
use crate::corpus::labels::LabelTable;
use crate::corpus::taxonomy::Taxonomy;
use crate::error::{Error, Result, ResultExt};
use crate::metrics::{bias_against_uniform, demographic_distribution, Dimension};
use crate::report::{write_report, BiasReport, CorpusInfo};
use crate::retrieval::{normalize, top_k_batch, RetrievalResult};

/// Everything one model contributes to an audit.
#[derive(Debug, Clone)]
pub struct ModelOutcome {
    pub corpus: CorpusInfo,
    /// Taxonomy order.
    pub roles: Vec<ModelRoleAudit>,
    pub retrievals: Vec<RetrievalResult>,
}

/// Maps each taxonomy role (in taxonomy order) to its row in the prompt matrix.
pub fn align_prompts(taxonomy: &Taxonomy, prompt_manifest: &Manifest) -> Result<Vec<usize>> {
    let roles = taxonomy.role_names();
    let mut rows: Vec<Option<usize>> = vec![None; roles.len()];
    for (row, id) in prompt_manifest.ids.iter().enumerate() {
        let canonical = taxonomy.canonical(id).ok_or_else(|| Error::UnknownRole(id.clone()))?;
        let slot = roles.iter().position(|r| *r == canonical).expect("canonical names come from the taxonomy");
        if rows[slot].replace(row).is_some() {
            return Err(Error::DuplicateRole(canonical.to_string()));
        }
    }
    rows.into_iter()
        .zip(&roles)
        .map(|(row, role)| row.ok_or_else(|| Error::MissingPrompt(role.to_string())))
        .collect()
}

fn check_manifests(model_id: &str, images: &Manifest, prompts: &Manifest) -> Result<()> {
    for (m, kind) in [(images, Kind::Image), (prompts, Kind::Prompt)] {
        if m.model_id != model_id {
            return Err(Error::ManifestMismatch(format!(
                "manifest model_id {:?} does not match configured model {:?}",
                m.model_id, model_id
            )));
        }
        if m.kind != kind {
            return Err(Error::ManifestMismatch(format!("expected a {kind:?} manifest, found {:?}", m.kind)));
        }
    }
    if images.dim != prompts.dim {
        return Err(Error::DimMismatch {
            left: images.dim,
            right: prompts.dim,
        });
    }
    Ok(())
}

/// Retrieves the top-k images for every role prompt of one model and scores them.
///
/// Both matrices are normalized here; callers may pass raw embeddings.
#[allow(clippy::too_many_arguments)]
pub fn audit_model(
    taxonomy: &Taxonomy,
    labels: &LabelTable,
    model_id: &str,
    images: EmbeddingMatrix,
    image_manifest: &Manifest,
    prompts: EmbeddingMatrix,
    prompt_manifest: &Manifest,
    k: usize,
) -> Result<ModelOutcome> {
    check_manifests(model_id, image_manifest, prompt_manifest)?;
    labels.check_covers(image_manifest)?;
    let prompt_rows = align_prompts(taxonomy, prompt_manifest)?;
    let images = normalize(images)?;
    let prompts = normalize(prompts)?;
    let mut hits_per_prompt = top_k_batch(&images, image_manifest, &prompts, k)?;

    let mut roles = Vec::with_capacity(prompt_rows.len());
    let mut retrievals = Vec::with_capacity(prompt_rows.len());
    for (role, row) in taxonomy.role_names().into_iter().zip(prompt_rows) {
        let hits = std::mem::take(&mut hits_per_prompt[row]);
        let dist = |d: Dimension| demographic_distribution(&hits, labels, d);
        let (gender, race, age, joint) = (
            dist(Dimension::Gender)?,
            dist(Dimension::Race)?,
            dist(Dimension::Age)?,
            dist(Dimension::Joint)?,
        );
        let bias = DimensionScores {
            gender: bias_against_uniform(&gender),
            race: bias_against_uniform(&race),
            age: bias_against_uniform(&age),
            joint: bias_against_uniform(&joint),
        };
        roles.push(ModelRoleAudit {
            model_id: model_id.to_string(),
            k,
            gender,
            race,
            age,
            joint,
            bias,
        });
        retrievals.push(RetrievalResult {
            model_id: model_id.to_string(),
            role: role.to_string(),
            k,
            hits,
        });
    }
    Ok(ModelOutcome {
        corpus: CorpusInfo {
            model_id: model_id.to_string(),
            dim: image_manifest.dim,
            image_count: image_manifest.count,
            image_checksum: format!("{:016x}", image_manifest.checksum),
            prompt_count: prompt_manifest.count,
            prompt_checksum: format!("{:016x}", prompt_manifest.checksum),
        },
        roles,
        retrievals,
    })
}

/// Regroups per-model outcomes into per-role audits, in taxonomy order.
pub fn role_audits(taxonomy: &Taxonomy, outcomes: &[ModelOutcome]) -> Vec<RoleAudit> {
    taxonomy
        .role_names()
        .into_iter()
        .enumerate()
        .map(|(i, role)| RoleAudit {
            role: role.to_string(),
            per_model: outcomes.iter().map(|o| o.roles[i].clone()).collect(),
        })
        .collect()
}

/// Runs `f` on a pool with `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn load_taxonomy(config: &AuditConfig) -> Result<Taxonomy> {
    match &config.taxonomy {
        Some(p) => Taxonomy::read(&config.resolve(p)),
        None => Ok(Taxonomy::default_healthcare()),
    }
}

/// Loads one configured model and audits it.
pub fn audit_configured_model(
    config: &AuditConfig,
    taxonomy: &Taxonomy,
    labels: &LabelTable,
    index: usize,
) -> Result<ModelOutcome> {
    let m = &config.models[index];
    let image_path = config.resolve(&m.images);
    let prompt_path = config.resolve(&m.prompts);
    let (images, image_manifest) = load_embeddings(&image_path)?;
    let (prompts, prompt_manifest) = load_embeddings(&prompt_path)?;
    labels.check_covers(&image_manifest).at(config.resolve(&config.labels))?;
    audit_model(
        taxonomy,
        labels,
        &m.model_id,
        images,
        &image_manifest,
        prompts,
        &prompt_manifest,
        config.k,
    )
    .at(&image_path)
}

/// Loads every input named by `config` and builds the report, writing nothing.
pub fn build_report(config: &AuditConfig) -> Result<BiasReport> {
    config.validate()?;
    with_workers(config.workers, || {
        let taxonomy = load_taxonomy(config)?;
        let labels = LabelTable::read_csv(&config.resolve(&config.labels))?;
        let outcomes = (0..config.models.len())
            .map(|i| audit_configured_model(config, &taxonomy, &labels, i))
            .collect::<Result<Vec<_>>>()?;
        BiasReport::assemble(&taxonomy, &labels, outcomes, config.echo(), config.threshold)
    })?
}

/// Full pipeline. Report files are written only if every step succeeds.
pub fn run_audit(config: &AuditConfig) -> Result<BiasReport> {
    let report = build_report(config)?;
    write_report(&report, &config.formats, &config.out_dir())?;
    Ok(report)
}

/// Top-k for one (model, role) pair, for debugging.
pub fn debug_top_k(config: &AuditConfig, model_id: &str, role: &str) -> Result<RetrievalResult> {
    config.validate()?;
    let index = config
        .models
        .iter()
        .position(|m| m.model_id == model_id)
        .ok_or_else(|| Error::InvalidConfig(format!("no model {model_id:?} in config")))?;
    let taxonomy = load_taxonomy(config)?;
    let canonical = taxonomy
        .canonical(role)
        .ok_or_else(|| Error::UnknownRole(role.to_string()))?
        .to_string();
    let labels = LabelTable::read_csv(&config.resolve(&config.labels))?;
    let outcome = with_workers(config.workers, || audit_configured_model(config, &taxonomy, &labels, index))??;
    Ok(outcome
        .retrievals
        .into_iter()
        .find(|r| r.role == canonical)
        .expect("every taxonomy role is retrieved"))
}

pub fn config_from_path(path: &Path) -> Result<AuditConfig> {
    let config = AuditConfig::read(path)?;
    config.validate().at(path)?;
    Ok(config)
}
