//! The audit report and its serialized forms.

mod render;
mod write;

pub use render::{render_files, render_json, render_markdown, PLOTDATA_FILES, TABLE_FILES};
pub use write::{write_files, write_report};

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh64::xxh64;

use crate::analysis::{
    average_across_models, dominant_category, gender_volatility, min_threshold, mine_intersections, skew_flags,
    AveragedRole, DimensionScores, IntersectionFinding, ModelRoleAudit, SkewFlag, VolatilityEntry,
};
use crate::audit::{role_audits, ModelOutcome};
use crate::config::ConfigEcho;
use crate::corpus::labels::LabelTable;
use crate::corpus::taxonomy::Taxonomy;
use crate::error::{Error, Result};
use crate::metrics::{bias_against_uniform, Dimension};
use crate::retrieval::RetrievalResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self {
            name: "vlmaudit".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

/// Fixed conventions, recorded so a report can be read without the tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub similarity: String,
    pub tie_break: String,
    pub divergence: String,
    pub averaging: String,
    pub volatility: String,
    pub dominant_tie_break: String,
    pub skew_rule: String,
    pub skew_dimensions: Vec<Dimension>,
    pub joint_dimension: String,
    pub category_order: CategoryOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryOrder {
    pub gender: Vec<String>,
    pub race: Vec<String>,
    pub age: Vec<String>,
}

impl Conventions {
    fn new(threshold: f64) -> Self {
        Self {
            similarity: "cosine of L2-normalized f32 vectors, accumulated in f64 in index order".into(),
            tie_break: "equal similarities rank by ascending image row index".into(),
            divergence: "Jensen-Shannon divergence from the uniform baseline in nats (max ln 2); normalized = nats / ln 2"
                .into(),
            averaging: "unweighted mean of per-model share vectors".into(),
            volatility: "population standard deviation (divide by model count) of male share".into(),
            dominant_tie_break: "equal shares resolve to the earliest category in canonical order".into(),
            skew_rule: format!("share >= {threshold} (inclusive)"),
            skew_dimensions: Dimension::MARGINALS
                .into_iter()
                .filter(|&d| threshold > min_threshold(d))
                .collect(),
            joint_dimension: "gender x race x age cells (42) scored against a 1/42 baseline; extension beyond the three marginal dimensions".into(),
            category_order: CategoryOrder {
                gender: Dimension::Gender.categories(),
                race: Dimension::Race.categories(),
                age: Dimension::Age.categories(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub model_id: String,
    pub dim: usize,
    pub image_count: u64,
    pub image_checksum: String,
    pub prompt_count: u64,
    pub prompt_checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dominant {
    pub gender: String,
    pub race: String,
    pub age: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleReport {
    pub role: String,
    pub category: String,
    pub subcategory: Option<String>,
    pub averaged: AveragedRole,
    pub dominant: Dominant,
    /// Bias scores of the averaged vectors.
    pub averaged_bias: DimensionScores,
    pub per_model: Vec<ModelRoleAudit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub tool: ToolInfo,
    pub config: ConfigEcho,
    pub conventions: Conventions,
    pub labels_rows: usize,
    pub labels_checksum: String,
    pub corpus: Vec<CorpusInfo>,
    pub models: Vec<String>,
    pub roles: Vec<RoleReport>,
    /// Absent when fewer than two models were audited.
    pub volatility: Option<Vec<VolatilityEntry>>,
    pub skew_flags: Vec<SkewFlag>,
    pub intersections: Vec<IntersectionFinding>,
    pub retrievals: Vec<RetrievalResult>,
}

impl BiasReport {
    pub fn assemble(
        taxonomy: &Taxonomy,
        labels: &LabelTable,
        outcomes: Vec<ModelOutcome>,
        config: ConfigEcho,
        threshold: f64,
    ) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::EmptyModelSet);
        }
        let audits = role_audits(taxonomy, &outcomes);
        let conventions = Conventions::new(threshold);

        let mut roles = Vec::with_capacity(audits.len());
        let mut flags = Vec::new();
        for (audit, entry) in audits.iter().zip(taxonomy.entries()) {
            let averaged = average_across_models(audit)?;
            for &d in &conventions.skew_dimensions {
                flags.extend(skew_flags(&audit.role, None, averaged.vector(d), threshold)?);
                for m in &audit.per_model {
                    flags.extend(skew_flags(&audit.role, Some(&m.model_id), m.vector(d), threshold)?);
                }
            }
            roles.push(RoleReport {
                role: audit.role.clone(),
                category: entry.category.to_string(),
                subcategory: entry.subcategory.map(str::to_string),
                dominant: Dominant {
                    gender: dominant_category(&averaged.gender),
                    race: dominant_category(&averaged.race),
                    age: dominant_category(&averaged.age),
                },
                averaged_bias: DimensionScores {
                    gender: bias_against_uniform(&averaged.gender),
                    race: bias_against_uniform(&averaged.race),
                    age: bias_against_uniform(&averaged.age),
                    joint: bias_against_uniform(&averaged.joint),
                },
                averaged,
                per_model: audit.per_model.clone(),
            });
        }

        let volatility = if outcomes.len() >= 2 {
            Some(gender_volatility(&audits)?)
        } else {
            None
        };
        let intersections = mine_intersections(&audits);
        let models = outcomes.iter().map(|o| o.corpus.model_id.clone()).collect();
        let mut corpus = Vec::with_capacity(outcomes.len());
        let mut retrievals = Vec::new();
        for o in outcomes {
            corpus.push(o.corpus);
            retrievals.extend(o.retrievals);
        }
        Ok(BiasReport {
            tool: ToolInfo::default(),
            config,
            conventions,
            labels_rows: labels.len(),
            labels_checksum: format!("{:016x}", xxh64(labels.to_csv_string().as_bytes(), 0)),
            corpus,
            models,
            roles,
            volatility,
            skew_flags: flags,
            intersections,
            retrievals,
        })
    }

    pub fn role(&self, name: &str) -> Option<&RoleReport> {
        self.roles.iter().find(|r| r.role == name)
    }
}
