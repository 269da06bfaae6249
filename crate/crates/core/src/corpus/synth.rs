//! Synthetic corpora with a planted, analytically known top-k composition.
//!
//! Every pseudo-model embeds its prompts on distinct coordinate axes. For each
//! (model, role) pair a dedicated block of `k` images is placed at cosine
//! similarity `>= t + gap` to that role's prompt, where `t` bounds the
//! similarity of every other image to that prompt. The labels of each block
//! follow the planted group shares, so the exact top-k retrieval set of every
//! (model, role) is known by construction. A per-model signed coordinate
//! permutation keeps the pseudo-models' spaces distinct.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embeddings::{write_embeddings, EmbeddingMatrix, Kind, Manifest};
use super::labels::{AgeBand, AgeBucket, Gender, Label, LabelTable, Race};
use super::taxonomy::Taxonomy;
use crate::config::{AuditConfig, ModelPaths};
use crate::error::{Error, Result};

const SHARE_TOL: f64 = 1e-9;
const MIN_GAP: f64 = 1e-3;

fn default_k() -> usize {
    100
}

fn default_gap() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedGroup {
    pub gender: Gender,
    pub race: Race,
    pub age: AgeBucket,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRole {
    pub role: String,
    pub groups: Vec<PlantedGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedModel {
    pub model_id: String,
    pub roles: Vec<PlantedRole>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Number of images in the corpus.
    pub n: usize,
    pub dim: usize,
    /// Size of the planted top-k block per (model, role).
    #[serde(default = "default_k")]
    pub k: usize,
    /// Minimum cosine margin between planted images and everything else.
    #[serde(default = "default_gap")]
    pub gap: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    pub models: Vec<PlantedModel>,
}

impl SynthSpec {
    /// One model, one role, with the given groups.
    pub fn single(n: usize, dim: usize, k: usize, model_id: &str, role: &str, groups: Vec<PlantedGroup>) -> Self {
        SynthSpec {
            n,
            dim,
            k,
            gap: default_gap(),
            seed: None,
            models: vec![PlantedModel {
                model_id: model_id.to_string(),
                roles: vec![PlantedRole {
                    role: role.to_string(),
                    groups,
                }],
            }],
        }
    }

    pub fn roles(&self) -> Vec<&str> {
        self.models
            .first()
            .map(|m| m.roles.iter().map(|r| r.role.as_str()).collect())
            .unwrap_or_default()
    }

    /// Bound on the similarity of any non-planted image to a prompt.
    fn background_bound(&self) -> f64 {
        (0.9 / (self.roles().len() as f64).sqrt()).min(0.5)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSynthSpec(msg));
        if self.models.is_empty() {
            return bad("at least one model is required".into());
        }
        if self.k == 0 {
            return Err(Error::KZero);
        }
        let roles = self.roles();
        if roles.is_empty() {
            return bad("at least one role is required".into());
        }
        let unique: HashSet<&str> = roles.iter().copied().collect();
        if unique.len() != roles.len() || roles.iter().any(|r| r.trim().is_empty()) {
            return bad("role names must be non-empty and unique".into());
        }
        let mut ids = HashSet::new();
        for m in &self.models {
            if !ids.insert(m.model_id.as_str()) {
                return bad(format!("duplicate model id {:?}", m.model_id));
            }
            let these: Vec<&str> = m.roles.iter().map(|r| r.role.as_str()).collect();
            if these != roles {
                return bad(format!("model {:?} does not plant the same roles as the first model", m.model_id));
            }
        }
        if self.dim < 2 || self.dim < roles.len() + 1 {
            return bad(format!("dim {} must be at least 2 and exceed the role count {}", self.dim, roles.len()));
        }
        let planted = self.models.len() * roles.len() * self.k;
        if self.n < self.k || self.n < planted {
            return bad(format!(
                "n = {} is too small: need at least {} images ({} models x {} roles x k = {})",
                self.n,
                planted,
                self.models.len(),
                roles.len(),
                self.k
            ));
        }
        let bound = self.background_bound();
        if !(self.gap >= MIN_GAP && bound + self.gap <= 0.9) {
            return bad(format!("gap {} must lie in [{MIN_GAP}, {}]", self.gap, 0.9 - bound));
        }
        for m in &self.models {
            for r in &m.roles {
                self.group_counts(r)?;
            }
        }
        Ok(())
    }

    /// Image counts per planted group; shares must sum to 1 and land on whole images.
    fn group_counts(&self, role: &PlantedRole) -> Result<Vec<usize>> {
        let what = |msg: String| Error::InvalidShares(format!("role {:?}: {msg}", role.role));
        if role.groups.is_empty() {
            return Err(what("no groups".into()));
        }
        let total: f64 = role.groups.iter().map(|g| g.share).sum();
        if (total - 1.0).abs() > SHARE_TOL {
            return Err(what(format!("shares sum to {total}, not 1")));
        }
        let mut counts = Vec::with_capacity(role.groups.len());
        for g in &role.groups {
            if g.share.is_nan() || g.share < 0.0 {
                return Err(what(format!("negative share {}", g.share)));
            }
            let exact = g.share * self.k as f64;
            let count = exact.round();
            if (exact - count).abs() > 1e-6 {
                return Err(what(format!("share {} of k = {} is not a whole number of images", g.share, self.k)));
            }
            counts.push(count as usize);
        }
        if counts.iter().sum::<usize>() != self.k {
            return Err(what(format!("group counts do not add up to k = {}", self.k)));
        }
        Ok(counts)
    }
}

pub fn image_id(i: usize) -> String {
    format!("img_{i:06}.jpg")
}

#[derive(Debug, Clone)]
pub struct SyntheticModel {
    pub model_id: String,
    pub images: EmbeddingMatrix,
    pub image_manifest: Manifest,
    pub prompts: EmbeddingMatrix,
    pub prompt_manifest: Manifest,
}

#[derive(Debug, Clone)]
pub struct SyntheticBundle {
    pub labels: LabelTable,
    pub taxonomy: Taxonomy,
    pub models: Vec<SyntheticModel>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Index of the first image in the planted block of (model, role).
fn block_start(spec: &SynthSpec, model: usize, role: usize) -> usize {
    (model * spec.roles().len() + role) * spec.k
}

/// Labels for the whole corpus: planted blocks follow their groups, the rest
/// is drawn uniformly over gender, race and raw age band.
pub fn generate_labels(spec: &SynthSpec, seed: Option<u64>) -> Result<LabelTable> {
    let seed = seed.or(spec.seed).ok_or(Error::SeedRequired)?;
    spec.validate()?;
    let mut planted: Vec<Option<Label>> = vec![None; spec.n];
    for (m, model) in spec.models.iter().enumerate() {
        for (r, role) in model.roles.iter().enumerate() {
            let mut i = block_start(spec, m, r);
            for (group, count) in role.groups.iter().zip(spec.group_counts(role)?) {
                let label = Label {
                    gender: group.gender,
                    race: group.race,
                    age: group.age.representative_band(),
                };
                for _ in 0..count {
                    planted[i] = Some(label);
                    i += 1;
                }
            }
        }
    }
    let mut rng = rng_for(seed, 0);
    let mut table = LabelTable::new();
    for (i, fixed) in planted.into_iter().enumerate() {
        let label = fixed.unwrap_or_else(|| Label {
            gender: *Gender::ALL.choose(&mut rng).unwrap(),
            race: *Race::ALL.choose(&mut rng).unwrap(),
            age: *AgeBand::ALL.choose(&mut rng).unwrap(),
        });
        table.insert(image_id(i), label)?;
    }
    Ok(table)
}

/// Fills `out` with a random direction of norm `length`.
fn random_direction(rng: &mut ChaCha8Rng, out: &mut [f64], length: f64) {
    loop {
        for x in out.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            out.iter_mut().for_each(|x| *x *= length / norm);
            return;
        }
    }
}

/// Image and prompt embeddings for model `model` of the spec.
pub fn generate_model(spec: &SynthSpec, seed: Option<u64>, model: usize) -> Result<SyntheticModel> {
    let seed = seed.or(spec.seed).ok_or(Error::SeedRequired)?;
    spec.validate()?;
    let planted = spec.models.get(model).ok_or_else(|| {
        Error::InvalidSynthSpec(format!("model index {model} out of range"))
    })?;
    let roles = spec.roles();
    let n_roles = roles.len();
    let dim = spec.dim;
    let bound = spec.background_bound();
    let lo = bound + spec.gap;
    let hi = (lo + 0.3).min(0.99);

    let mut rng = rng_for(seed, model as u64 + 1);
    // Signed permutation: logical axis j is stored at coordinate perm[j] with sign signs[j].
    let mut perm: Vec<usize> = (0..dim).collect();
    perm.shuffle(&mut rng);
    let signs: Vec<f64> = (0..dim).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();

    let mut owner = vec![None; spec.n];
    for r in 0..n_roles {
        let start = block_start(spec, model, r);
        owner[start..start + spec.k].iter_mut().for_each(|o| *o = Some(r));
    }

    let mut data = vec![0f32; spec.n * dim];
    let mut logical = vec![0f64; dim];
    for (i, row) in data.chunks_exact_mut(dim).enumerate() {
        logical.iter_mut().for_each(|x| *x = 0.0);
        let axis_energy = match owner[i] {
            Some(r) => {
                let s = rng.gen_range(lo..hi);
                logical[r] = s;
                s * s
            }
            None => {
                let mut e = 0.0;
                for x in &mut logical[..n_roles] {
                    *x = rng.gen_range(-bound..bound);
                    e += *x * *x;
                }
                e
            }
        };
        random_direction(&mut rng, &mut logical[n_roles..], (1.0 - axis_energy).sqrt());
        for (j, &x) in logical.iter().enumerate() {
            row[perm[j]] = (signs[j] * x) as f32;
        }
    }
    let images = EmbeddingMatrix::new(dim, data)?;
    let ids: Vec<String> = (0..spec.n).map(image_id).collect();
    let image_manifest = Manifest::new(&planted.model_id, Kind::Image, ids, &images);

    let mut pdata = vec![0f32; n_roles * dim];
    for (r, row) in pdata.chunks_exact_mut(dim).enumerate() {
        row[perm[r]] = signs[r] as f32;
    }
    let prompts = EmbeddingMatrix::new(dim, pdata)?;
    let prompt_manifest = Manifest::new(
        &planted.model_id,
        Kind::Prompt,
        roles.iter().map(|r| r.to_string()).collect(),
        &prompts,
    );
    Ok(SyntheticModel {
        model_id: planted.model_id.clone(),
        images,
        image_manifest,
        prompts,
        prompt_manifest,
    })
}

pub fn synthetic_taxonomy(spec: &SynthSpec) -> Result<Taxonomy> {
    Taxonomy::flat("Synthetic", &spec.roles())
}

/// Deterministic under `seed`; identical seeds give bit-identical bundles.
pub fn generate_synthetic_corpus(spec: &SynthSpec, seed: Option<u64>) -> Result<SyntheticBundle> {
    let labels = generate_labels(spec, seed)?;
    let models = (0..spec.models.len())
        .map(|m| generate_model(spec, seed, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticBundle {
        labels,
        taxonomy: synthetic_taxonomy(spec)?,
        models,
    })
}

/// The image rows planted for (model, role), in row order.
pub fn planted_rows(spec: &SynthSpec, model: usize, role: usize) -> std::ops::Range<usize> {
    let start = block_start(spec, model, role);
    start..start + spec.k
}

/// Writes a loadable bundle: labels, taxonomy, embeddings with manifests and an audit config.
pub fn write_bundle(bundle: &SyntheticBundle, k: usize, out: &Path) -> Result<AuditConfig> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Output { path, source }
    };
    std::fs::create_dir_all(out).map_err(io(out))?;
    let labels = out.join("labels.csv");
    std::fs::write(&labels, bundle.labels.to_csv_string()).map_err(io(&labels))?;
    let taxonomy = out.join("taxonomy.json");
    std::fs::write(&taxonomy, bundle.taxonomy.to_json()).map_err(io(&taxonomy))?;

    let mut models = Vec::new();
    for m in &bundle.models {
        let images = format!("{}.images.emb", m.model_id);
        let prompts = format!("{}.prompts.emb", m.model_id);
        write_embeddings(&out.join(&images), &m.images, &m.image_manifest)?;
        write_embeddings(&out.join(&prompts), &m.prompts, &m.prompt_manifest)?;
        models.push(ModelPaths {
            model_id: m.model_id.clone(),
            images: images.into(),
            prompts: prompts.into(),
        });
    }
    let config = AuditConfig {
        taxonomy: Some("taxonomy.json".into()),
        labels: "labels.csv".into(),
        models,
        k,
        ..AuditConfig::default()
    };
    let path = out.join("audit.json");
    std::fs::write(&path, config.to_json()).map_err(io(&path))?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::embeddings::row_norm;

    fn group(gender: Gender, race: Race, share: f64) -> PlantedGroup {
        PlantedGroup {
            gender,
            race,
            age: AgeBucket::Adult,
            share,
        }
    }

    fn ninety_female() -> SynthSpec {
        SynthSpec::single(
            1000,
            16,
            100,
            "synthetic-a",
            "Nurse",
            vec![
                group(Gender::Female, Race::Indian, 0.5),
                group(Gender::Female, Race::White, 0.4),
                group(Gender::Male, Race::Black, 0.1),
            ],
        )
    }

    /// Brute force: sort every row by cosine to the prompt and take the first k.
    fn brute_top_k(images: &EmbeddingMatrix, prompt: &[f32], k: usize) -> Vec<usize> {
        let mut sims: Vec<(f64, usize)> = images
            .rows()
            .enumerate()
            .map(|(i, v)| {
                let dot: f64 = v.iter().zip(prompt).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
                (dot / row_norm(v), i)
            })
            .collect();
        sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        sims.into_iter().take(k).map(|(_, i)| i).collect()
    }

    #[test]
    fn planted_block_is_the_brute_force_top_k() {
        let spec = ninety_female();
        let bundle = generate_synthetic_corpus(&spec, Some(11)).unwrap();
        let model = &bundle.models[0];
        let mut top = brute_top_k(&model.images, model.prompts.row(0), 100);
        top.sort_unstable();
        assert_eq!(top, planted_rows(&spec, 0, 0).collect::<Vec<_>>());
        let female = top
            .iter()
            .filter(|&&i| bundle.labels.get(&image_id(i)).unwrap().gender == Gender::Female)
            .count();
        assert_eq!(female, 90);
    }

    #[test]
    fn multi_model_multi_role_blocks_are_separated() {
        let roles = ["A", "B", "C"];
        let mk = |id: &str| PlantedModel {
            model_id: id.into(),
            roles: roles
                .iter()
                .map(|r| PlantedRole {
                    role: r.to_string(),
                    groups: vec![group(Gender::Male, Race::Indian, 1.0)],
                })
                .collect(),
        };
        let spec = SynthSpec {
            n: 200,
            dim: 8,
            k: 10,
            gap: 0.05,
            seed: Some(3),
            models: vec![mk("m0"), mk("m1")],
        };
        let bundle = generate_synthetic_corpus(&spec, None).unwrap();
        for (m, model) in bundle.models.iter().enumerate() {
            for r in 0..roles.len() {
                let mut top = brute_top_k(&model.images, model.prompts.row(r), spec.k);
                top.sort_unstable();
                assert_eq!(top, planted_rows(&spec, m, r).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn rows_are_unit_norm() {
        let bundle = generate_synthetic_corpus(&ninety_female(), Some(1)).unwrap();
        for v in bundle.models[0].images.rows() {
            assert!((row_norm(v) - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = ninety_female();
        let a = generate_synthetic_corpus(&spec, Some(7)).unwrap();
        let b = generate_synthetic_corpus(&spec, Some(7)).unwrap();
        assert_eq!(a.models[0].images.payload_bytes(), b.models[0].images.payload_bytes());
        assert_eq!(a.labels.to_csv_string(), b.labels.to_csv_string());
        let c = generate_synthetic_corpus(&spec, Some(8)).unwrap();
        assert_ne!(a.models[0].images.payload_bytes(), c.models[0].images.payload_bytes());
    }

    #[test]
    fn bad_shares_rejected() {
        let mut spec = ninety_female();
        spec.models[0].roles[0].groups = vec![
            group(Gender::Female, Race::Indian, 0.5),
            group(Gender::Male, Race::Indian, 0.6),
        ];
        assert!(matches!(generate_synthetic_corpus(&spec, Some(1)), Err(Error::InvalidShares(_))));

        spec.models[0].roles[0].groups = vec![
            group(Gender::Female, Race::Indian, 0.505),
            group(Gender::Male, Race::Indian, 0.495),
        ];
        assert!(matches!(generate_synthetic_corpus(&spec, Some(1)), Err(Error::InvalidShares(_))));
    }

    #[test]
    fn seed_required() {
        assert!(matches!(generate_synthetic_corpus(&ninety_female(), None), Err(Error::SeedRequired)));
    }

    #[test]
    fn too_few_images_rejected() {
        let mut spec = ninety_female();
        spec.n = 99;
        assert!(matches!(spec.validate(), Err(Error::InvalidSynthSpec(_))));
    }

    #[test]
    fn spec_json_defaults() {
        let spec: SynthSpec = serde_json::from_str(
            r#"{"n": 10, "dim": 4, "models": [{"model_id": "m", "roles": [{"role": "Nurse",
                "groups": [{"gender": "Female", "race": "Latino_Hispanic", "age": "Adult", "share": 1.0}]}]}]}"#,
        )
        .unwrap();
        assert_eq!(spec.k, 100);
        assert_eq!(spec.gap, 0.05);
        assert_eq!(spec.models[0].roles[0].groups[0].race, Race::LatinoHispanic);
    }
}
