//! Cross-model analyses over per-role audits: averaging, skew flags,
//! dominant categories, gender volatility and intersectional findings.

use serde::{Deserialize, Serialize};

use crate::corpus::labels::{joint_cell, Gender, JOINT_CELLS};
use crate::error::{Error, Result};
use crate::metrics::{BiasScore, Dimension, ProbVector};

/// Default share at or above which a category is flagged as dominant.
pub const DEFAULT_SKEW_THRESHOLD: f64 = 0.60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionScores {
    pub gender: BiasScore,
    pub race: BiasScore,
    pub age: BiasScore,
    /// Extension beyond the three marginal dimensions.
    pub joint: BiasScore,
}

impl DimensionScores {
    pub fn get(&self, dimension: Dimension) -> BiasScore {
        match dimension {
            Dimension::Gender => self.gender,
            Dimension::Race => self.race,
            Dimension::Age => self.age,
            Dimension::Joint => self.joint,
        }
    }
}

/// One model's view of one role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRoleAudit {
    pub model_id: String,
    pub k: usize,
    pub gender: ProbVector,
    pub race: ProbVector,
    pub age: ProbVector,
    pub joint: ProbVector,
    pub bias: DimensionScores,
}

impl ModelRoleAudit {
    pub fn vector(&self, dimension: Dimension) -> &ProbVector {
        match dimension {
            Dimension::Gender => &self.gender,
            Dimension::Race => &self.race,
            Dimension::Age => &self.age,
            Dimension::Joint => &self.joint,
        }
    }

    pub fn male_share(&self) -> f64 {
        self.gender.share(Gender::Male.index())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleAudit {
    pub role: String,
    /// One entry per model, in the audit's model order.
    pub per_model: Vec<ModelRoleAudit>,
}

impl RoleAudit {
    pub fn model_ids(&self) -> Vec<&str> {
        self.per_model.iter().map(|m| m.model_id.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedRole {
    pub gender: ProbVector,
    pub race: ProbVector,
    pub age: ProbVector,
    pub joint: ProbVector,
}

impl AveragedRole {
    pub fn vector(&self, dimension: Dimension) -> &ProbVector {
        match dimension {
            Dimension::Gender => &self.gender,
            Dimension::Race => &self.race,
            Dimension::Age => &self.age,
            Dimension::Joint => &self.joint,
        }
    }
}

/// Unweighted mean of probability vectors sharing a dimension.
pub fn average_vectors<'a>(vectors: impl IntoIterator<Item = &'a ProbVector>) -> Result<ProbVector> {
    let mut iter = vectors.into_iter();
    let first = iter.next().ok_or(Error::EmptyModelSet)?;
    let mut sum = first.p.clone();
    let mut n = 1usize;
    for v in iter {
        if v.dimension != first.dimension || v.p.len() != sum.len() {
            return Err(Error::CategoryMismatch(format!(
                "cannot average {} with {}",
                first.dimension.name(),
                v.dimension.name()
            )));
        }
        sum.iter_mut().zip(&v.p).for_each(|(s, x)| *s += x);
        n += 1;
    }
    let n = n as f64;
    ProbVector::new(first.dimension, sum.into_iter().map(|s| s / n).collect())
}

/// Per-dimension mean of the per-model vectors, each model weighted equally.
pub fn average_across_models(audit: &RoleAudit) -> Result<AveragedRole> {
    let avg = |d: Dimension| average_vectors(audit.per_model.iter().map(|m| m.vector(d)));
    Ok(AveragedRole {
        gender: avg(Dimension::Gender)?,
        race: avg(Dimension::Race)?,
        age: avg(Dimension::Age)?,
        joint: avg(Dimension::Joint)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewFlag {
    pub role: String,
    /// `None` for the cross-model average.
    pub model_id: Option<String>,
    pub dimension: Dimension,
    pub category: String,
    pub share: f64,
    pub threshold: f64,
}

/// Lower bound (exclusive) for a skew threshold on `dimension`.
pub fn min_threshold(dimension: Dimension) -> f64 {
    1.0 / dimension.len() as f64
}

/// Flags every category whose share is at least `threshold` (inclusive).
pub fn skew_flags(role: &str, model_id: Option<&str>, vector: &ProbVector, threshold: f64) -> Result<Vec<SkewFlag>> {
    let lower = min_threshold(vector.dimension);
    if !(threshold > lower && threshold <= 1.0) {
        return Err(Error::ThresholdOutOfRange { threshold, lower });
    }
    Ok(vector
        .p
        .iter()
        .enumerate()
        .filter(|(_, &share)| share >= threshold)
        .map(|(i, &share)| SkewFlag {
            role: role.to_string(),
            model_id: model_id.map(str::to_string),
            dimension: vector.dimension,
            category: vector.dimension.category(i),
            share,
            threshold,
        })
        .collect())
}

/// Index of the largest share; ties go to the earliest canonical category.
pub fn dominant_index(vector: &ProbVector) -> usize {
    let mut best = 0;
    for (i, &x) in vector.p.iter().enumerate().skip(1) {
        if x > vector.p[best] {
            best = i;
        }
    }
    best
}

pub fn dominant_category(vector: &ProbVector) -> String {
    vector.dimension.category(dominant_index(vector))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilityEntry {
    pub role: String,
    pub male_shares: Vec<f64>,
    pub stddev: f64,
}

/// Population standard deviation, from pairwise differences so that equal
/// inputs give exactly zero.
pub fn population_stddev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mut sum = 0.0;
    for (i, a) in xs.iter().enumerate() {
        for b in &xs[i + 1..] {
            sum += (a - b) * (a - b);
        }
    }
    // sum_{i<j} (x_i - x_j)^2 = n^2 * var
    (sum / (n * n)).sqrt()
}

/// Per-role spread of male share across models, most volatile first.
pub fn gender_volatility(audits: &[RoleAudit]) -> Result<Vec<VolatilityEntry>> {
    let mut out = Vec::with_capacity(audits.len());
    for audit in audits {
        if audit.per_model.len() < 2 {
            return Err(Error::FewerThanTwoModels(audit.per_model.len()));
        }
        let male_shares: Vec<f64> = audit.per_model.iter().map(ModelRoleAudit::male_share).collect();
        out.push(VolatilityEntry {
            role: audit.role.clone(),
            stddev: population_stddev(&male_shares),
            male_shares,
        });
    }
    out.sort_by(|a, b| b.stddev.total_cmp(&a.stddev).then_with(|| a.role.cmp(&b.role)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionFinding {
    pub role: String,
    pub gender: String,
    pub race: String,
    pub age: String,
    /// Whether this cell is each model's most frequent joint cell, in model order.
    pub top_in: Vec<bool>,
    pub recurrence: usize,
}

impl IntersectionFinding {
    pub fn cell(&self) -> String {
        format!("{}|{}|{}", self.gender, self.race, self.age)
    }
}

/// Each model's argmax joint cell per role, grouped by cell with its recurrence.
pub fn mine_intersections(audits: &[RoleAudit]) -> Vec<IntersectionFinding> {
    let mut findings: Vec<(usize, IntersectionFinding)> = Vec::new();
    for audit in audits {
        let tops: Vec<usize> = audit.per_model.iter().map(|m| dominant_index(&m.joint)).collect();
        for cell in 0..JOINT_CELLS {
            let top_in: Vec<bool> = tops.iter().map(|&t| t == cell).collect();
            let recurrence = top_in.iter().filter(|&&b| b).count();
            if recurrence == 0 {
                continue;
            }
            let (g, r, a) = joint_cell(cell);
            findings.push((
                cell,
                IntersectionFinding {
                    role: audit.role.clone(),
                    gender: g.name().to_string(),
                    race: r.name().to_string(),
                    age: a.name().to_string(),
                    top_in,
                    recurrence,
                },
            ));
        }
    }
    findings.sort_by(|(ca, a), (cb, b)| {
        b.recurrence
            .cmp(&a.recurrence)
            .then_with(|| a.role.cmp(&b.role))
            .then(ca.cmp(cb))
    });
    findings.into_iter().map(|(_, f)| f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::labels::{joint_index, AgeBucket, Race};
    use crate::metrics::bias_against_uniform;

    fn pv(dimension: Dimension, p: &[f64]) -> ProbVector {
        ProbVector::new(dimension, p.to_vec()).unwrap()
    }

    fn one_hot_joint(cell: usize) -> ProbVector {
        let mut p = vec![0.0; JOINT_CELLS];
        p[cell] = 1.0;
        pv(Dimension::Joint, &p)
    }

    fn model(id: &str, male: f64, joint_cell: usize) -> ModelRoleAudit {
        let gender = pv(Dimension::Gender, &[male, 1.0 - male]);
        let race = ProbVector::uniform(Dimension::Race);
        let age = ProbVector::uniform(Dimension::Age);
        let joint = one_hot_joint(joint_cell);
        let bias = DimensionScores {
            gender: bias_against_uniform(&gender),
            race: bias_against_uniform(&race),
            age: bias_against_uniform(&age),
            joint: bias_against_uniform(&joint),
        };
        ModelRoleAudit {
            model_id: id.into(),
            k: 100,
            gender,
            race,
            age,
            joint,
            bias,
        }
    }

    fn role(name: &str, models: Vec<ModelRoleAudit>) -> RoleAudit {
        RoleAudit {
            role: name.into(),
            per_model: models,
        }
    }

    #[test]
    fn surgeon_style_average() {
        let audit = role(
            "Surgeon",
            vec![model("a", 0.70, 0), model("b", 0.65, 0), model("c", 0.70, 0), model("d", 0.66, 0)],
        );
        let avg = average_across_models(&audit).unwrap();
        assert!((avg.gender.p[0] - 0.6775).abs() < 1e-12);
        assert!((avg.gender.p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn average_edge_cases() {
        let single = role("x", vec![model("a", 0.3, 5)]);
        assert_eq!(average_across_models(&single).unwrap().gender, single.per_model[0].gender);
        let opposite = role("x", vec![model("a", 1.0, 5), model("b", 0.0, 5)]);
        assert_eq!(average_across_models(&opposite).unwrap().gender.p, vec![0.5, 0.5]);
        assert!(matches!(average_across_models(&role("x", vec![])), Err(Error::EmptyModelSet)));
        let g = ProbVector::uniform(Dimension::Gender);
        let a = ProbVector::uniform(Dimension::Age);
        assert!(matches!(average_vectors([&g, &a]), Err(Error::CategoryMismatch(_))));
    }

    #[test]
    fn skew_examples() {
        let flags = skew_flags("Surgeon", None, &pv(Dimension::Gender, &[0.6775, 0.3225]), 0.60).unwrap();
        assert_eq!(flags.len(), 1);
        assert_eq!(flags[0].category, "Male");
        assert!(skew_flags("GP", None, &pv(Dimension::Gender, &[0.56, 0.44]), 0.60).unwrap().is_empty());
        let boundary = skew_flags("x", None, &pv(Dimension::Gender, &[0.60, 0.40]), 0.60).unwrap();
        assert_eq!(boundary.len(), 1);
        assert_eq!(boundary[0].category, "Male");
    }

    #[test]
    fn skew_threshold_range() {
        let g = ProbVector::uniform(Dimension::Gender);
        assert!(matches!(skew_flags("x", None, &g, 0.5), Err(Error::ThresholdOutOfRange { .. })));
        assert!(matches!(skew_flags("x", None, &g, 1.01), Err(Error::ThresholdOutOfRange { .. })));
        let race = ProbVector::uniform(Dimension::Race);
        assert!(skew_flags("x", None, &race, 0.2).unwrap().is_empty());
    }

    #[test]
    fn dominant_examples() {
        let race = pv(Dimension::Race, &[0.125, 0.3675, 0.0875, 0.0875, 0.0325, 0.1975, 0.1025]);
        assert_eq!(dominant_category(&race), "Indian");
        assert_eq!(dominant_category(&ProbVector::uniform(Dimension::Race)), "East Asian");
        assert_eq!(dominant_category(&pv(Dimension::Age, &[0.0375, 0.7425, 0.22])), "Adult");
    }

    #[test]
    fn dermatologist_volatility() {
        let shares = [0.78, 0.24, 0.81, 0.13];
        // Oracle: textbook two-pass population variance.
        let mean = shares.iter().sum::<f64>() / 4.0;
        let oracle = (shares.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((population_stddev(&shares) - oracle).abs() < 1e-12);
        assert!((population_stddev(&shares) - 0.3077).abs() < 1e-4);
    }

    #[test]
    fn volatility_edge_cases() {
        assert_eq!(population_stddev(&[0.1, 0.1, 0.1, 0.1]), 0.0);
        assert_eq!(population_stddev(&[1.0, 0.0]), 0.5);
        let audits = vec![
            role("Calm", vec![model("a", 0.5, 0), model("b", 0.5, 0)]),
            role("Wild", vec![model("a", 1.0, 0), model("b", 0.0, 0)]),
            role("Also calm", vec![model("a", 0.2, 0), model("b", 0.2, 0)]),
        ];
        let ranked = gender_volatility(&audits).unwrap();
        let order: Vec<&str> = ranked.iter().map(|v| v.role.as_str()).collect();
        assert_eq!(order, vec!["Wild", "Also calm", "Calm"]);
        assert!(matches!(
            gender_volatility(&[role("x", vec![model("a", 0.5, 0)])]),
            Err(Error::FewerThanTwoModels(1))
        ));
    }

    #[test]
    fn midwife_pattern_recurs_four_times() {
        let cell = joint_index(Gender::Female, Race::Black, AgeBucket::Adult);
        let audit = role(
            "Midwife",
            (0..4).map(|i| model(&format!("m{i}"), 0.05, cell)).collect(),
        );
        let findings = mine_intersections(&[audit]);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].recurrence, 4);
        assert_eq!(findings[0].cell(), "Female|Black|Adult");
        assert_eq!(findings[0].top_in, vec![true; 4]);
    }

    #[test]
    fn distinct_top_cells() {
        let audit = role("Mixed", (0..4).map(|i| model(&format!("m{i}"), 0.5, i * 7)).collect());
        let findings = mine_intersections(&[audit]);
        assert_eq!(findings.len(), 4);
        assert!(findings.iter().all(|f| f.recurrence == 1));
        assert_eq!(findings.iter().map(|f| f.recurrence).sum::<usize>(), 4);
    }
}
