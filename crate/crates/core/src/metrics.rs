//! Demographic probability vectors and Jensen-Shannon bias scores.
//!
//! Divergences are in nats. A score of 0 means the observed distribution
//! matches the uniform baseline; ln 2 is the maximum, reached only by
//! disjoint supports.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::corpus::labels::{joint_cell, AgeBucket, Gender, LabelTable, Race, JOINT_CELLS};
use crate::error::{Error, Result};
use crate::retrieval::Hit;

/// Tolerance on the sum of a probability vector.
pub const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Gender,
    Race,
    Age,
    /// Gender x race x age bucket, gender-major.
    Joint,
}

impl Dimension {
    pub const MARGINALS: [Dimension; 3] = [Dimension::Gender, Dimension::Race, Dimension::Age];

    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> usize {
        match self {
            Dimension::Gender => 2,
            Dimension::Race => 7,
            Dimension::Age => 3,
            Dimension::Joint => JOINT_CELLS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Gender => "gender",
            Dimension::Race => "race",
            Dimension::Age => "age",
            Dimension::Joint => "joint",
        }
    }

    /// Category names in canonical order.
    pub fn categories(self) -> Vec<String> {
        match self {
            Dimension::Gender => Gender::ALL.iter().map(|g| g.name().to_string()).collect(),
            Dimension::Race => Race::ALL.iter().map(|r| r.name().to_string()).collect(),
            Dimension::Age => AgeBucket::ALL.iter().map(|a| a.name().to_string()).collect(),
            Dimension::Joint => (0..JOINT_CELLS).map(joint_cell_name).collect(),
        }
    }

    pub fn category(self, index: usize) -> String {
        match self {
            Dimension::Gender => Gender::ALL[index].name().to_string(),
            Dimension::Race => Race::ALL[index].name().to_string(),
            Dimension::Age => AgeBucket::ALL[index].name().to_string(),
            Dimension::Joint => joint_cell_name(index),
        }
    }
}

impl std::str::FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gender" => Ok(Dimension::Gender),
            "race" => Ok(Dimension::Race),
            "age" => Ok(Dimension::Age),
            "joint" => Ok(Dimension::Joint),
            other => Err(Error::InvalidConfig(format!("unknown dimension {other:?}"))),
        }
    }
}

pub fn joint_cell_name(index: usize) -> String {
    let (g, r, a) = joint_cell(index);
    format!("{}|{}|{}", g.name(), r.name(), a.name())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector {
    pub dimension: Dimension,
    pub p: Vec<f64>,
}

impl ProbVector {
    /// Checks length, non-negativity and unit sum.
    pub fn new(dimension: Dimension, p: Vec<f64>) -> Result<Self> {
        if p.len() != dimension.len() {
            return Err(Error::CategoryMismatch(format!(
                "{} expects {} categories, got {}",
                dimension.name(),
                dimension.len(),
                p.len()
            )));
        }
        check_simplex(&p)?;
        Ok(Self { dimension, p })
    }

    pub fn uniform(dimension: Dimension) -> Self {
        Self {
            dimension,
            p: uniform_baseline(dimension.len()).expect("dimensions are non-empty"),
        }
    }

    pub fn share(&self, index: usize) -> f64 {
        self.p[index]
    }

    pub fn categories(&self) -> Vec<String> {
        self.dimension.categories()
    }

    fn same_categories(&self, other: &ProbVector) -> Result<()> {
        if self.dimension != other.dimension || self.p.len() != other.p.len() {
            return Err(Error::CategoryMismatch(format!(
                "{} vs {}",
                self.dimension.name(),
                other.dimension.name()
            )));
        }
        Ok(())
    }
}

fn check_simplex(p: &[f64]) -> Result<()> {
    if let Some(bad) = p.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::InvalidDistribution(format!("entry {bad} is not a non-negative number")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
    }
    Ok(())
}

/// Category counts of `hits` along `dimension`.
pub fn category_counts(hits: &[Hit], labels: &LabelTable, dimension: Dimension) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; dimension.len()];
    for hit in hits {
        let label = labels.label(&hit.image_id)?;
        let i = match dimension {
            Dimension::Gender => label.gender.index(),
            Dimension::Race => label.race.index(),
            Dimension::Age => label.bucket().index(),
            Dimension::Joint => label.joint_index(),
        };
        counts[i] += 1;
    }
    Ok(counts)
}

/// Share of retrieved images per category: count / k.
pub fn demographic_distribution(hits: &[Hit], labels: &LabelTable, dimension: Dimension) -> Result<ProbVector> {
    if hits.is_empty() {
        return Err(Error::KZero);
    }
    let k = hits.len() as f64;
    let p = category_counts(hits, labels, dimension)?
        .into_iter()
        .map(|c| c as f64 / k)
        .collect();
    ProbVector::new(dimension, p)
}

pub fn uniform_baseline(c: usize) -> Result<Vec<f64>> {
    if c == 0 {
        return Err(Error::CZero);
    }
    Ok(vec![1.0 / c as f64; c])
}

/// Sum of p_i ln(p_i / q_i), with 0 ln(0 / q) = 0.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::CategoryMismatch(format!("{} vs {} categories", p.len(), q.len())));
    }
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(Error::UnsupportedZeroDenominator(i));
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total)
}

/// Jensen-Shannon divergence in nats, clamped to [0, ln 2] against rounding.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::CategoryMismatch(format!("{} vs {} categories", p.len(), q.len())));
    }
    // m_i >= p_i / 2 and m_i >= q_i / 2, so neither KL term can divide by zero.
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let js = 0.5 * kl_divergence(p, &m)? + 0.5 * kl_divergence(q, &m)?;
    Ok(js.clamp(0.0, LN_2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasScore {
    /// Jensen-Shannon divergence from the baseline, in nats.
    pub nats: f64,
    /// `nats / ln 2`, in [0, 1].
    pub normalized: f64,
}

impl BiasScore {
    pub fn from_nats(nats: f64) -> Self {
        Self {
            nats,
            normalized: nats / LN_2,
        }
    }
}

pub fn js_bias_score(p: &ProbVector, baseline: &ProbVector) -> Result<BiasScore> {
    p.same_categories(baseline)?;
    Ok(BiasScore::from_nats(js_divergence(&p.p, &baseline.p)?))
}

/// Bias of `p` against the uniform baseline of its dimension.
pub fn bias_against_uniform(p: &ProbVector) -> BiasScore {
    js_bias_score(p, &ProbVector::uniform(p.dimension)).expect("same dimension")
}
