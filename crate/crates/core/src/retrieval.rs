//! Exact cosine top-k retrieval.
//!
//! Similarities are dot products of unit vectors accumulated in f64 in
//! ascending index order, so a score never depends on how work is split.
//! Ranking uses a total order: similarity descending, then row index
//! ascending. Any selection strategy that respects that order returns the
//! same hits as a full sort, which is what makes the parallel path exact.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::embeddings::{row_norm, EmbeddingMatrix, Manifest};
use crate::error::{Error, Result};

/// Default retrieval depth.
pub const DEFAULT_K: usize = 100;

/// Rows scored per parallel work item.
const CHUNK_ROWS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityScore(pub f64);

impl SimilarityScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    #[serde(skip)]
    pub row: usize,
    #[serde(rename = "id")]
    pub image_id: String,
    #[serde(rename = "sim")]
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub model_id: String,
    pub role: String,
    pub k: usize,
    pub hits: Vec<Hit>,
}

impl RetrievalResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("retrieval result serializes")
    }
}

/// Divides every row by its Euclidean norm.
///
/// Fails on zero-norm or non-finite rows.
pub fn normalize(mut matrix: EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    matrix.check_rows()?;
    for row in matrix.rows_mut() {
        let norm = row_norm(row);
        row.iter_mut().for_each(|x| *x = (f64::from(*x) / norm) as f32);
    }
    matrix.set_normalized()?;
    Ok(matrix)
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        acc += f64::from(x) * f64::from(y);
    }
    acc
}

/// Cosine similarity of two unit vectors.
pub fn cosine_similarity(image_vec: &[f32], prompt_vec: &[f32]) -> Result<SimilarityScore> {
    if image_vec.len() != prompt_vec.len() {
        return Err(Error::DimMismatch {
            left: image_vec.len(),
            right: prompt_vec.len(),
        });
    }
    Ok(SimilarityScore(dot(image_vec, prompt_vec)))
}

/// Ranking order: higher similarity first, then lower row index.
fn rank(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Keeps the best `k` candidates, sorted by rank.
fn select(mut candidates: Vec<(f64, usize)>, k: usize) -> Vec<(f64, usize)> {
    if candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, rank);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(rank);
    candidates
}

fn check_k(k: usize, count: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::KZero);
    }
    if k > count {
        return Err(Error::KExceedsCorpus { k, count });
    }
    Ok(())
}

fn to_hits(manifest: &Manifest, ranked: Vec<(f64, usize)>) -> Vec<Hit> {
    ranked
        .into_iter()
        .map(|(similarity, row)| Hit {
            row,
            image_id: manifest.ids[row].clone(),
            similarity,
        })
        .collect()
}

/// The `k` rows most similar to `prompt_vec`, ties broken by ascending row index.
pub fn top_k(images: &EmbeddingMatrix, manifest: &Manifest, prompt_vec: &[f32], k: usize) -> Result<Vec<Hit>> {
    if images.dim() != prompt_vec.len() {
        return Err(Error::DimMismatch {
            left: images.dim(),
            right: prompt_vec.len(),
        });
    }
    check_k(k, images.count())?;
    let scored = images.rows().enumerate().map(|(i, v)| (dot(v, prompt_vec), i)).collect();
    Ok(to_hits(manifest, select(scored, k)))
}

/// Top-k for every prompt row at once, parallel over row ranges of the corpus.
///
/// Each chunk keeps its own top-k per prompt and the survivors are merged with
/// the same total order, so the output equals [`top_k`] per prompt bit for bit
/// regardless of the thread count.
pub fn top_k_batch(
    images: &EmbeddingMatrix,
    manifest: &Manifest,
    prompts: &EmbeddingMatrix,
    k: usize,
) -> Result<Vec<Vec<Hit>>> {
    let dim = images.dim();
    if prompts.dim() != dim {
        return Err(Error::DimMismatch {
            left: dim,
            right: prompts.dim(),
        });
    }
    check_k(k, images.count())?;
    let n_prompts = prompts.count();
    if n_prompts == 0 {
        return Ok(vec![]);
    }

    // Prompt-major transpose in f64: for coordinate j, the n_prompts values are contiguous.
    let mut transposed = vec![0f64; dim * n_prompts];
    for (p, row) in prompts.rows().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            transposed[j * n_prompts + p] = f64::from(x);
        }
    }

    let per_chunk: Vec<Vec<Vec<(f64, usize)>>> = images
        .data()
        .par_chunks(CHUNK_ROWS * dim)
        .enumerate()
        .map(|(c, block)| {
            let base = c * CHUNK_ROWS;
            let rows = block.len() / dim;
            let mut sims = vec![Vec::with_capacity(rows); n_prompts];
            let mut acc = vec![0f64; n_prompts];
            for (r, v) in block.chunks_exact(dim).enumerate() {
                acc.iter_mut().for_each(|a| *a = 0.0);
                // Same additions in the same order as `dot`, one accumulator per prompt.
                for (j, &x) in v.iter().enumerate() {
                    let x = f64::from(x);
                    let col = &transposed[j * n_prompts..(j + 1) * n_prompts];
                    for (a, &q) in acc.iter_mut().zip(col) {
                        *a += x * q;
                    }
                }
                for (p, &a) in acc.iter().enumerate() {
                    sims[p].push((a, base + r));
                }
            }
            sims.into_iter().map(|s| select(s, k)).collect()
        })
        .collect();

    let mut merged: Vec<Vec<(f64, usize)>> = vec![Vec::new(); n_prompts];
    for chunk in per_chunk {
        for (p, part) in chunk.into_iter().enumerate() {
            merged[p].extend(part);
        }
    }
    Ok(merged
        .into_iter()
        .map(|candidates| to_hits(manifest, select(candidates, k)))
        .collect())
}
