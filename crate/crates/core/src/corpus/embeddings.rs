//! EMB1 binary embedding files and their JSON sidecar manifests.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "EMB1"            4 bytes magic
//! version: u32      currently 1
//! dim:     u32
//! count:   u64
//! payload           count * dim f32 values, little-endian, row-major
//! checksum: u64     XXH64 (seed 0) of the payload bytes
//! ```
//!
//! The manifest for `foo.emb` lives next to it at `foo.emb.json`.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use xxhash_rust::xxh64::xxh64;

use crate::error::{Error, Result, ResultExt};

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

/// Rows below this Euclidean norm are rejected at load time.
pub const MIN_NORM: f64 = 1e-12;
/// Row norm tolerance when a matrix claims to be normalized.
pub const UNIT_NORM_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    count: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionZero);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::TruncatedPayload {
                expected: (data.len().div_ceil(dim) * dim * 4) as u64,
                found: (data.len() * 4) as u64,
            });
        }
        Ok(Self {
            dim,
            count: data.len() / dim,
            data,
            normalized: false,
        })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f32>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    left: dim,
                    right: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub(crate) fn rows_mut(&mut self) -> std::slice::ChunksExactMut<'_, f32> {
        self.data.chunks_exact_mut(self.dim)
    }

    /// Marks the matrix normalized after checking every row norm is within tolerance.
    pub(crate) fn set_normalized(&mut self) -> Result<()> {
        for (row, v) in self.rows().enumerate() {
            let norm = row_norm(v);
            if norm.is_nan() || (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::ManifestMismatch(format!(
                    "row {row} has norm {norm} but the matrix is flagged normalized"
                )));
            }
        }
        self.normalized = true;
        Ok(())
    }

    /// Rejects non-finite values and rows whose norm is below [`MIN_NORM`].
    pub fn check_rows(&self) -> Result<()> {
        for (row, v) in self.rows().enumerate() {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteValue { row });
            }
            if row_norm(v) < MIN_NORM {
                return Err(Error::ZeroNormVector { row });
            }
        }
        Ok(())
    }

    pub fn payload_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for x in &self.data {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        bytes
    }

    pub fn checksum(&self) -> u64 {
        payload_checksum(&self.payload_bytes())
    }
}

/// Euclidean norm accumulated in f64, in index order.
pub fn row_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

pub fn payload_checksum(payload: &[u8]) -> u64 {
    xxh64(payload, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Image,
    Prompt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub model_id: String,
    pub kind: Kind,
    pub dim: usize,
    pub count: u64,
    pub ids: Vec<String>,
    #[serde(serialize_with = "ser_hex", deserialize_with = "de_hex")]
    pub checksum: u64,
}

fn ser_hex<S: Serializer>(v: &u64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{v:016x}"))
}

fn de_hex<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
    let s = String::deserialize(d)?;
    u64::from_str_radix(s.trim_start_matches("0x"), 16).map_err(serde::de::Error::custom)
}

impl Manifest {
    pub fn new(model_id: impl Into<String>, kind: Kind, ids: Vec<String>, matrix: &EmbeddingMatrix) -> Self {
        Self {
            model_id: model_id.into(),
            kind,
            dim: matrix.dim(),
            count: matrix.count() as u64,
            ids,
            checksum: matrix.checksum(),
        }
    }

    /// Checks id count and uniqueness.
    pub fn validate(&self) -> Result<()> {
        if self.ids.len() as u64 != self.count {
            return Err(Error::ManifestMismatch(format!(
                "{} ids for count {}",
                self.ids.len(),
                self.count
            )));
        }
        let mut seen = HashSet::with_capacity(self.ids.len());
        for id in &self.ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(())
    }

    /// Checks this manifest describes `matrix` exactly.
    pub fn check_matches(&self, matrix: &EmbeddingMatrix) -> Result<()> {
        self.validate()?;
        if self.dim != matrix.dim() || self.count != matrix.count() as u64 {
            return Err(Error::ManifestMismatch(format!(
                "manifest says {}x{}, file holds {}x{}",
                self.count,
                self.dim,
                matrix.count(),
                matrix.dim()
            )));
        }
        let computed = matrix.checksum();
        if computed != self.checksum {
            return Err(Error::ChecksumMismatch {
                what: "manifest",
                expected: self.checksum,
                computed,
            });
        }
        Ok(())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(Error::from).at(path)?;
        manifest.validate().at(path)?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn manifest_path(embedding_path: &Path) -> PathBuf {
    let mut os = embedding_path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

pub fn encode(matrix: &EmbeddingMatrix) -> Vec<u8> {
    let payload = matrix.payload_bytes();
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(matrix.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(matrix.count() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&payload_checksum(&payload).to_le_bytes());
    out
}

/// Decodes an EMB1 byte buffer, verifying the trailing checksum and row norms.
pub fn decode(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedPayload {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let dim = u32_at(8) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if dim == 0 {
        return Err(Error::DimensionZero);
    }
    let payload_len = count
        .checked_mul(dim as u64)
        .and_then(|n| n.checked_mul(4))
        .ok_or(Error::TruncatedPayload {
            expected: u64::MAX,
            found: bytes.len() as u64,
        })?;
    let expected = HEADER_LEN as u64 + payload_len + 8;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(Error::TruncatedPayload { expected, found });
    }
    if found > expected {
        return Err(Error::TrailingData {
            extra: found - expected,
        });
    }
    let payload_end = HEADER_LEN + payload_len as usize;
    let payload = &bytes[HEADER_LEN..payload_end];
    let stored = u64::from_le_bytes(bytes[payload_end..].try_into().unwrap());
    let computed = payload_checksum(payload);
    if stored != computed {
        return Err(Error::ChecksumMismatch {
            what: "payload",
            expected: stored,
            computed,
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let matrix = EmbeddingMatrix::new(dim, data)?;
    matrix.check_rows()?;
    Ok(matrix)
}

/// Loads an embedding file and its sidecar manifest, verifying both. Does not normalize.
pub fn load_embeddings(path: &Path) -> Result<(EmbeddingMatrix, Manifest)> {
    let bytes = fs::read(path).at(path)?;
    let matrix = decode(&bytes).at(path)?;
    let mpath = manifest_path(path);
    let manifest = Manifest::read(&mpath)?;
    manifest.check_matches(&matrix).at(&mpath)?;
    Ok((matrix, manifest))
}

/// Writes the binary file and its manifest.
pub fn write_embeddings(path: &Path, matrix: &EmbeddingMatrix, manifest: &Manifest) -> Result<()> {
    let write = |p: &Path, bytes: &[u8]| {
        fs::write(p, bytes).map_err(|source| Error::Output {
            path: p.to_path_buf(),
            source,
        })
    };
    write(path, &encode(matrix))?;
    write(&manifest_path(path), manifest.to_json().as_bytes())
}
