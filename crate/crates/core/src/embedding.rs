//! Embedding records, normalization and cosine similarity.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, l2_norm, Scalar};

/// Norms below this are treated as degenerate.
pub const ZERO_NORM_EPS: f64 = 1e-12;
/// Tolerance on the unit norm of every stored embedding.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Text,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Text => "text",
        }
    }

    pub(crate) fn to_byte(self) -> u8 {
        match self {
            Modality::Audio => 0,
            Modality::Text => 1,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Modality::Audio),
            1 => Some(Modality::Text),
            _ => None,
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scale `v` to unit L2 norm.
pub fn normalize<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("cannot normalize an empty vector".into()));
    }
    let norm = l2_norm(v);
    if !norm.is_finite() || norm < ZERO_NORM_EPS {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| T::from_f64_lossy(x.as_f64() / norm)).collect())
}

/// Normalize an `f64` accumulator into the target precision.
pub(crate) fn normalize_f64<T: Scalar>(v: &[f64]) -> Result<Vec<T>> {
    let norm = l2_norm(v);
    if !norm.is_finite() || norm < ZERO_NORM_EPS {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| T::from_f64_lossy(x / norm)).collect())
}

/// Cosine of two unit vectors of equal length, clamped against rounding.
#[inline]
pub(crate) fn unit_cosine<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    dot(a, b).clamp(-1.0, 1.0)
}

/// One embedding record. The vector is unit-norm; `raw_norm` keeps the norm
/// of the vector as it was ingested.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T: Scalar = f64> {
    pub id: String,
    pub modality: Modality,
    pub label: Option<String>,
    vector: Vec<T>,
    raw_norm: f64,
}

impl<T: Scalar> Embedding<T> {
    /// Ingest a vector. Vectors already within [`UNIT_NORM_TOL`] of unit norm
    /// are kept bit-for-bit; anything else is renormalized.
    pub fn new(
        id: impl Into<String>,
        modality: Modality,
        label: Option<String>,
        vector: Vec<T>,
    ) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::InvalidSet("embedding id must be non-empty".into()));
        }
        if vector.is_empty() {
            return Err(Error::InvalidArgument(format!("embedding `{id}` has no coordinates")));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("embedding `{id}` has non-finite values")));
        }
        let raw_norm = l2_norm(&vector);
        let vector = if (raw_norm - 1.0).abs() <= UNIT_NORM_TOL {
            vector
        } else {
            normalize(&vector)?
        };
        Ok(Self {
            id,
            modality,
            label,
            vector,
            raw_norm,
        })
    }

    pub fn audio(id: impl Into<String>, label: Option<String>, vector: Vec<T>) -> Result<Self> {
        Self::new(id, Modality::Audio, label, vector)
    }

    pub fn text(id: impl Into<String>, label: Option<String>, vector: Vec<T>) -> Result<Self> {
        Self::new(id, Modality::Text, label, vector)
    }

    pub fn vector(&self) -> &[T] {
        &self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn raw_norm(&self) -> f64 {
        self.raw_norm
    }

    pub fn with_label(mut self, label: Option<String>) -> Self {
        self.label = label;
        self
    }

    /// Round every coordinate through `f32`, the precision of the store format.
    pub fn to_storage_precision(&self) -> Self {
        let vector: Vec<T> = self
            .vector
            .iter()
            .map(|x| T::from_f64_lossy(x.as_f64() as f32 as f64))
            .collect();
        let raw_norm = l2_norm(&vector);
        Self {
            id: self.id.clone(),
            modality: self.modality,
            label: self.label.clone(),
            vector,
            raw_norm,
        }
    }

    pub fn cast<U: Scalar>(&self) -> Embedding<U> {
        let vector: Vec<U> = self.vector.iter().map(|x| U::from_f64_lossy(x.as_f64())).collect();
        Embedding {
            id: self.id.clone(),
            modality: self.modality,
            label: self.label.clone(),
            raw_norm: self.raw_norm,
            vector,
        }
    }
}

/// Cosine similarity of two embeddings, accumulated in `f64` and clamped to [-1, 1].
pub fn cosine_similarity<T: Scalar>(a: &Embedding<T>, b: &Embedding<T>) -> Result<T> {
    cosine_of(a.vector(), b.vector()).map(T::from_f64_lossy)
}

/// Cosine similarity of two unit vectors given as slices.
pub fn cosine_of<T: Scalar>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(unit_cosine(a, b))
}

/// An ordered, immutable collection of embeddings sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet<T: Scalar = f64> {
    dim: usize,
    records: Vec<Embedding<T>>,
    vocabulary: Vec<String>,
}

impl<T: Scalar> EmbeddingSet<T> {
    pub fn new(dim: usize, records: Vec<Embedding<T>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSet("dimension must be positive".into()));
        }
        let mut seen = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: r.dim(),
                });
            }
            if r.id.is_empty() {
                return Err(Error::InvalidSet(format!("record {i} has an empty id")));
            }
            if let Some(prev) = seen.insert(r.id.as_str(), i) {
                return Err(Error::InvalidSet(format!(
                    "duplicate id `{}` at records {prev} and {i}",
                    r.id
                )));
            }
        }
        let vocabulary = records
            .iter()
            .filter_map(|r| r.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Ok(Self {
            dim,
            records,
            vocabulary,
        })
    }

    /// Build a set whose dimension is taken from the first record.
    pub fn from_records(records: Vec<Embedding<T>>) -> Result<Self> {
        let dim = records.first().map(Embedding::dim).ok_or(Error::EmptyInput)?;
        Self::new(dim, records)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[Embedding<T>] {
        &self.records
    }

    pub fn into_records(self) -> Vec<Embedding<T>> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct labels, sorted lexicographically. Index in this list is the class index.
    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Embedding<T>> {
        self.records.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Embedding<T>> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn with_label<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a Embedding<T>> + 'a {
        self.records
            .iter()
            .filter(move |r| r.label.as_deref() == Some(label))
    }

    pub fn count_modality(&self, modality: Modality) -> usize {
        self.records.iter().filter(|r| r.modality == modality).count()
    }

    /// Subset of records satisfying `keep`, preserving order.
    pub fn filter(&self, keep: impl Fn(&Embedding<T>) -> bool) -> Self {
        let records: Vec<_> = self.records.iter().filter(|r| keep(r)).cloned().collect();
        Self::new(self.dim, records).expect("subset of a valid set is valid")
    }

    pub fn require_non_empty(&self) -> Result<()> {
        if self.records.is_empty() {
            Err(Error::EmptyInput)
        } else {
            Ok(())
        }
    }

    pub fn to_storage_precision(&self) -> Self {
        Self {
            dim: self.dim,
            records: self.records.iter().map(Embedding::to_storage_precision).collect(),
            vocabulary: self.vocabulary.clone(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingSet<U> {
        EmbeddingSet {
            dim: self.dim,
            records: self.records.iter().map(Embedding::cast).collect(),
            vocabulary: self.vocabulary.clone(),
        }
    }
}

impl<'a, T: Scalar> IntoIterator for &'a EmbeddingSet<T> {
    type Item = &'a Embedding<T>;
    type IntoIter = std::slice::Iter<'a, Embedding<T>>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}
