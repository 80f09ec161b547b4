//! Class prototypes: text anchors, text-guided audio prototypes (TGAP) and
//! supervised audio centroids.
//!
//! Every centroid is the arithmetic mean of its support vectors, accumulated
//! in `f64` in ascending record order, then renormalized to unit length.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{normalize_f64, unit_cosine, Embedding, EmbeddingSet, Modality};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::store;

/// Class-anchor prompt template. `{LABEL}` is replaced by the class name.
pub const DEFAULT_CLASS_TEMPLATE: &str = "This is a sound of {LABEL}";
pub const DEFAULT_TGAP_NEIGHBORS: usize = 32;
pub const SIDECAR_SCHEMA_VERSION: u32 = 1;

pub fn render_class_prompt(template: &str, label: &str) -> String {
    template.replace("{LABEL}", label)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    TextAnchor,
    Tgap,
    SupervisedCentroid,
}

impl Provenance {
    pub const ALL: [Provenance; 3] = [Provenance::TextAnchor, Provenance::Tgap, Provenance::SupervisedCentroid];

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::TextAnchor => "text_anchor",
            Provenance::Tgap => "tgap",
            Provenance::SupervisedCentroid => "supervised_centroid",
        }
    }
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prototype<T: Scalar = f64> {
    pub class_id: String,
    vector: Vec<T>,
    pub provenance: Provenance,
    pub support_count: usize,
}

impl<T: Scalar> Prototype<T> {
    pub fn vector(&self) -> &[T] {
        &self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TgapConfig {
    pub n_neighbors: usize,
}

impl Default for TgapConfig {
    fn default() -> Self {
        Self {
            n_neighbors: DEFAULT_TGAP_NEIGHBORS,
        }
    }
}

/// Normalized mean of unit vectors, summed in iteration order.
fn centroid<'a, T: Scalar>(dim: usize, vectors: impl IntoIterator<Item = &'a [T]>) -> Result<(Vec<T>, usize)> {
    let mut acc = vec![0.0f64; dim];
    let mut n = 0usize;
    for v in vectors {
        if v.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x.as_f64();
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    for a in &mut acc {
        *a /= n as f64;
    }
    Ok((normalize_f64(&acc)?, n))
}

/// Text-anchor prototype: renormalized mean of the class's prompt embeddings.
pub fn build_text_anchor<'a, T: Scalar>(
    class_id: &str,
    prompts: impl IntoIterator<Item = &'a Embedding<T>>,
) -> Result<Prototype<T>> {
    let prompts: Vec<&Embedding<T>> = prompts.into_iter().collect();
    let first = prompts.first().ok_or(Error::EmptyPromptSet)?;
    if let Some(bad) = prompts.iter().find(|p| p.modality != Modality::Text) {
        return Err(Error::Modality {
            id: bad.id.clone(),
            expected: "text",
        });
    }
    let (vector, n) = centroid(first.dim(), prompts.iter().map(|p| p.vector()))?;
    Ok(Prototype {
        class_id: class_id.to_string(),
        vector,
        provenance: Provenance::TextAnchor,
        support_count: n,
    })
}

/// What a TGAP retrieval is anchored on.
#[derive(Debug, Clone, Copy)]
pub enum TgapAnchor<'a, T: Scalar> {
    Prototype(&'a Prototype<T>),
    Text(&'a Embedding<T>),
}

impl<'a, T: Scalar> TgapAnchor<'a, T> {
    fn resolve(self) -> Result<(&'a str, &'a [T])> {
        match self {
            TgapAnchor::Prototype(p) => Ok((p.class_id.as_str(), p.vector())),
            TgapAnchor::Text(e) => {
                if e.modality != Modality::Text {
                    return Err(Error::Modality {
                        id: e.id.clone(),
                        expected: "text",
                    });
                }
                let class = e.label.as_deref().unwrap_or(e.id.as_str());
                Ok((class, e.vector()))
            }
        }
    }
}

fn check_audio_pool<T: Scalar>(pool: &EmbeddingSet<T>) -> Result<()> {
    match pool.iter().find(|r| r.modality != Modality::Audio) {
        Some(bad) => Err(Error::Modality {
            id: bad.id.clone(),
            expected: "audio",
        }),
        None => Ok(()),
    }
}

/// Indices of the `n` pool records most similar to `anchor`, returned in
/// ascending index order. Similarity ties go to the lower record index.
pub fn tgap_select<T: Scalar>(anchor: &[T], pool: &EmbeddingSet<T>, n: usize) -> Result<Vec<usize>> {
    if anchor.len() != pool.dim() {
        return Err(Error::DimMismatch {
            expected: pool.dim(),
            actual: anchor.len(),
        });
    }
    if n == 0 || n > pool.len() {
        return Err(Error::PoolTooSmall {
            requested: n,
            pool: pool.len(),
        });
    }
    let mut scored: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .map(|(i, r)| (unit_cosine(anchor, r.vector()), i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut chosen: Vec<usize> = scored[..n].iter().map(|&(_, i)| i).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Text-guided audio prototype: centroid of the `N` unlabeled pool embeddings
/// closest to the anchor. Pool labels are ignored.
pub fn build_tgap_prototype<T: Scalar>(
    anchor: TgapAnchor<'_, T>,
    pool: &EmbeddingSet<T>,
    cfg: &TgapConfig,
) -> Result<Prototype<T>> {
    let (class_id, anchor) = anchor.resolve()?;
    check_audio_pool(pool)?;
    let chosen = tgap_select(anchor, pool, cfg.n_neighbors)?;
    let records = pool.records();
    let (vector, n) = centroid(pool.dim(), chosen.iter().map(|&i| records[i].vector()))?;
    Ok(Prototype {
        class_id: class_id.to_string(),
        vector,
        provenance: Provenance::Tgap,
        support_count: n,
    })
}

/// Supervised centroid over the audio records labeled `class_id`.
pub fn build_supervised_centroid<T: Scalar>(class_id: &str, labeled: &EmbeddingSet<T>) -> Result<Prototype<T>> {
    let members = labeled
        .with_label(class_id)
        .filter(|r| r.modality == Modality::Audio)
        .map(|r| r.vector());
    let (vector, n) = match centroid(labeled.dim(), members) {
        Err(Error::EmptyInput) => return Err(Error::NoSamplesForClass(class_id.to_string())),
        other => other?,
    };
    Ok(Prototype {
        class_id: class_id.to_string(),
        vector,
        provenance: Provenance::SupervisedCentroid,
        support_count: n,
    })
}

/// One prototype per class, ordered lexicographically by class id.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet<T: Scalar = f64> {
    dim: usize,
    prototypes: Vec<Prototype<T>>,
}

impl<T: Scalar> PrototypeSet<T> {
    pub fn new(mut prototypes: Vec<Prototype<T>>) -> Result<Self> {
        let dim = prototypes.first().map(Prototype::dim).ok_or(Error::EmptyInput)?;
        prototypes.sort_by(|a, b| a.class_id.cmp(&b.class_id));
        for w in prototypes.windows(2) {
            if w[0].class_id == w[1].class_id {
                return Err(Error::InvalidSet(format!("duplicate prototype for `{}`", w[0].class_id)));
            }
        }
        if let Some(p) = prototypes.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: p.dim(),
            });
        }
        Ok(Self { dim, prototypes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn prototypes(&self) -> &[Prototype<T>] {
        &self.prototypes
    }

    pub fn class_ids(&self) -> Vec<String> {
        self.prototypes.iter().map(|p| p.class_id.clone()).collect()
    }

    pub fn get(&self, class_id: &str) -> Option<&Prototype<T>> {
        self.prototypes
            .binary_search_by(|p| p.class_id.as_str().cmp(class_id))
            .ok()
            .map(|i| &self.prototypes[i])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Prototype<T>> {
        self.prototypes.iter()
    }

    /// Round every prototype vector through `f32`, as saving would.
    pub fn to_storage_precision(&self) -> Self {
        let prototypes = self
            .prototypes
            .iter()
            .map(|p| Prototype {
                vector: p.vector.iter().map(|x| T::from_f64_lossy(x.as_f64() as f32 as f64)).collect(),
                ..p.clone()
            })
            .collect();
        Self { dim: self.dim, prototypes }
    }
}

/// Text-anchor prototypes for every label found among the text records.
pub fn build_text_anchor_set<T: Scalar>(prompts: &EmbeddingSet<T>) -> Result<PrototypeSet<T>> {
    let text = prompts.filter(|r| r.modality == Modality::Text);
    let protos = text
        .vocabulary()
        .par_iter()
        .map(|class| build_text_anchor(class, text.with_label(class)))
        .collect::<Result<Vec<_>>>()?;
    PrototypeSet::new(protos)
}

/// TGAP prototypes anchored on each prototype of `anchors`.
pub fn build_tgap_set<T: Scalar>(
    anchors: &PrototypeSet<T>,
    pool: &EmbeddingSet<T>,
    cfg: &TgapConfig,
) -> Result<PrototypeSet<T>> {
    check_audio_pool(pool)?;
    let protos = anchors
        .prototypes()
        .par_iter()
        .map(|a| build_tgap_prototype(TgapAnchor::Prototype(a), pool, cfg))
        .collect::<Result<Vec<_>>>()?;
    PrototypeSet::new(protos)
}

/// Supervised centroids for every label among the audio records.
pub fn build_supervised_set<T: Scalar>(labeled: &EmbeddingSet<T>) -> Result<PrototypeSet<T>> {
    let audio = labeled.filter(|r| r.modality == Modality::Audio);
    let protos = audio
        .vocabulary()
        .par_iter()
        .map(|class| build_supervised_centroid(class, &audio))
        .collect::<Result<Vec<_>>>()?;
    PrototypeSet::new(protos)
}

/// How the class prototypes of an experiment are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrototypeMode {
    TextAnchor,
    Tgap,
    Supervised,
}

impl PrototypeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PrototypeMode::TextAnchor => "text_anchor",
            PrototypeMode::Tgap => "tgap",
            PrototypeMode::Supervised => "supervised",
        }
    }
}

/// Build the prototype set for `mode`. TGAP anchors on the text-anchor set
/// and needs `pool`; supervised needs `labeled`.
pub fn build_prototypes<T: Scalar>(
    mode: PrototypeMode,
    class_prompts: &EmbeddingSet<T>,
    pool: Option<&EmbeddingSet<T>>,
    labeled: Option<&EmbeddingSet<T>>,
    tgap: &TgapConfig,
) -> Result<PrototypeSet<T>> {
    match mode {
        PrototypeMode::TextAnchor => build_text_anchor_set(class_prompts),
        PrototypeMode::Tgap => {
            let pool = pool.ok_or_else(|| Error::InvalidArgument("tgap prototypes need an unlabeled pool".into()))?;
            build_tgap_set(&build_text_anchor_set(class_prompts)?, pool, tgap)
        }
        PrototypeMode::Supervised => {
            let labeled =
                labeled.ok_or_else(|| Error::InvalidArgument("supervised prototypes need a labeled store".into()))?;
            build_supervised_set(labeled)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SidecarEntry {
    class_id: String,
    provenance: Provenance,
    support_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    schema_version: u32,
    prototypes: Vec<SidecarEntry>,
}

/// Sidecar path for a prototype store: `protos.atpe` -> `protos.atpe.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn record_id(class_id: &str) -> String {
    format!("prototype:{class_id}")
}

/// Write the prototypes as an ATPE store plus a JSON sidecar with provenance.
/// Returns the paths written.
pub fn save_prototypes<T: Scalar>(set: &PrototypeSet<T>, path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let records = set
        .iter()
        .map(|p| {
            let modality = match p.provenance {
                Provenance::TextAnchor => Modality::Text,
                _ => Modality::Audio,
            };
            Embedding::new(record_id(&p.class_id), modality, Some(p.class_id.clone()), p.vector.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    store::save_store(&EmbeddingSet::new(set.dim(), records)?, path)?;
    let sidecar = Sidecar {
        schema_version: SIDECAR_SCHEMA_VERSION,
        prototypes: set
            .iter()
            .map(|p| SidecarEntry {
                class_id: p.class_id.clone(),
                provenance: p.provenance,
                support_count: p.support_count,
            })
            .collect(),
    };
    let side = sidecar_path(path);
    let text = crate::report::to_canonical_json(&sidecar)?;
    fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
    Ok(vec![path.to_path_buf(), side])
}

pub fn load_prototypes<T: Scalar>(path: impl AsRef<Path>) -> Result<PrototypeSet<T>> {
    let path = path.as_ref();
    let store: EmbeddingSet<T> = store::load_store(path)?;
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::json(&side, e))?;
    if sidecar.schema_version != SIDECAR_SCHEMA_VERSION {
        return Err(Error::InvalidSet(format!(
            "unsupported prototype sidecar version {}",
            sidecar.schema_version
        )));
    }
    let classes: BTreeSet<&str> = sidecar.prototypes.iter().map(|e| e.class_id.as_str()).collect();
    if classes.len() != sidecar.prototypes.len() || classes.len() != store.len() {
        return Err(Error::InvalidSet("prototype sidecar does not match the store".into()));
    }
    let protos = sidecar
        .prototypes
        .into_iter()
        .map(|entry| {
            let rec = store
                .get(&record_id(&entry.class_id))
                .ok_or_else(|| Error::InvalidSet(format!("no stored vector for `{}`", entry.class_id)))?;
            Ok(Prototype {
                class_id: entry.class_id,
                vector: rec.vector().to_vec(),
                provenance: entry.provenance,
                support_count: entry.support_count,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PrototypeSet::new(protos)
}
